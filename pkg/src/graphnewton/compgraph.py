"""Computational graphs: declaration, validation, evaluation and moralization.

A graph is a DAG whose parentless nodes are the *inputs*.  Every other node
``v`` holds a state computed by its transition from the concatenated parent
states, and any node may carry a local cost on ``{v} + parents(v)``.  The
objective is the sum of the local costs.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (CycleDetected, DanglingParent, DimensionMismatch, GraphError,
                     MissingTransition, NonFiniteState)
from .hypertree import Hypergraph
from .primitives import LocalCost, NodeFunction

__all__ = ["NodeDecl", "CompGraph", "EvalTrace", "ExtraConstraint",
           "build_graph", "evaluate", "moralize"]


@dataclass(frozen=True)
class NodeDecl:
    id: int
    dim: int
    parents: tuple = ()
    transition: NodeFunction | None = None
    cost: LocalCost | None = None

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(int(p) for p in self.parents))


@dataclass(frozen=True)
class ExtraConstraint:
    """An additional equality ``c(S_C) = 0`` over an arbitrary node set ``C``.

    ``function`` follows the :class:`NodeFunction` contract with the
    concatenated scope states as its argument.
    """

    scope: tuple
    function: NodeFunction

    def __post_init__(self):
        object.__setattr__(self, "scope", tuple(int(v) for v in self.scope))
        if len(set(self.scope)) != len(self.scope):
            raise GraphError("extra constraint scope has repeated nodes")

    @property
    def rows(self):
        return self.function.out_dim

    def _z(self, states):
        return np.concatenate([states[v] for v in self.scope])

    def residual(self, states):
        return np.asarray(self.function(self._z(states)), dtype=float)

    def jacobian(self, states):
        return self.function.jacobian(self._z(states))

    def hessian_contract(self, states, w):
        return self.function.hessian_contract(self._z(states), w)


class CompGraph:
    """Validated, immutable computational graph.  Build with :func:`build_graph`."""

    def __init__(self, nodes, order):
        self.nodes = tuple(nodes)
        self.order = tuple(order)
        self.inputs = tuple(v.id for v in self.nodes if not v.parents)
        children = [[] for _ in self.nodes]
        for v in self.nodes:
            for p in v.parents:
                children[p].append(v.id)
        self.children = tuple(tuple(c) for c in children)
        self.dims = tuple(v.dim for v in self.nodes)
        self.input_dims = tuple(self.dims[x] for x in self.inputs)
        offsets = np.concatenate([[0], np.cumsum(self.input_dims)]).astype(int)
        self.input_slices = {x: slice(offsets[i], offsets[i + 1])
                             for i, x in enumerate(self.inputs)}
        self.input_dim = int(offsets[-1])

    def __len__(self):
        return len(self.nodes)

    def scope(self, v):
        """Argument nodes of the local cost at ``v``: the node, then its parents."""
        return (v,) + self.nodes[v].parents

    def split_inputs(self, x):
        """Normalise an input assignment to ``{input id: vector}``."""
        if isinstance(x, Mapping):
            out = {}
            for v in self.inputs:
                if v not in x:
                    raise DimensionMismatch(f"no value supplied for input node {v}")
                out[v] = np.atleast_1d(np.asarray(x[v], dtype=float))
        else:
            flat = np.atleast_1d(np.asarray(x, dtype=float))
            if flat.ndim != 1 or flat.size != self.input_dim:
                raise DimensionMismatch(
                    f"flat input has size {flat.size}, graph expects {self.input_dim}")
            out = {v: flat[self.input_slices[v]].copy() for v in self.inputs}
        for v, s in out.items():
            if s.shape != (self.dims[v],):
                raise DimensionMismatch(f"input {v} has shape {s.shape}, expected ({self.dims[v]},)")
        return out

    def flatten_inputs(self, per_node):
        """Concatenate per-node vectors of the input nodes in input order."""
        if not self.inputs:
            return np.zeros(0)
        return np.concatenate([np.asarray(per_node[v], dtype=float) for v in self.inputs])


@dataclass
class EvalTrace:
    """States and objective at one input point, plus a derivative cache."""

    states: list
    objective: float
    point: np.ndarray
    adjoints: list | None = None
    _jac: dict = field(default_factory=dict, repr=False)

    def parent_states(self, g, v):
        return [self.states[p] for p in g.nodes[v].parents]

    def scope_states(self, g, v):
        return [self.states[a] for a in g.scope(v)]

    def jacobians(self, g, v):
        """Per-parent Jacobian blocks of node ``v``'s transition (cached)."""
        J = self._jac.get(v)
        if J is None:
            J = g.nodes[v].transition.jacobians(self.parent_states(g, v))
            self._jac[v] = J
        return J


def build_graph(decls: Sequence[NodeDecl]) -> CompGraph:
    """Validate declarations and fix a topological order (ties by smallest id)."""
    decls = sorted(decls, key=lambda d: d.id)
    n = len(decls)
    if [d.id for d in decls] != list(range(n)):
        raise GraphError("node ids must be dense in [0, n)")
    indeg = [0] * n
    kids = [[] for _ in range(n)]
    for d in decls:
        if d.dim < 1:
            raise GraphError(f"node {d.id}: dim must be positive")
        if len(set(d.parents)) != len(d.parents):
            raise GraphError(f"node {d.id}: repeated parent")
        for p in d.parents:
            if p == d.id:
                raise CycleDetected(f"node {d.id} lists itself as a parent")
            if not 0 <= p < n:
                raise DanglingParent(f"node {d.id}: parent {p} does not exist")
            kids[p].append(d.id)
            indeg[d.id] += 1
        if d.parents and d.transition is None:
            raise MissingTransition(f"node {d.id} has parents but no transition")
        if not d.parents and d.transition is not None:
            raise GraphError(f"input node {d.id} cannot have a transition")

    heap = [v for v in range(n) if indeg[v] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        v = heapq.heappop(heap)
        order.append(v)
        for c in kids[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(heap, c)
    if len(order) != n:
        stuck = min(v for v in range(n) if indeg[v] > 0)
        raise CycleDetected(f"cycle through node {stuck}")
    if not n:
        raise GraphError("graph has no nodes")

    for d in decls:
        f = d.transition
        if f is None:
            continue
        in_dim = sum(decls[p].dim for p in d.parents)
        if getattr(f, "in_dim", in_dim) != in_dim or getattr(f, "out_dim", d.dim) != d.dim:
            raise DimensionMismatch(
                f"node {d.id}: transition maps R^{f.in_dim} -> R^{f.out_dim}, "
                f"graph needs R^{in_dim} -> R^{d.dim}")
    return CompGraph(decls, order)


def evaluate(g: CompGraph, x) -> EvalTrace:
    """Forward pass: all states in topological order and the summed objective."""
    inputs = g.split_inputs(x)
    states = [None] * len(g)
    for v in g.order:
        node = g.nodes[v]
        if not node.parents:
            s = inputs[v]
        else:
            s = np.atleast_1d(np.asarray(
                node.transition(np.concatenate([states[p] for p in node.parents])), dtype=float))
            if s.shape != (node.dim,):
                raise DimensionMismatch(f"node {v}: transition returned shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise NonFiniteState(f"node {v} has a non-finite state")
        states[v] = s
    total = 0.0
    for v in g.order:
        c = g.nodes[v].cost
        if c is not None:
            total += c(np.concatenate([states[a] for a in g.scope(v)]))
    return EvalTrace(states=states, objective=float(total), point=g.flatten_inputs(inputs))


def moralize(g: CompGraph, extra_scopes=()) -> Hypergraph:
    """Hypergraph with one edge per transition scope and one per cost scope.

    ``extra_scopes`` appends further edges, e.g. for an extra constraint.
    """
    edges = []
    for v in g.order:
        node = g.nodes[v]
        if node.parents:
            edges.append(g.scope(v))
        if node.cost is not None:
            edges.append(g.scope(v))
    edges.extend(tuple(s) for s in extra_scopes)
    return Hypergraph(len(g), edges, g.dims)
