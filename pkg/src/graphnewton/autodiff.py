"""Reverse-mode adjoints and forward/backward Hessian-vector products on a graph.

Both routines walk the graph once per direction.  An optional extra
constraint ``c(S_C)`` enters as the additional cost ``mu' c(S_C)`` for a given
multiplier ``mu``; this is how the Lagrangian of the constrained problem is
differentiated.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .compgraph import CompGraph, EvalTrace, ExtraConstraint, evaluate
from .errors import DimensionCapExceeded, DimensionMismatch, NonFiniteAdjoint
from .primitives import split_blocks

__all__ = ["AdjointSet", "HvpResult", "reverse_adjoints", "hessian_vector",
           "dense_hessian", "gradient", "DENSE_HESSIAN_CAP"]

DENSE_HESSIAN_CAP = 512


@dataclass
class AdjointSet:
    """Total derivatives ``d f / d S_v`` for every node, at ``point``."""

    adjoints: list
    point: np.ndarray

    def __getitem__(self, v):
        return self.adjoints[v]

    def input_gradient(self, g: CompGraph):
        return g.flatten_inputs(self.adjoints)


@dataclass
class HvpResult:
    """Output of :func:`hessian_vector`.

    ``input_hvp`` is the flat Hessian-vector product over the inputs;
    ``tangents`` holds the forward tangents of every node and ``dadjoints``
    the first-order change of every adjoint.
    """

    input_hvp: np.ndarray
    tangents: list
    dadjoints: list


def _extra_scope_states(trace, extra):
    return [trace.states[v] for v in extra.scope]


def reverse_adjoints(g: CompGraph, trace: EvalTrace, extra: ExtraConstraint | None = None,
                     multiplier=None) -> AdjointSet:
    """Propagate adjoints backwards through the graph.

    With ``extra`` and ``multiplier`` given, differentiates
    ``f + multiplier' c`` instead of ``f``.
    """
    adj = [np.zeros(d) for d in g.dims]
    if extra is not None and multiplier is not None:
        J = extra.jacobian(trace.states)
        contrib = J.T @ np.asarray(multiplier, dtype=float)
        for v, s in zip(extra.scope, split_blocks([g.dims[v] for v in extra.scope])):
            adj[v] += contrib[s]
    for v in reversed(g.order):
        node = g.nodes[v]
        if node.cost is not None:
            scope = g.scope(v)
            for a, ga in zip(scope, node.cost.gradients(trace.scope_states(g, v))):
                adj[a] += ga
        if not np.all(np.isfinite(adj[v])):
            raise NonFiniteAdjoint(f"adjoint of node {v} is not finite")
        if node.parents:
            for p, J in zip(node.parents, trace.jacobians(g, v)):
                adj[p] += J.T @ adj[v]
    return AdjointSet(adjoints=adj, point=trace.point.copy())


def hessian_vector(g: CompGraph, trace: EvalTrace, adj: AdjointSet, dx,
                   extra: ExtraConstraint | None = None, multiplier=None) -> HvpResult:
    """Second-order adjoint sweep: ``H dx`` for the inputs, plus all node tangents."""
    dx = np.asarray(dx, dtype=float)
    if dx.shape != (g.input_dim,):
        raise DimensionMismatch(f"tangent has shape {dx.shape}, expected ({g.input_dim},)")
    tan = [None] * len(g)
    for v in g.order:
        node = g.nodes[v]
        if not node.parents:
            tan[v] = dx[g.input_slices[v]].copy()
        else:
            t = np.zeros(node.dim)
            for p, J in zip(node.parents, trace.jacobians(g, v)):
                t += J @ tan[p]
            tan[v] = t

    dadj = [np.zeros(d) for d in g.dims]
    if extra is not None and multiplier is not None:
        Hc = extra.hessian_contract(trace.states, np.asarray(multiplier, dtype=float))
        r = Hc @ np.concatenate([tan[v] for v in extra.scope])
        for v, s in zip(extra.scope, split_blocks([g.dims[v] for v in extra.scope])):
            dadj[v] += r[s]
    for v in reversed(g.order):
        node = g.nodes[v]
        if node.cost is not None:
            scope = g.scope(v)
            H = node.cost.hessian(np.concatenate(trace.scope_states(g, v)))
            r = H @ np.concatenate([tan[a] for a in scope])
            for a, s in zip(scope, split_blocks([g.dims[a] for a in scope])):
                dadj[a] += r[s]
        if node.parents:
            Hphi = node.transition.hessian_contract(
                np.concatenate(trace.parent_states(g, v)), adj[v])
            r = Hphi @ np.concatenate([tan[p] for p in node.parents])
            sl = split_blocks([g.dims[p] for p in node.parents])
            for p, J, s in zip(node.parents, trace.jacobians(g, v), sl):
                dadj[p] += J.T @ dadj[v] + r[s]
    return HvpResult(input_hvp=g.flatten_inputs(dadj), tangents=tan, dadjoints=dadj)


def gradient(g: CompGraph, x, extra=None, multiplier=None):
    """Objective value and flat input gradient at ``x``."""
    tr = evaluate(g, x)
    adj = reverse_adjoints(g, tr, extra, multiplier)
    return tr.objective, adj.input_gradient(g)


def dense_hessian(g: CompGraph, x, cap=DENSE_HESSIAN_CAP, extra=None, multiplier=None):
    """Input Hessian assembled column by column from Hessian-vector products.

    Returns ``(H, asymmetry)`` with ``H`` symmetrised and ``asymmetry`` the
    infinity norm of the unsymmetrised difference ``H - H'``.
    """
    n = g.input_dim
    if n > cap:
        raise DimensionCapExceeded(f"input dimension {n} exceeds dense Hessian cap {cap}")
    tr = evaluate(g, x)
    adj = reverse_adjoints(g, tr, extra, multiplier)
    H = np.empty((n, n))
    e = np.zeros(n)
    for j in range(n):
        e[j] = 1.0
        H[:, j] = hessian_vector(g, tr, adj, e, extra, multiplier).input_hvp
        e[j] = 0.0
    asym = float(np.abs(H - H.T).sum(axis=1).max(initial=0.0))
    return 0.5 * (H + H.T), asym
