"""Bundled problem families.

* ``make_lqr_chain`` -- linear dynamics with quadratic costs (closed form via
  a Riccati recursion).
* ``make_spring_damper`` -- periodic limit cycle of a cubic spring-damper.
* ``make_random_dag`` -- random smooth DAGs for property tests.
* ``make_banded_chain`` -- chains whose nodes read the previous ``w`` states,
  giving a tunable tree-width.
* ``make_rosenbrock`` -- the Rosenbrock function as a two-node graph.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .compgraph import CompGraph, ExtraConstraint, NodeDecl, build_graph
from .primitives import (Affine, ElementwisePolyCost, Polynomial, QuadraticCost, SpringDamper,
                         SpringDamperCost, SumCost)

__all__ = ["ProblemInstance", "make_lqr_chain", "make_spring_damper", "make_random_dag",
           "make_banded_chain", "make_rosenbrock", "make_problem", "PROBLEMS"]


@dataclass
class ProblemInstance:
    name: str
    graph: CompGraph
    extra: ExtraConstraint | None = None
    x0: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)
    init_scale: float = 1.0

    def initial_point(self, seed=None):
        """``x0`` when ``seed`` is None, else inputs uniform in ``[-s, s]``."""
        if seed is None and self.x0 is not None:
            return np.array(self.x0, dtype=float)
        rng = np.random.default_rng(seed)
        return rng.uniform(-self.init_scale, self.init_scale, size=self.graph.input_dim)


def _stable(rng, n, radius=0.9):
    A = rng.normal(size=(n, n))
    r = np.abs(np.linalg.eigvals(A)).max()
    return A * (radius / r) if r > 0 else A


def make_lqr_chain(n, state_dim=1, control_dim=1, seed=0, A=None, B=None,
                   Qx=None, Ru=None, x_init=None):
    """Chain ``x_{i+1} = A x_i + B u_i`` with costs ``x'Qx/2`` and ``u'Ru/2``.

    ``x_0 = x_init`` is fixed (folded into the first transition's offset);
    the controls ``u_0..u_{n-1}`` are the inputs and the states
    ``x_1..x_n`` all carry the state cost.  Node ``2i`` is ``u_i`` and node
    ``2i + 1`` is ``x_{i+1}``.
    """
    if n < 1:
        raise ValueError("horizon must be at least 1")
    rng = np.random.default_rng(seed)
    s, m = state_dim, control_dim
    A = _stable(rng, s) if A is None else np.atleast_2d(np.asarray(A, dtype=float))
    B = rng.normal(size=(s, m)) if B is None else np.atleast_2d(np.asarray(B, dtype=float))
    Qx = np.eye(s) if Qx is None else np.atleast_2d(np.asarray(Qx, dtype=float))
    Ru = np.eye(m) if Ru is None else np.atleast_2d(np.asarray(Ru, dtype=float))
    x_init = rng.normal(size=s) if x_init is None else np.atleast_1d(np.asarray(x_init, dtype=float))

    decls = []
    for i in range(n):
        u, x = 2 * i, 2 * i + 1
        decls.append(NodeDecl(u, m, (), None, QuadraticCost(Ru)))
        P = np.zeros((s + (m if i == 0 else s + m),) * 2)
        P[:s, :s] = Qx
        if i == 0:
            decls.append(NodeDecl(x, s, (u,), Affine(B, A @ x_init), QuadraticCost(P)))
        else:
            decls.append(NodeDecl(x, s, (x - 2, u), Affine(np.hstack([A, B])), QuadraticCost(P)))
    g = build_graph(decls)
    return ProblemInstance(
        name="lqr", graph=g, x0=np.zeros(g.input_dim),
        metadata={"A": A, "B": B, "Q": Qx, "R": Ru, "x_init": x_init, "n": n})


def make_spring_damper(n=100, dt=0.1, cost_variant="symmetric"):
    """Periodic limit cycle of ``x'' = -(x^3 + x'^3)/6 + u`` over ``n`` grid points.

    Inputs are ``x_0, x_1`` and the controls ``u_1..u_{n-2}``; states
    ``x_2..x_{n-1}`` follow from the two-step recursion.  The running cost of
    step ``i`` (``i = 1..n-2``) sits on node ``x_{i+1}``, whose scope holds
    ``x_{i-1}, x_i, u_i``.  Periodicity ``x_0 = x_{n-2}, x_1 = x_{n-1}`` is
    the extra constraint.

    Node ids: ``x_0 -> 0``, ``x_1 -> 1``, ``u_i -> 2i``, ``x_{i+1} -> 2i + 1``.
    """
    if n < 4:
        raise ValueError("need at least 4 grid points")

    def xid(k):
        return k if k < 2 else 2 * k - 1

    decls = [NodeDecl(0, 1), NodeDecl(1, 1)]
    step = SpringDamper(dt)
    cost = SpringDamperCost(dt, cost_variant)
    for i in range(1, n - 1):
        decls.append(NodeDecl(2 * i, 1))
        decls.append(NodeDecl(2 * i + 1, 1, (xid(i - 1), xid(i), 2 * i), step, cost))
    g = build_graph(decls)
    W = np.array([[1.0, 0.0, -1.0, 0.0], [0.0, 1.0, 0.0, -1.0]])
    extra = ExtraConstraint((0, 1, xid(n - 2), xid(n - 1)), Affine(W))
    return ProblemInstance(
        name="spring-damper", graph=g, extra=extra, x0=np.zeros(g.input_dim),
        metadata={"n": n, "dt": dt, "cost_variant": cost_variant, "state_ids": [xid(k) for k in range(n)],
                  "control_ids": [2 * i for i in range(1, n - 1)]})


def _random_cost(rng, dim, strength=1.0, poly=0.1):
    A = rng.normal(size=(dim, dim))
    P = strength * (A @ A.T / dim + 0.2 * np.eye(dim))
    q = rng.normal(size=dim)
    terms = [QuadraticCost(P, q)]
    if poly:
        coeffs = np.zeros((dim, 5))
        coeffs[:, 3] = poly * rng.normal(size=dim)
        coeffs[:, 4] = poly * rng.uniform(0.0, 1.0, size=dim)
        terms.append(ElementwisePolyCost(coeffs))
    return SumCost(terms)


def make_random_dag(num_nodes, max_parents=2, dims=2, seed=0, num_inputs=None,
                    nonlinearity=0.3, cost_prob=0.5):
    """Random smooth DAG, reproducible by ``seed``.

    The first ``num_inputs`` nodes are inputs.  Every later node ``i`` reads
    node ``i - 1`` plus up to ``max_parents - 1`` random earlier nodes, so
    ``max_parents = 1`` gives a chain.  Inputs and the last node always carry
    costs; other nodes do with probability ``cost_prob``.
    """
    rng = np.random.default_rng(seed)
    if num_inputs is None:
        num_inputs = 1 if max_parents == 1 else max(1, num_nodes // 4)
    num_inputs = min(num_inputs, num_nodes)
    dim = [int(rng.integers(1, dims + 1)) for _ in range(num_nodes)]
    decls = []
    for i in range(num_nodes):
        if i < num_inputs:
            decls.append(NodeDecl(i, dim[i], (), None, _random_cost(rng, dim[i])))
            continue
        parents = [i - 1]
        j = i - num_inputs
        if j < num_inputs - 1 and max_parents > 1:
            parents.append(j)  # give every input a child
        pool = [k for k in range(i - 1) if k not in parents]
        extra_n = min(len(pool), int(rng.integers(0, max(max_parents - len(parents), 0) + 1)))
        if extra_n:
            parents += sorted(rng.choice(pool, extra_n, replace=False).tolist())
        parents = sorted(parents)
        nin = sum(dim[p] for p in parents)
        W = rng.normal(size=(dim[i], nin)) / np.sqrt(nin)
        V = rng.normal(size=(dim[i], nin)) / np.sqrt(nin)
        coeffs = nonlinearity * rng.normal(size=(dim[i], 2))
        f = Polynomial(W, V, coeffs, 0.1 * rng.normal(size=dim[i]))
        cost = None
        if i == num_nodes - 1 or rng.random() < cost_prob:
            cost = _random_cost(rng, dim[i] + nin, strength=0.5, poly=0.0)
        decls.append(NodeDecl(i, dim[i], tuple(parents), f, cost))
    g = build_graph(decls)
    return ProblemInstance(name="random-dag", graph=g, init_scale=0.5,
                           metadata={"seed": seed, "max_parents": max_parents})


def make_banded_chain(n, bandwidth, seed=0, state_dim=1, nonlinearity=0.0):
    """Chain where state ``s_i`` reads ``s_{i-1}..s_{i-w}`` and a scalar control ``u_i``.

    Node ``2i`` is ``u_i`` and ``2i + 1`` is ``s_i``; ``s_0`` reads only
    ``u_0``.  Moralized width grows with ``bandwidth``; ``state_dim`` sets
    the size of every state.
    """
    rng = np.random.default_rng(seed)
    d = int(state_dim)
    decls = []
    for i in range(n):
        u, s = 2 * i, 2 * i + 1
        decls.append(NodeDecl(u, 1, (), None, QuadraticCost([[1.0]])))
        prev = [2 * k + 1 for k in range(max(0, i - bandwidth), i)]
        parents = tuple(prev + [u])
        nin = d * len(prev) + 1
        W = rng.normal(size=(d, nin))
        if nin > 1:
            # contractive in the previous states keeps long chains well conditioned
            W[:, :-1] *= 0.9 / np.abs(W[:, :-1]).sum(axis=1, keepdims=True)
        W[:, -1] = 1.0
        if nonlinearity:
            f = Polynomial(W, W, nonlinearity * rng.normal(size=(d, 2)))
        else:
            f = Affine(W)
        P = np.zeros((d + nin,) * 2)
        P[:d, :d] = np.eye(d)
        q = np.zeros(d + nin)
        q[:d] = 1.0
        decls.append(NodeDecl(s, d, parents, f, QuadraticCost(P, q)))
    g = build_graph(decls)
    return ProblemInstance(name="banded-chain", graph=g, x0=np.zeros(g.input_dim),
                           metadata={"n": n, "bandwidth": bandwidth, "state_dim": d})


def make_rosenbrock():
    """``(1 - x1)^2 + 100 (x2 - x1^2)^2`` with ``v = x2 - x1^2`` as an intermediate node."""
    decls = [
        NodeDecl(0, 2, (), None, ElementwisePolyCost([[1.0, -2.0, 1.0], [0.0, 0.0, 0.0]])),
        NodeDecl(1, 1, (0,), Polynomial([[0.0, 1.0]], [[1.0, 0.0]], [[-1.0]]),
                 QuadraticCost(np.diag([200.0, 0.0, 0.0]))),
    ]
    return ProblemInstance(name="rosenbrock", graph=build_graph(decls), x0=np.array([-1.2, 1.0]))


PROBLEMS = {
    "lqr": make_lqr_chain,
    "spring-damper": make_spring_damper,
    "random-dag": make_random_dag,
    "banded-chain": make_banded_chain,
    "rosenbrock": make_rosenbrock,
}


def make_problem(name, **kwargs):
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return factory(**kwargs)
