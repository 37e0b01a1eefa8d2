"""Newton steps through the KKT system of the constrained reformulation.

Every non-input node ``v`` turns into the equality ``phi_v(S_pa(v)) - S_v = 0``
with multiplier ``lam_v``.  Choosing ``lam_v`` equal to the reverse-mode
adjoint of ``v`` at a feasible point makes the input block of the
Lagrange-Newton step coincide with the Newton step of the original objective,
so the step can be computed by :mod:`graphnewton.mpqp` in time linear in the
graph size.  An extra constraint ``c(S_C) = 0`` is handled by adding
``lam_c' c`` to the objective and its linearisation to the KKT system.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import mpqp
from .autodiff import reverse_adjoints
from .compgraph import CompGraph, EvalTrace, ExtraConstraint, evaluate
from .errors import (InfeasibleTrace, MissingSecondDerivative, NonFiniteState,
                     RankDeficientConstraints, SolverError)
from .hypertree import Hypergraph, decompose

__all__ = ["SolverConfig", "KktStructure", "KktAssembly", "NewtonStep", "IterationRecord",
           "SqpState", "lagrangian", "lagrangian_gradient", "assemble_kkt", "newton_step",
           "merit_eval", "sqp_solve"]

log = logging.getLogger(__name__)


@dataclass
class SolverConfig:
    eps: float = 1e-6
    max_iters: int = 100
    rho0: float = 10.0
    rho_growth: float = 10.0
    rho_max: float = 1e8
    constraint_decrease: float = 0.25
    armijo: float = 1e-4
    eta_min: float = 1e-10
    levenberg_init: float = 1e-6
    levenberg_growth: float = 10.0
    levenberg_max: float = 1e6
    pivot_tol: float = mpqp.PIVOT_TOL
    residual_tol: float = mpqp.RESIDUAL_TOL
    solver: str = "mpqp"
    dense_cap: int = mpqp.DENSE_CAP
    dump_tree: str | None = None
    shift_states: bool = True
    adaptive_shift: bool = False

    def __post_init__(self):
        if self.solver not in ("mpqp", "dense"):
            raise ValueError(f"unknown KKT solver {self.solver!r}")

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown solver option(s): {', '.join(sorted(unknown))}")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return dataclasses.asdict(self)


class KktStructure:
    """Symbolic layout shared by every KKT system of one graph.

    Edges: a singleton ``(x,)`` per input (gradient, input cost, Levenberg
    shift), ``{v} + parents(v)`` per non-input node (transition rows, its
    curvature and the node's cost), and the extra-constraint scope if any.
    """

    def __init__(self, g: CompGraph, extra: ExtraConstraint | None = None, root=None):
        self.graph = g
        self.extra = extra
        edges, self.node_edge = [], {}
        for v in g.order:
            self.node_edge[v] = len(edges)
            edges.append((v,) if not g.nodes[v].parents else g.scope(v))
        self.extra_edge = None
        if extra is not None:
            self.extra_edge = len(edges)
            edges.append(extra.scope)
        self.hypergraph = Hypergraph(len(g), edges, g.dims)
        self.decomposition = decompose(self.hypergraph)
        if root is None:
            root = self._upstream_root()
        self.plan = mpqp.make_plan(self.hypergraph, self.decomposition, root)

    def _upstream_root(self):
        # Rooting at the topologically earliest bag makes the gather run from
        # the sinks back to the inputs, so every state is eliminated in the
        # same bag as its own transition rows (coefficient -I) rather than
        # through a child's weak Jacobian coupling.
        pos = {v: i for i, v in enumerate(self.graph.order)}
        bags = self.decomposition.bags
        return min(range(len(bags)), key=lambda i: (min(pos[v] for v in bags[i]),
                                                    max(pos[v] for v in bags[i]), i))

    @property
    def width(self):
        return self.decomposition.width


@dataclass
class KktAssembly:
    qp: mpqp.StructuredQP
    structure: KktStructure
    grad_lagrangian: list
    multipliers: list
    constraint: np.ndarray | None = None


@dataclass
class NewtonStep:
    dx: np.ndarray
    dS: list
    dlam: list
    dlam_c: np.ndarray | None
    predicted_decrease: float
    slope: float
    shift: float
    solution: mpqp.KktSolution
    solve_ms: float = 0.0
    curvature: float = 0.0

    @property
    def descent(self):
        return self.slope < 0


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    grad_norm: float
    constraint_norm: float
    step_length: float
    solve_ms: float
    shift: float = 0.0
    merit: float | None = None


@dataclass
class SqpState:
    x: np.ndarray
    lam_c: np.ndarray | None
    iterations: int = 0
    log: list = field(default_factory=list)
    status: str = "Running"
    objective: float = float("nan")
    grad_norm: float = float("nan")
    constraint_norm: float = 0.0
    rho: float | None = None
    width: int | None = None

    @property
    def converged(self):
        return self.status == "Converged"


# ---------------------------------------------------------------------------
# Lagrangian

def lagrangian(g: CompGraph, states, lam, extra=None, lam_c=None):
    """Constrained-form Lagrangian at arbitrary (possibly infeasible) states."""
    total = 0.0
    for v in g.order:
        node = g.nodes[v]
        if node.cost is not None:
            total += node.cost(np.concatenate([states[a] for a in g.scope(v)]))
        if node.parents:
            hv = node.transition(np.concatenate([states[p] for p in node.parents])) - states[v]
            total += float(lam[v] @ hv)
    if extra is not None and lam_c is not None:
        total += float(np.asarray(lam_c) @ extra.residual(states))
    return total


def lagrangian_gradient(g: CompGraph, trace: EvalTrace, lam, extra=None, lam_c=None):
    """Per-node gradient of the Lagrangian with respect to every state."""
    grad = [np.zeros(d) for d in g.dims]
    for v in g.order:
        node = g.nodes[v]
        if node.cost is not None:
            for a, ga in zip(g.scope(v), node.cost.gradients(trace.scope_states(g, v))):
                grad[a] += ga
        if node.parents:
            for p, J in zip(node.parents, trace.jacobians(g, v)):
                grad[p] += J.T @ lam[v]
            grad[v] -= lam[v]
    if extra is not None and lam_c is not None:
        r = extra.jacobian(trace.states).T @ np.asarray(lam_c, dtype=float)
        start = 0
        for v in extra.scope:
            grad[v] += r[start:start + g.dims[v]]
            start += g.dims[v]
    return grad


# ---------------------------------------------------------------------------
# assembly and a single step

def assemble_kkt(g: CompGraph, trace: EvalTrace, adj, extra: ExtraConstraint | None = None,
                 lam_c=None, structure: KktStructure | None = None, shift=0.0,
                 shift_states=False) -> KktAssembly:
    """Build the structured QP whose solution is the Lagrange-Newton step.

    ``adj`` must be the adjoints of ``f + lam_c' c`` at ``trace``; they are
    used as the transition multipliers.  ``shift`` adds ``shift * I`` to the
    curvature of every input block.
    """
    if structure is None:
        structure = KktStructure(g, extra)
    lam = list(adj.adjoints) if hasattr(adj, "adjoints") else list(adj)
    if extra is not None and lam_c is None:
        lam_c = np.zeros(extra.rows)
    grad = lagrangian_gradient(g, trace, lam, extra, lam_c)
    H = structure.hypergraph
    Q, b, G, h = [None] * len(H.edges), [None] * len(H.edges), [None] * len(H.edges), \
        [None] * len(H.edges)
    for v in g.order:
        node = g.nodes[v]
        k = structure.node_edge[v]
        d = node.dim
        try:
            if not node.parents:
                Qk = node.cost.hessian(trace.states[v]) if node.cost is not None else np.zeros((d, d))
                Q[k] = Qk + shift * np.eye(d) if shift else Qk
                b[k] = -grad[v]
                continue
            zpa = np.concatenate(trace.parent_states(g, v))
            npa = len(zpa)
            Qk = np.zeros((d + npa, d + npa))
            Qk[d:, d:] = node.transition.hessian_contract(zpa, lam[v])
            if node.cost is not None:
                Qk += node.cost.hessian(np.concatenate(trace.scope_states(g, v)))
            if shift and shift_states:
                Qk[:d, :d] += shift * np.eye(d)
        except NotImplementedError as exc:
            raise MissingSecondDerivative(f"node {v}: {exc}") from exc
        resid = node.transition(zpa) - trace.states[v]
        if np.abs(resid).max() > 1e-12 * (1.0 + np.abs(trace.states[v]).max()):
            raise InfeasibleTrace(f"node {v}: state does not match its transition")
        Q[k] = 0.5 * (Qk + Qk.T)
        rhs = np.zeros(d + npa)
        rhs[:d] = -grad[v]
        b[k] = rhs
        G[k] = np.hstack([-np.eye(d)] + trace.jacobians(g, v))
        h[k] = -resid
    c = None
    if extra is not None:
        k = structure.extra_edge
        c = extra.residual(trace.states)
        Qk = extra.hessian_contract(trace.states, lam_c)
        Q[k] = 0.5 * (Qk + Qk.T)
        b[k] = np.zeros(Qk.shape[0])
        G[k] = extra.jacobian(trace.states)
        h[k] = -c
    qp = mpqp.StructuredQP(H, Q, b, G, h)
    return KktAssembly(qp=qp, structure=structure, grad_lagrangian=grad, multipliers=lam,
                       constraint=c)


def _solve_assembly(asm: KktAssembly, cfg: SolverConfig):
    if cfg.solver == "dense":
        return mpqp.dense_kkt_solve(asm.qp, cap=cfg.dense_cap, residual_tol=cfg.residual_tol)
    st = asm.structure
    return mpqp.solve(asm.qp, st.decomposition, plan=st.plan, pivot_tol=cfg.pivot_tol,
                      residual_tol=cfg.residual_tol)


def _step_from_assembly(g, asm, cfg, shift):
    t0 = time.perf_counter()
    sol = _solve_assembly(asm, cfg)
    ms = 1e3 * (time.perf_counter() - t0)
    qp, st = asm.qp, asm.structure
    dS = [sol.vertex(v).copy() for v in range(len(g))]
    dlam = [None] * len(g)
    for v in g.order:
        if g.nodes[v].parents:
            k = st.node_edge[v]
            dlam[v] = sol.lam[qp.row_offsets[k]:qp.row_offsets[k + 1]].copy()
    dlam_c = None
    if st.extra_edge is not None:
        k = st.extra_edge
        dlam_c = sol.lam[qp.row_offsets[k]:qp.row_offsets[k + 1]].copy()
    dx = g.flatten_inputs(dS)
    gx = g.flatten_inputs(asm.grad_lagrangian)
    curv = sum(float(sol.x[c] @ Qk @ sol.x[c]) for c, Qk in zip(qp.edge_coords, qp.Q))
    slope = float(gx @ dx)
    return NewtonStep(dx=dx, dS=dS, dlam=dlam, dlam_c=dlam_c,
                      predicted_decrease=-(slope + 0.5 * curv), slope=slope, shift=shift,
                      solution=sol, solve_ms=ms, curvature=curv)


def newton_step(g: CompGraph, x, extra: ExtraConstraint | None = None, lam_c=None,
                cfg: SolverConfig | None = None, structure: KktStructure | None = None,
                shift=0.0) -> NewtonStep:
    """Newton direction at inputs ``x`` (Lagrange-Newton when ``extra`` is given).

    The step's ``descent`` flag is false when the input gradient of the
    Lagrangian has a nonnegative inner product with the direction.
    """
    cfg = cfg or SolverConfig()
    tr = evaluate(g, x)
    if extra is not None and lam_c is None:
        lam_c = np.zeros(extra.rows)
    adj = reverse_adjoints(g, tr, extra, lam_c)
    asm = assemble_kkt(g, tr, adj, extra, lam_c, structure, shift)
    return _step_from_assembly(g, asm, cfg, shift)


def merit_eval(objective, c, lam_c, rho):
    """Augmented-Lagrangian merit ``f + lam_c' c + rho/2 |c|^2``."""
    c = np.asarray(c, dtype=float)
    return float(objective + np.asarray(lam_c, dtype=float) @ c + 0.5 * rho * (c @ c))


# ---------------------------------------------------------------------------
# SQP driver

def _inf(v):
    return float(np.abs(v).max(initial=0.0))


def _shifts(cfg, start=0.0):
    if start < cfg.levenberg_init:
        yield 0.0
    mu = min(max(start, cfg.levenberg_init), cfg.levenberg_max)
    while mu <= cfg.levenberg_max * (1 + 1e-12):
        yield mu
        mu *= cfg.levenberg_growth


def sqp_solve(g: CompGraph, x0, extra: ExtraConstraint | None = None,
              cfg: SolverConfig | None = None, lam_c0=None) -> SqpState:
    """Damped Newton / SQP iterations until the first-order conditions hold to ``eps``.

    Without ``extra`` this is Newton's method with Armijo backtracking on the
    objective; with it, the line search runs on the augmented-Lagrangian
    merit and ``lam_c`` moves with the same step length as the inputs.
    A singular bag pivot or a non-descent direction triggers retries with an
    increasing diagonal shift on the input blocks.
    """
    cfg = cfg or SolverConfig()
    structure = KktStructure(g, extra)
    if cfg.dump_tree:
        with open(cfg.dump_tree, "w") as fh:
            fh.write(structure.decomposition.to_text())
    x = np.array(g.flatten_inputs(g.split_inputs(x0)), dtype=float)
    constrained = extra is not None
    lam_c = None
    if constrained:
        lam_c = np.zeros(extra.rows) if lam_c0 is None else np.array(lam_c0, dtype=float)
    state = SqpState(x=x, lam_c=lam_c, width=structure.width,
                     rho=cfg.rho0 if constrained else None)
    rho = cfg.rho0

    def point(xv, lc):
        tr = evaluate(g, xv)
        adj = reverse_adjoints(g, tr, extra, lc)
        c = extra.residual(tr.states) if constrained else np.zeros(0)
        return tr, adj, c

    tr, adj, c = point(x, lam_c)
    gnorm = _inf(adj.input_gradient(g))

    def finish(status):
        state.x, state.lam_c = x, lam_c
        state.status = status
        state.objective, state.grad_norm, state.constraint_norm = tr.objective, gnorm, _inf(c)
        state.rho = rho if constrained else None
        return state

    mu_start = 0.0
    for it in range(cfg.max_iters):
        if max(gnorm, _inf(c)) <= cfg.eps:
            return finish("Converged")
        step, slope = None, None
        for mu in _shifts(cfg, mu_start):
            try:
                asm = assemble_kkt(g, tr, adj, extra, lam_c, structure, mu, cfg.shift_states)
                cand = _step_from_assembly(g, asm, cfg, mu)
            except SolverError as exc:
                log.debug("iteration %d: shift %.1e failed: %s", it, mu, exc)
                continue
            if cand.curvature <= 0 and mu < cfg.levenberg_max:
                continue  # model not convex along the step
            if not constrained:
                if cand.slope < 0:
                    step, slope = cand, cand.slope
                    break
                continue
            # directional derivative of the merit along (dx, dlam_c)
            cc = float(c @ c)
            d0 = cand.slope + float(c @ cand.dlam_c)
            dm = d0 - rho * cc
            if dm >= 0 and cc > 0:
                rho = min(cfg.rho_max, max(rho * cfg.rho_growth, 2.0 * d0 / cc))
                dm = d0 - rho * cc
            if dm < 0:
                step, slope = cand, dm
                break
        if step is None:
            log.info("iteration %d: no usable direction", it)
            return finish("SolverError")

        if constrained:
            m0 = merit_eval(tr.objective, c, lam_c, rho)
        else:
            m0 = tr.objective
        eta = 1.0
        accepted = None
        while eta >= cfg.eta_min:
            xn = x + eta * step.dx
            ln = lam_c + eta * step.dlam_c if constrained else None
            try:
                trn = evaluate(g, xn)
            except NonFiniteState:
                eta *= 0.5
                continue
            if constrained:
                cn = extra.residual(trn.states)
                mn = merit_eval(trn.objective, cn, ln, rho)
            else:
                mn = trn.objective
            if np.isfinite(mn) and mn <= m0 + cfg.armijo * eta * slope:
                accepted = (xn, ln, mn)
                break
            eta *= 0.5
        if accepted is None:
            return finish("LineSearchFailed")

        c_old = _inf(c)
        if cfg.adaptive_shift:
            if eta == 1.0:
                mu_start = step.shift / cfg.levenberg_growth
            elif eta < 0.25:
                mu_start = max(step.shift * cfg.levenberg_growth, cfg.levenberg_init)
            else:
                mu_start = step.shift
        x, lam_c, merit = accepted
        tr, adj, c = point(x, lam_c)
        gnorm = _inf(adj.input_gradient(g))
        if constrained and _inf(c) > cfg.eps and _inf(c) > cfg.constraint_decrease * c_old:
            rho = min(cfg.rho_max, rho * cfg.rho_growth)
        state.iterations = it + 1
        state.log.append(IterationRecord(
            iteration=it + 1, objective=tr.objective, grad_norm=gnorm,
            constraint_norm=_inf(c), step_length=eta, solve_ms=step.solve_ms,
            shift=step.shift, merit=merit if constrained else None))
    if max(gnorm, _inf(c)) <= cfg.eps:
        return finish("Converged")
    return finish("MaxIters")
