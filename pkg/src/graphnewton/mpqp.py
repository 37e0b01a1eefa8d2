"""Equality-constrained QPs with hypergraph structure, solved by message passing.

The problem family is::

    min  sum_e  1/2 x_e' Q_e x_e - b_e' x_e
    s.t. G_e x_e = h_e            for every hyperedge e

whose KKT system ``[[Q, G'], [G, 0]] [x; lam] = [b; h]`` is solved by a
leaf-to-root gather over a tree decomposition.  At every bag the interior
variables (those absent from the parent bag) are eliminated together with as
many constraint multipliers as the bordered local block allows; the Schur
complement on the separator, together with any constraint rows that could not
be eliminated, is sent to the parent.  A root-to-leaf pass back-substitutes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import (DimensionCapExceeded, RankDeficientConstraints, ResidualTooLarge,
                     SingularPivot, SingularSystem)
from .hypertree import Hypergraph, TreeDecomposition

__all__ = ["StructuredQP", "KktSolution", "Message", "BackSubstitution", "SolvePlan",
           "factorize_bag", "make_plan", "solve", "dense_kkt_solve", "dump_triplets"]

PIVOT_TOL = 1e-10
RESIDUAL_TOL = 1e-8
ROW_RCOND = 1e-6  # below this a bag defers its constraint rows to the parent when it can
DENSE_CAP = 2000
GROWTH_MAX = 1e4  # separator block growth beyond which row deferral is tried


class StructuredQP:
    """Per-edge blocks ``Q_e, b_e, G_e, h_e`` over a :class:`Hypergraph`.

    Blocks are indexed by the concatenated coordinates of the edge's vertices
    in the edge's own vertex order.  ``G`` and ``h`` entries may be ``None``
    for edges without constraint rows.
    """

    def __init__(self, hypergraph: Hypergraph, Q, b, G=None, h=None):
        self.hypergraph = hypergraph
        H = hypergraph
        ne = len(H.edges)
        dims = np.asarray(H.dims, dtype=int)
        self.offsets = np.concatenate([[0], np.cumsum(dims)]).astype(int)
        self.n = int(self.offsets[-1])
        self.edge_coords = [np.concatenate([np.arange(self.offsets[u], self.offsets[u + 1])
                                            for u in e]) for e in H.edges]
        G = [None] * ne if G is None else list(G)
        h = [None] * ne if h is None else list(h)
        if not (len(Q) == len(b) == len(G) == len(h) == ne):
            raise ValueError("need one block of each kind per hyperedge")
        self.Q, self.b, self.G, self.h = [], [], [], []
        for k in range(ne):
            d = len(self.edge_coords[k])
            Qk = np.asarray(Q[k], dtype=float)
            bk = np.asarray(b[k], dtype=float)
            if Qk.shape != (d, d) or bk.shape != (d,):
                raise ValueError(f"edge {k}: expected Q {(d, d)} and b {(d,)}")
            if d and np.abs(Qk - Qk.T).max() > 1e-12 * (1.0 + np.abs(Qk).max()):
                raise ValueError(f"edge {k}: Q block is not symmetric")
            Gk = np.zeros((0, d)) if G[k] is None else np.atleast_2d(np.asarray(G[k], dtype=float))
            hk = np.zeros(0) if h[k] is None else np.atleast_1d(np.asarray(h[k], dtype=float))
            if Gk.size == 0:
                Gk = Gk.reshape(0, d)
            if Gk.shape[1] != d or hk.shape != (Gk.shape[0],):
                raise ValueError(f"edge {k}: constraint block shape mismatch")
            self.Q.append(Qk)
            self.b.append(bk)
            self.G.append(Gk)
            self.h.append(hk)
        counts = [g.shape[0] for g in self.G]
        self.row_offsets = np.concatenate([[0], np.cumsum(counts)]).astype(int)
        self.m = int(self.row_offsets[-1])

    @property
    def size(self):
        return self.n + self.m

    def kkt_sparse(self):
        """The assembled KKT matrix (CSR) and right-hand side ``[b; h]``."""
        rows, cols, vals = [], [], []
        rhs = np.zeros(self.n + self.m)
        for k, c in enumerate(self.edge_coords):
            rows.append(np.repeat(c, len(c)))
            cols.append(np.tile(c, len(c)))
            vals.append(self.Q[k].ravel())
            rhs[c] += self.b[k]
            mk = self.G[k].shape[0]
            if mk:
                r = self.n + np.arange(self.row_offsets[k], self.row_offsets[k + 1])
                rr, cc = np.repeat(r, len(c)), np.tile(c, mk)
                g = self.G[k].ravel()
                rows += [rr, cc]
                cols += [cc, rr]
                vals += [g, g]
                rhs[r] = self.h[k]
        N = self.n + self.m
        K = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(N, N)).tocsr()
        return K, rhs

    def residual(self, x, lam):
        """Relative KKT residual ``|K z - rhs|_inf / (1 + |rhs|_inf)``."""
        K, rhs = self.kkt_sparse()
        r = K @ np.concatenate([x, lam]) - rhs
        return float(np.abs(r).max(initial=0.0) / (1.0 + np.abs(rhs).max(initial=0.0)))

    def vertex_slice(self, u):
        return slice(self.offsets[u], self.offsets[u + 1])


@dataclass
class KktSolution:
    x: np.ndarray
    lam: np.ndarray
    residual: float
    pivot_ranks: dict = field(default_factory=dict)
    offsets: np.ndarray | None = None

    def vertex(self, u):
        return self.x[self.offsets[u]:self.offsets[u + 1]]


@dataclass
class Message:
    """Separator-local data sent from bag ``source`` to its parent ``target``.

    ``coords`` are the global coordinates of the separator variables, ``rows``
    the global ids of the constraint rows passed upward.  ``R`` is the
    row-row block left by the elimination; it vanishes up to the pivot
    tolerance.
    """

    source: int
    target: int
    separator: frozenset
    coords: np.ndarray
    rows: np.ndarray
    Q: np.ndarray
    b: np.ndarray
    G: np.ndarray
    h: np.ndarray
    R: np.ndarray


@dataclass
class BackSubstitution:
    """Factorized pivot block of one bag: ``z_elim = lu \\ (rhs_elim - C z_keep)``."""

    elim: np.ndarray
    keep: np.ndarray
    lu: tuple | None
    C: np.ndarray
    rhs: np.ndarray
    scale: np.ndarray | None = None

    def solve(self, z_keep):
        if not len(self.elim):
            return np.zeros(0)
        return _scaled_solve(self.lu, self.scale, self.rhs - self.C @ z_keep)


def _getrf(A):
    lu, piv, _ = sla.lapack.dgetrf(A)
    return lu, piv


def _scaled_solve(lu, d, y):
    # A = D At D with At = lu  =>  A^{-1} y = D At^{-1} D y
    dd = d if y.ndim == 1 else d[:, None]
    return dd * sla.lu_solve(lu, dd * y, check_finite=False)


def _equilibrate(A, iters=4):
    """Symmetric Ruiz scaling ``d`` making every row of ``diag(d) A diag(d)`` have max-abs near 1."""
    d = np.ones(A.shape[0])
    absA = np.abs(A)
    # rows that are zero up to rounding stay unscaled rather than blown up
    live = absA.max(axis=1) > 1e-13 * absA.max(initial=0.0)
    for _ in range(iters):
        r = (absA * np.outer(d, d)).max(axis=1)
        r[~live] = 1.0
        d /= np.sqrt(r)
    return d


def _select_pivots(A, ni, tol, row_tol=None, min_rows=0):
    """Maximal set of linearly independent columns of the symmetric block ``A``.

    The first ``ni`` columns (interior variables) must all be taken; the
    remaining columns are ranked by a column-pivoted QR of their component
    orthogonal to the interior columns.  For a symmetric matrix the principal
    submatrix on a column basis is nonsingular, so the returned index set can
    be eliminated.  With ``row_tol`` the stricter threshold applies to the
    remaining columns, except that at least ``min_rows`` of them are taken
    whenever they clear ``tol``.  Returns ``None`` if the interior columns
    are dependent.
    """
    n = A.shape[0]
    if ni:
        Qi, Ri = sla.qr(A[:, :ni], mode="economic")
        if np.abs(np.diag(Ri)).min() <= tol:
            return None
        rest = A[:, ni:] - Qi @ (Qi.T @ A[:, ni:])
    else:
        rest = A[:, ni:]
    if n == ni:
        return np.arange(ni)
    _, Rr, perm = sla.qr(rest, mode="economic", pivoting=True)
    diag = np.abs(np.diag(Rr))
    rank = int((diag > tol).sum())
    k = rank if row_tol is None else min(rank, max(int((diag > row_tol).sum()), min_rows))
    while True:
        elim = np.concatenate([np.arange(ni), np.sort(ni + perm[:k])]).astype(int)
        if k == rank:
            return elim
        # a partial column basis need not give a nonsingular principal block
        U = _getrf(A[np.ix_(elim, elim)])[0] if len(elim) else np.ones((1, 1))
        if np.abs(np.diag(U)).min() > tol:
            return elim
        k += 1


def factorize_bag(Q, b, G, h, n_interior, R=None, pivot_tol=PIVOT_TOL, bag=None, root=False):
    """Eliminate a bag's interior variables and every eliminable constraint row.

    ``Q, b`` live on the bag coordinates ordered interior first, then
    separator; ``G, h`` are the constraint rows held by the bag (over the same
    coordinates) and ``R`` their row-row block, zero unless inherited.

    Returns ``(parts, record)`` where ``parts`` is the tuple
    ``(Q_sep, b_sep, G_kept, h_kept, R_kept, kept_rows)`` describing the
    reduced system on the separator and ``record`` the factorization needed
    for back-substitution.  Local unknowns of ``record`` are numbered
    ``[interior coords, rows, separator coords]``.
    """
    nx = Q.shape[0]
    m = G.shape[0]
    ni = int(n_interior)
    ns = nx - ni
    N = nx + m
    L = ni + m
    # local unknown order: interior, rows, separator
    K = np.zeros((N, N))
    K[:ni, :ni] = Q[:ni, :ni]
    K[:ni, L:] = Q[:ni, ni:]
    K[L:, :ni] = Q[ni:, :ni]
    K[L:, L:] = Q[ni:, ni:]
    rhs = np.empty(N)
    rhs[:ni] = b[:ni]
    rhs[L:] = b[ni:]
    if m:
        K[ni:L, :ni] = G[:, :ni]
        K[ni:L, L:] = G[:, ni:]
        K[:ni, ni:L] = G[:, :ni].T
        K[L:, ni:L] = G[:, ni:].T
        if R is not None:
            K[ni:L, ni:L] = R
        rhs[ni:L] = h

    elim = np.arange(L)
    lu = None
    d = np.ones(0)
    KLL = None
    if L:
        # pivot decisions are made on the equilibrated block so that curvature
        # and constraint rows of very different magnitude are judged alike
        d = _equilibrate(K[:L, :L])
        KLL = K[:L, :L] * np.outer(d, d)
        anorm = max(np.abs(KLL).sum(axis=1).max(), np.finfo(float).tiny)
        tol = pivot_tol * anorm
        lu = _getrf(KLL)
        ok = np.abs(np.diag(lu[0])).min() > tol
        if ok and m and not root:
            # rows that are only weakly determined here are better passed up
            rcond = sla.lapack.dgecon(lu[0], anorm, norm="I")[0]
            ok = rcond > ROW_RCOND
        if not ok:
            # pick a maximal well-determined subset of the local unknowns
            elim = _select_pivots(KLL, ni, tol, None if root else ROW_RCOND * anorm,
                                  max(m - ns, 0))
            if elim is None:
                raise SingularPivot(bag)
            lu = _getrf(KLL[np.ix_(elim, elim)]) if len(elim) else None
            d = d[elim]
    best = _reduce(K, rhs, elim, lu, d, ni, L, ns, root, bag)
    if m and not root and best[2] > GROWTH_MAX:
        # a row eliminated through a weak interior coupling inflates the
        # separator block; pass as many rows up as the separator can hold
        sel = _select_pivots(KLL, ni, tol, np.inf, max(m - ns, 0))
        if sel is not None and len(sel) < len(elim):
            dd = _equilibrate(K[np.ix_(sel, sel)])
            alt_lu = _getrf(K[np.ix_(sel, sel)] * np.outer(dd, dd)) if len(sel) else None
            if alt_lu is None or np.abs(np.diag(alt_lu[0])).min() > tol:
                alt = _reduce(K, rhs, sel, alt_lu, dd, ni, L, ns, root, bag)
                if alt[2] < best[2]:
                    best = alt
    return best[0], best[1]


def _reduce(K, rhs, elim, lu, d, ni, L, ns, root, bag):
    """Schur complement of ``K`` onto the unknowns not in ``elim``; also returns its growth."""
    N = K.shape[0]
    if len(elim) == L:
        kept_rows = np.zeros(0, dtype=int)
    else:
        kept_rows = np.setdiff1d(np.arange(ni, L), elim)
    if root and len(kept_rows):
        raise RankDeficientConstraints(
            f"bag {bag}: {len(kept_rows)} constraint row(s) could not be eliminated at the root")
    if len(kept_rows) > ns:
        raise RankDeficientConstraints(
            f"bag {bag}: {len(kept_rows)} residual rows exceed separator dimension {ns}")
    keep = np.concatenate([kept_rows, np.arange(L, N)]).astype(int)
    C = K[np.ix_(elim, keep)]
    Kkk = K[np.ix_(keep, keep)]
    rhs_e = rhs[elim]
    if len(elim):
        X = _scaled_solve(lu, d, np.column_stack([C, rhs_e]))
        S = Kkk - C.T @ X[:, :-1]
        r = rhs[keep] - C.T @ X[:, -1]
    else:
        S = Kkk
        r = rhs[keep]
    nk = len(kept_rows)
    S = 0.5 * (S + S.T)
    growth = np.abs(S).max(initial=0.0) / max(np.abs(K).max(initial=0.0), np.finfo(float).tiny)
    parts = (S[nk:, nk:], r[nk:], S[nk:, :nk].T, r[:nk], S[:nk, :nk], kept_rows - ni)
    return parts, BackSubstitution(elim, keep, lu, C, rhs_e, d), growth


class SolvePlan:
    """Symbolic part of :func:`solve`: rooting, edge-to-bag assignment, index maps.

    Depends only on the hypergraph and the decomposition, so it can be
    reused across numeric solves with the same structure.
    """

    def __init__(self, hypergraph: Hypergraph, t: TreeDecomposition, root=None):
        H = hypergraph
        self.hypergraph = hypergraph
        self.tree = t
        self.root = t.default_root if root is None else int(root)
        self.parent, self.postorder = t.rooted(self.root)
        nb = len(t.bags)
        self.children = [[] for _ in range(nb)]
        for c, p in enumerate(self.parent):
            if p >= 0:
                self.children[p].append(c)
        offsets = np.concatenate([[0], np.cumsum(H.dims)]).astype(int)

        def coords(vs):
            if not vs:
                return np.zeros(0, dtype=int)
            return np.concatenate([np.arange(offsets[u], offsets[u + 1]) for u in vs])

        bags_of = [[] for _ in range(H.num_vertices)]
        for i, bag in enumerate(t.bags):
            for u in bag:
                bags_of[u].append(i)
        self.edges_of = [[] for _ in range(nb)]
        for k, e in enumerate(H.edges):
            es = set(e)
            home = next((i for i in bags_of[e[0]] if es <= t.bags[i]), None)
            if home is None:
                raise ValueError(f"hyperedge {e} is not covered by any bag")
            self.edges_of[home].append(k)

        self.interior, self.separator = [], []
        self.coords, self.n_interior, self.local_of = [], [], []
        for i, bag in enumerate(t.bags):
            p = self.parent[i]
            sep = sorted(bag & t.bags[p]) if p >= 0 else []
            inner = sorted(bag - set(sep))
            self.interior.append(inner)
            self.separator.append(sep)
            c = np.concatenate([coords(inner), coords(sep)]).astype(int)
            self.coords.append(c)
            self.n_interior.append(len(coords(inner)))
            self.local_of.append({int(g): k for k, g in enumerate(c)})
        # where each edge's and each child's separator coordinates land locally
        self.edge_local = {}
        for i in range(nb):
            loc = self.local_of[i]
            for k in self.edges_of[i]:
                self.edge_local[k] = np.array([loc[int(g)] for g in coords(H.edges[k])], dtype=int)
        self.child_local = {}
        for c, p in enumerate(self.parent):
            if p >= 0:
                loc = self.local_of[p]
                sep_coords = self.coords[c][self.n_interior[c]:]
                self.child_local[c] = np.array([loc[int(g)] for g in sep_coords], dtype=int)


def make_plan(hypergraph, t, root=None):
    return SolvePlan(hypergraph, t, root)


def solve(qp: StructuredQP, t: TreeDecomposition, root=None, plan: SolvePlan | None = None,
          pivot_tol=PIVOT_TOL, residual_tol=RESIDUAL_TOL, keep_messages=False):
    """Solve the KKT system of ``qp`` by gather/factorize over ``t``.

    Raises :class:`SingularPivot` when some bag cannot eliminate its interior
    variables, :class:`RankDeficientConstraints` when constraint rows survive
    to the root (or overflow a separator) and :class:`ResidualTooLarge` when
    the independently recomputed KKT residual exceeds ``residual_tol``.
    """
    if plan is None:
        plan = SolvePlan(qp.hypergraph, t, root)
    n = qp.n
    messages, records, pivot_ranks = {}, {}, {}
    unknowns = {}
    for i in plan.postorder:
        nx = len(plan.coords[i])
        Qt = np.zeros((nx, nx))
        bt = np.zeros(nx)
        Gs, hs, row_ids = [], [], []
        for k in plan.edges_of[i]:
            loc = plan.edge_local[k]
            Qt[np.ix_(loc, loc)] += qp.Q[k]
            bt[loc] += qp.b[k]
            mk = qp.G[k].shape[0]
            if mk:
                g = np.zeros((mk, nx))
                g[:, loc] = qp.G[k]
                Gs.append(g)
                hs.append(qp.h[k])
                row_ids.append(np.arange(qp.row_offsets[k], qp.row_offsets[k + 1]))
        inherited = []
        for c in plan.children[i]:
            msg = messages[c]
            loc = plan.child_local[c]
            Qt[np.ix_(loc, loc)] += msg.Q
            bt[loc] += msg.b
            if len(msg.rows):
                g = np.zeros((len(msg.rows), nx))
                g[:, loc] = msg.G
                Gs.append(g)
                hs.append(msg.h)
                row_ids.append(msg.rows)
                inherited.append(msg.R)
        G = np.vstack(Gs) if Gs else np.zeros((0, nx))
        h = np.concatenate(hs) if hs else np.zeros(0)
        rows = np.concatenate(row_ids).astype(int) if row_ids else np.zeros(0, dtype=int)
        m = len(rows)
        R = None
        if inherited:
            R = np.zeros((m, m))
            start = m - sum(r.shape[0] for r in inherited)
            for r in inherited:
                k = r.shape[0]
                R[start:start + k, start:start + k] = r
                start += k
        is_root = plan.parent[i] < 0
        parts, rec = factorize_bag(Qt, bt, G, h, plan.n_interior[i], R=R,
                                   pivot_tol=pivot_tol, bag=i, root=is_root)
        records[i] = rec
        pivot_ranks[i] = len(rec.elim)
        ni = plan.n_interior[i]
        # global unknown ids in the local [interior, rows, separator] order
        unknowns[i] = np.concatenate([plan.coords[i][:ni], n + rows, plan.coords[i][ni:]]).astype(int)
        if not is_root:
            Qs, bs, Gk, hk, Rk, kept = parts
            sep = plan.separator[i]
            messages[i] = Message(source=i, target=plan.parent[i], separator=frozenset(sep),
                                  coords=plan.coords[i][ni:], rows=rows[kept],
                                  Q=Qs, b=bs, G=Gk, h=hk, R=Rk)

    z = np.zeros(n + qp.m)
    for i in reversed(plan.postorder):
        rec = records[i]
        ids = unknowns[i]
        z[ids[rec.elim]] = rec.solve(z[ids[rec.keep]])
    x, lam = z[:n], z[n:]
    res = qp.residual(x, lam)
    if not np.isfinite(res) or res > residual_tol:
        raise ResidualTooLarge(res, residual_tol)
    sol = KktSolution(x=x, lam=lam, residual=res, pivot_ranks=pivot_ranks, offsets=qp.offsets)
    if keep_messages:
        sol.messages = messages
    return sol


def dense_kkt_solve(qp: StructuredQP, cap=DENSE_CAP, residual_tol=RESIDUAL_TOL):
    """Assemble the full KKT matrix and solve it with a pivoted dense LU."""
    if qp.size > cap:
        raise DimensionCapExceeded(f"KKT size {qp.size} exceeds dense cap {cap}")
    K, rhs = qp.kkt_sparse()
    lu, piv_idx, _ = sla.lapack.dgetrf(K.toarray(), overwrite_a=True)
    lu = (lu, piv_idx)
    piv = np.abs(np.diag(lu[0]))
    if qp.size and (piv.min() == 0.0 or not np.all(np.isfinite(piv))):
        raise SingularSystem("KKT matrix is singular")
    z = sla.lu_solve(lu, rhs, check_finite=False)
    x, lam = z[:qp.n], z[qp.n:]
    res = float(np.abs(K @ z - rhs).max(initial=0.0) / (1.0 + np.abs(rhs).max(initial=0.0)))
    if not np.isfinite(res) or res > residual_tol:
        raise ResidualTooLarge(res, residual_tol)
    return KktSolution(x=x, lam=lam, residual=res, offsets=qp.offsets)


def dump_triplets(qp: StructuredQP, target):
    """Write the assembled KKT matrix in Matrix Market coordinate format."""
    K, _ = qp.kkt_sparse()
    scipy.io.mmwrite(target, K.tocoo(), comment="KKT matrix [[Q, G'], [G, 0]]")
