import io
import time

import numpy as np
import pytest
import scipy.io
from hypothesis import given, settings, strategies as st

from graphnewton.errors import (DimensionCapExceeded, RankDeficientConstraints, ResidualTooLarge,
                                SingularPivot, SingularSystem)
from graphnewton.hypertree import Hypergraph, TreeDecomposition, decompose
from graphnewton.mpqp import (StructuredQP, dense_kkt_solve, dump_triplets, factorize_bag,
                              make_plan, solve)

from conftest import random_qp
from oracles import dense_kkt, kkt_residual, schur_complement


def single(Q, b, G=None, h=None, dims=None):
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    k = Q.shape[0]
    dims = dims or [1] * k
    H = Hypergraph(len(dims), [tuple(range(len(dims)))], dims)
    return StructuredQP(H, [Q], [np.asarray(b, dtype=float)], [G], [h])


def both(qp):
    return solve(qp, decompose(qp.hypergraph)), dense_kkt_solve(qp)


def chain_qp(n, d=2, seed=0):
    """Chain of ``n`` vertices with edge QPs and one coupling row per edge."""
    rng = np.random.default_rng(seed)
    edges = [(i, i + 1) for i in range(n - 1)]
    Q, b, G, h = [], [], [], []
    for _ in edges:
        A = rng.normal(size=(2 * d, 2 * d))
        Q.append(A @ A.T / d + np.eye(2 * d))
        b.append(rng.normal(size=2 * d))
        G.append(rng.normal(size=(1, 2 * d)))
        h.append(rng.normal(size=1))
    return StructuredQP(Hypergraph(n, edges, [d] * n), Q, b, G, h)


class TestSmallSystems:
    def test_scalar(self):
        for sol in both(single([[2.0]], [4.0])):
            assert sol.x == pytest.approx([2.0])

    def test_one_constraint(self):
        qp = single(np.eye(2), [1.0, 1.0], [[1.0, 1.0]], [0.0])
        for sol in both(qp):
            assert np.allclose(sol.x, [0.0, 0.0], atol=1e-14)
            assert np.allclose(sol.lam, [1.0], atol=1e-14)

    def test_diagonal(self):
        k = 7
        qp = single(np.diag(np.arange(1.0, k + 1)), np.ones(k))
        for sol in both(qp):
            assert np.allclose(sol.x, 1.0 / np.arange(1, k + 1), rtol=1e-14)

    def test_solve_and_dense_agree_on_examples(self):
        qps = [single([[2.0]], [4.0]),
               single(np.eye(2), [1.0, 1.0], [[1.0, 1.0]], [0.0]),
               single(np.diag([1.0, 2.0, 3.0]), np.ones(3))]
        for qp in qps:
            a, b = both(qp)
            assert np.array_equal(a.x.round(14), b.x.round(14))

    def test_vertex_view(self):
        qp = single(np.eye(3), [1.0, 2.0, 3.0], dims=[1, 2])
        sol = solve(qp, decompose(qp.hypergraph))
        assert np.allclose(sol.vertex(1), [2.0, 3.0])


class TestErrors:
    def test_singular_pivot(self):
        qp = single([[0.0]], [1.0])
        with pytest.raises(SingularPivot):
            solve(qp, decompose(qp.hypergraph))
        with pytest.raises(SingularSystem):
            dense_kkt_solve(qp)

    def test_rank_deficient_rows(self):
        qp = single(np.eye(2), [1.0, 1.0], [[1.0, 1.0], [2.0, 2.0]], [0.0, 0.0])
        with pytest.raises(RankDeficientConstraints):
            solve(qp, decompose(qp.hypergraph))

    def test_ill_conditioned_residual(self):
        rng = np.random.default_rng(2)
        U, _ = np.linalg.qr(rng.normal(size=(2, 2)))
        Q = 1e3 * U @ np.diag([1.0, 1e-10]) @ U.T
        qp = single(Q, rng.normal(size=2))
        with pytest.raises(ResidualTooLarge):
            dense_kkt_solve(qp)

    def test_dense_cap(self):
        qp = single(np.eye(3), np.ones(3))
        with pytest.raises(DimensionCapExceeded):
            dense_kkt_solve(qp, cap=2)

    def test_asymmetric_block_rejected(self):
        with pytest.raises(ValueError):
            single([[1.0, 2.0], [0.0, 1.0]], [0.0, 0.0])

    def test_block_shape_checked(self):
        H = Hypergraph(2, [(0, 1)])
        with pytest.raises(ValueError):
            StructuredQP(H, [np.eye(3)], [np.zeros(3)])


class TestFactorizeBag:
    def test_no_interior_passes_through(self, rng):
        A = rng.normal(size=(3, 3))
        Q = A + A.T
        b = rng.normal(size=3)
        G = rng.normal(size=(1, 3))
        h = rng.normal(size=1)
        (Qs, bs, Gk, hk, Rk, kept), rec = factorize_bag(Q, b, G, h, 0)
        # the single row has no interior column to pair with, so it goes up unchanged
        assert np.allclose(Qs, Q) and np.allclose(bs, b)
        assert np.allclose(Gk, G) and np.allclose(hk, h)
        assert np.allclose(Rk, 0.0)
        assert len(rec.elim) == 0

    def test_schur_complement(self, rng):
        A = rng.normal(size=(5, 5))
        Q = A @ A.T + np.eye(5)
        b = rng.normal(size=5)
        (Qs, bs, Gk, _, _, kept), _ = factorize_bag(Q, b, np.zeros((0, 5)), np.zeros(0), 2)
        assert np.allclose(Qs, schur_complement(Q, 2), rtol=1e-12, atol=1e-12)
        assert np.allclose(bs, b[2:] - Q[2:, :2] @ np.linalg.solve(Q[:2, :2], b[:2]))
        assert len(kept) == 0

    def test_pure_constraint_pivot(self):
        # vertex 0 carries no curvature; the row x0 + x1 = 1 is its only pivot
        H = Hypergraph(3, [(0, 1), (1, 2)])
        Q = [np.diag([0.0, 1.0]), np.eye(2)]
        b = [np.zeros(2), np.array([1.0, 2.0])]
        G = [np.array([[1.0, 1.0]]), None]
        h = [np.array([1.0]), None]
        qp = StructuredQP(H, Q, b, G, h)
        t = TreeDecomposition(({0, 1}, {1, 2}), ((0, 1),))
        sol = solve(qp, t, root=1)
        x, lam, _, _ = dense_kkt(qp)
        assert np.allclose(sol.x, x, atol=1e-12) and np.allclose(sol.lam, lam, atol=1e-12)
        assert sol.pivot_ranks[0] == 2  # interior x0 plus the row

    def test_indefinite_interior(self):
        # saddle interior block: invertible but not definite
        Q = np.array([[0.0, 1.0, 0.3], [1.0, 0.0, 0.2], [0.3, 0.2, 2.0]])
        b = np.array([1.0, -1.0, 0.5])
        (Qs, bs, *_), _ = factorize_bag(Q, b, np.zeros((0, 3)), np.zeros(0), 2)
        assert np.allclose(Qs, schur_complement(Q, 2))


class TestRandomQPs:
    @settings(max_examples=150, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1))
    def test_oracle_equivalence(self, seed):
        qp = random_qp(seed)
        try:
            x, lam, K, _ = dense_kkt(qp)
        except np.linalg.LinAlgError:
            return
        if np.linalg.cond(K) > 1e8:
            return
        sol = solve(qp, decompose(qp.hypergraph))
        assert np.abs(sol.x - x).max() <= 1e-8 * (1 + np.abs(x).max())
        assert kkt_residual(qp, sol.x, sol.lam) <= 1e-8

    def test_messages_local_and_rank_capped(self):
        checked = 0
        for seed in range(60):
            qp = random_qp(seed)
            t = decompose(qp.hypergraph)
            try:
                sol = solve(qp, t, keep_messages=True)
            except (SingularPivot, RankDeficientConstraints, ResidualTooLarge):
                continue
            plan = make_plan(qp.hypergraph, t)
            for c, msg in sol.messages.items():
                sep = t.bags[c] & t.bags[plan.parent[c]]
                assert msg.separator == sep
                want = np.concatenate([np.arange(qp.offsets[u], qp.offsets[u + 1])
                                       for u in sorted(sep)]) if sep else np.zeros(0)
                assert sorted(msg.coords.tolist()) == sorted(want.tolist())
                assert msg.Q.shape == (len(want), len(want))
                assert len(msg.rows) <= len(want)
                assert msg.G.shape == (len(msg.rows), len(want))
            checked += 1
        assert checked >= 40

    def test_bag_relabelling_gives_same_answer(self):
        for seed in range(20):
            qp = random_qp(seed)
            t = decompose(qp.hypergraph)
            perm = np.random.default_rng(seed).permutation(len(t.bags))
            inv = np.argsort(perm)
            t2 = TreeDecomposition(tuple(t.bags[i] for i in perm),
                                   tuple((int(inv[a]), int(inv[b])) for a, b in t.tree_edges))
            root = int(inv[t.default_root])
            try:
                a = solve(qp, t)
            except (SingularPivot, RankDeficientConstraints, ResidualTooLarge):
                continue
            b = solve(qp, t2, root=root)
            assert np.allclose(a.x, b.x, rtol=1e-10, atol=1e-10)

    def test_any_root(self):
        qp = chain_qp(12)
        t = decompose(qp.hypergraph)
        ref = dense_kkt_solve(qp)
        for r in range(len(t.bags)):
            assert np.allclose(solve(qp, t, root=r).x, ref.x, atol=1e-10)


class TestScaling:
    def test_chain_linear_time(self):
        def timed(n):
            qp = chain_qp(n)
            t = decompose(qp.hypergraph)
            plan = make_plan(qp.hypergraph, t)
            best = np.inf
            for _ in range(5):
                t0 = time.perf_counter()
                solve(qp, t, plan=plan)
                best = min(best, time.perf_counter() - t0)
            return best
        small, large = timed(200), timed(3200)
        ratio = large / small / 16
        assert 1 / 1.5 <= ratio <= 1.5, ratio


def test_dump_triplets(tmp_path):
    qp = chain_qp(5)
    path = tmp_path / "kkt.mtx"
    dump_triplets(qp, str(path))
    K = scipy.io.mmread(str(path)).toarray()
    _, _, Kref, _ = dense_kkt(qp)
    assert np.allclose(K, Kref)
    buf = io.BytesIO()
    dump_triplets(qp, buf)
    assert buf.getvalue().startswith(b"%%MatrixMarket")
