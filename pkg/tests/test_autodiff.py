import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphnewton.autodiff import dense_hessian, gradient, hessian_vector, reverse_adjoints
from graphnewton.compgraph import NodeDecl, build_graph, evaluate
from graphnewton.errors import DimensionCapExceeded, DimensionMismatch, NonFiniteAdjoint
from graphnewton.primitives import Affine, ElementwisePolyCost, FiniteDifferenceCost, QuadraticCost
from graphnewton.problems import make_random_dag, make_spring_damper

from oracles import fd_gradient, fd_graph_gradient, fd_graph_hessian, relerr


def quadratic_graph(Q, q=None):
    return build_graph([NodeDecl(0, Q.shape[0], (), None, QuadraticCost(Q, q))])


def hvp(g, x, dx):
    tr = evaluate(g, x)
    return hessian_vector(g, tr, reverse_adjoints(g, tr), dx).input_hvp


class TestReverseAdjoints:
    def test_half_square_norm(self, rng):
        x = rng.normal(size=3)
        _, grad = gradient(quadratic_graph(np.eye(3)), x)
        assert np.allclose(grad, x, rtol=0, atol=1e-15)

    def test_identity_chain(self, rng):
        k, d = 6, 2
        decls = [NodeDecl(0, d)]
        for i in range(1, k):
            P = np.zeros((2 * d, 2 * d))
            if i == k - 1:
                P[:d, :d] = np.eye(d)
            decls.append(NodeDecl(i, d, (i - 1,), Affine(np.eye(d)), QuadraticCost(P)))
        g = build_graph(decls)
        x = rng.normal(size=d)
        adj = reverse_adjoints(g, evaluate(g, x))
        for v in range(k):
            assert np.allclose(adj[v], x, rtol=0, atol=1e-14)

    @pytest.mark.parametrize("seed", range(10))
    def test_random_dag_matches_fd(self, seed):
        p = make_random_dag(10, seed=seed)
        x = p.initial_point(seed)
        _, grad = gradient(p.graph, x)
        assert relerr(grad, fd_graph_gradient(p.graph, x)) <= 1e-6

    def test_childless_nodes_start_from_own_cost(self, rng):
        p = make_random_dag(10, seed=2)
        g = p.graph
        tr = evaluate(g, p.initial_point(1))
        adj = reverse_adjoints(g, tr)
        for v in range(len(g)):
            if g.children[v]:
                continue
            c = g.nodes[v].cost
            own = c.gradients(tr.scope_states(g, v))[0] if c is not None else np.zeros(g.dims[v])
            assert np.allclose(adj[v], own, rtol=0, atol=1e-14)

    def test_non_finite_adjoint(self):
        c = FiniteDifferenceCost(lambda z: np.inf * z[0])
        g = build_graph([NodeDecl(0, 1, (), None, c)])
        with pytest.raises(NonFiniteAdjoint), np.errstate(invalid="ignore"):
            gradient(g, [1.0])

    def test_extra_multiplier_adds_constraint_gradient(self, rng):
        p = make_spring_damper(8)
        x = rng.uniform(-0.5, 0.5, p.graph.input_dim)
        mu = rng.normal(size=2)
        _, grad = gradient(p.graph, x, p.extra, mu)

        def lag(xx):
            tr = evaluate(p.graph, xx)
            return tr.objective + mu @ p.extra.residual(tr.states)
        assert relerr(grad, fd_gradient(lag, x)) <= 1e-6


class TestHessianVector:
    def test_zero_direction(self, rng):
        p = make_random_dag(10, seed=1)
        x = p.initial_point(0)
        assert np.all(hvp(p.graph, x, np.zeros(p.graph.input_dim)) == 0.0)

    def test_quadratic_exact(self, rng):
        A = rng.normal(size=(4, 4))
        Q = A @ A.T
        g = quadratic_graph(Q, rng.normal(size=4))
        dx = rng.normal(size=4)
        assert np.allclose(hvp(g, rng.normal(size=4), dx), Q @ dx, rtol=1e-14, atol=1e-14)

    @pytest.mark.parametrize("seed", range(10))
    def test_fd_of_gradient(self, seed):
        p = make_random_dag(8, seed=seed)
        g = p.graph
        rng = np.random.default_rng(seed)
        x = p.initial_point(seed)
        dx = rng.normal(size=g.input_dim)
        eps = 1e-5
        ref = (gradient(g, x + eps * dx)[1] - gradient(g, x - eps * dx)[1]) / (2 * eps)
        assert relerr(hvp(g, x, dx), ref, floor=1.0) <= 1e-4

    def test_wrong_shape(self):
        p = make_random_dag(5, seed=0)
        with pytest.raises(DimensionMismatch):
            hvp(p.graph, p.initial_point(0), np.zeros(p.graph.input_dim + 1))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10 ** 6))
    def test_symmetry_and_linearity(self, seed):
        p = make_random_dag(9, seed=seed % 997)
        g = p.graph
        rng = np.random.default_rng(seed)
        x = p.initial_point(seed)
        tr = evaluate(g, x)
        adj = reverse_adjoints(g, tr)
        u, v = rng.normal(size=(2, g.input_dim))
        Hu = hessian_vector(g, tr, adj, u).input_hvp
        Hv = hessian_vector(g, tr, adj, v).input_hvp
        uHv = u @ Hv
        assert abs(uHv - v @ Hu) <= 1e-9 * (1 + abs(uHv))
        a, b = rng.normal(size=2)
        Hw = hessian_vector(g, tr, adj, a * u + b * v).input_hvp
        assert relerr(Hw, a * Hu + b * Hv, floor=1.0) <= 1e-10

    def test_tangents_follow_transitions(self, rng):
        p = make_random_dag(10, seed=7)
        g = p.graph
        x = p.initial_point(3)
        dx = rng.normal(size=g.input_dim)
        tr = evaluate(g, x)
        res = hessian_vector(g, tr, reverse_adjoints(g, tr), dx)
        eps = 1e-6
        plus, minus = evaluate(g, x + eps * dx), evaluate(g, x - eps * dx)
        for v in range(len(g)):
            fd = (plus.states[v] - minus.states[v]) / (2 * eps)
            assert np.allclose(res.tangents[v], fd, atol=1e-7)


class TestDenseHessian:
    def test_quadratic_returns_q(self, rng):
        A = rng.normal(size=(5, 5))
        Q = A @ A.T
        H, asym = dense_hessian(quadratic_graph(Q), rng.normal(size=5))
        assert np.allclose(H, Q, rtol=1e-14, atol=1e-14)
        assert asym <= 1e-12

    def test_cubic(self):
        g = build_graph([NodeDecl(0, 1, (), None, ElementwisePolyCost([[0, 0, 0, 1.0]]))])
        H, _ = dense_hessian(g, [2.0])
        assert H[0, 0] == pytest.approx(12.0)

    def test_spring_damper_fd(self, rng):
        p = make_spring_damper(6)
        x = rng.uniform(-0.5, 0.5, p.graph.input_dim)
        H, _ = dense_hessian(p.graph, x)
        assert np.abs(H - fd_graph_hessian(p.graph, x)).max() <= 1e-3

    def test_cap(self):
        g = quadratic_graph(np.eye(6))
        with pytest.raises(DimensionCapExceeded):
            dense_hessian(g, np.zeros(6), cap=5)
