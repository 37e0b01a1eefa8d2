"""Reference computations used only by the tests.

Each oracle avoids the production code path it checks: finite differences
use nothing but ``evaluate``, the dense KKT solve assembles its matrix
directly from the per-edge blocks, and the Riccati recursion works on the
LQR matrices alone.
"""
import numpy as np

from graphnewton.compgraph import evaluate


def fd_gradient(fun, x, step=1e-6):
    """Central differences with steps scaled by ``|x_j| + 1``."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for j in range(x.size):
        h = step * (abs(x[j]) + 1.0)
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def fd_jacobian(fun, x, step=1e-6):
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.size):
        h = step * (abs(x[j]) + 1.0)
        e = np.zeros_like(x)
        e[j] = h
        cols.append((np.atleast_1d(fun(x + e)) - np.atleast_1d(fun(x - e))) / (2 * h))
    return np.column_stack(cols)


def objective_fn(g):
    return lambda x: evaluate(g, x).objective


def fd_graph_gradient(g, x, step=1e-6):
    return fd_gradient(objective_fn(g), x, step)


def fd_hessian(fun, x, step=1e-4):
    """Second-order central differences of a scalar function.

    One Richardson step (``h`` and ``h/2``) removes the ``O(h^2)`` term.
    """
    return (4 * _fd_hessian(fun, x, step / 2) - _fd_hessian(fun, x, step)) / 3


def _fd_hessian(f, x, step):
    x = np.asarray(x, dtype=float)
    n = x.size
    H = np.empty((n, n))
    hs = step * (np.abs(x) + 1.0)
    for i in range(n):
        for j in range(i, n):
            ei = np.zeros(n)
            ej = np.zeros(n)
            ei[i] = hs[i]
            ej[j] = hs[j]
            H[i, j] = H[j, i] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej)
                                 + f(x - ei - ej)) / (4 * hs[i] * hs[j])
    return H


def fd_graph_hessian(g, x, step=1e-4):
    """Objective Hessian over the inputs from function values only."""
    return fd_hessian(objective_fn(g), x, step)


def dense_kkt(qp):
    """Assemble ``[[Q, G'], [G, 0]]`` from the blocks with numpy and solve it."""
    n, m = qp.n, qp.m
    K = np.zeros((n + m, n + m))
    rhs = np.zeros(n + m)
    r0 = n
    for c, Q, b, G, h in zip(qp.edge_coords, qp.Q, qp.b, qp.G, qp.h):
        K[np.ix_(c, c)] += Q
        rhs[c] += b
        k = G.shape[0]
        if k:
            rows = np.arange(r0, r0 + k)
            K[np.ix_(rows, c)] = G
            K[np.ix_(c, rows)] = G.T
            rhs[rows] = h
            r0 += k
    z = np.linalg.solve(K, rhs)
    return z[:n], z[n:], K, rhs


def kkt_residual(qp, x, lam):
    """Relative residual of the block KKT equations, recomputed edge by edge."""
    top = np.zeros(qp.n)
    bot = []
    scale = 0.0
    for k, c in enumerate(qp.edge_coords):
        top[c] += qp.Q[k] @ x[c] - qp.b[k]
        scale = max(scale, np.abs(qp.b[k]).max(initial=0.0))
        G = qp.G[k]
        if G.shape[0]:
            lk = lam[qp.row_offsets[k]:qp.row_offsets[k + 1]]
            top[c] += G.T @ lk
            bot.append(G @ x[c] - qp.h[k])
            scale = max(scale, np.abs(qp.h[k]).max(initial=0.0))
    r = np.abs(np.concatenate([top] + bot)).max(initial=0.0)
    return r / (1.0 + scale)


def schur_complement(Q, ni):
    """``Q_ss - Q_si Q_ii^{-1} Q_is`` for the leading ``ni`` interior block."""
    Qii, Qis, Qss = Q[:ni, :ni], Q[:ni, ni:], Q[ni:, ni:]
    return Qss - Qis.T @ np.linalg.solve(Qii, Qis)


def riccati_lqr(A, B, Q, R, x_init, n):
    """Optimal controls and states for ``x_{k+1} = A x_k + B u_k``.

    Cost ``sum_k u_k'R u_k / 2 + x_{k+1}'Q x_{k+1} / 2`` for ``k = 0..n-1``
    with ``x_0`` fixed.
    """
    P = Q.copy()
    gains = [None] * n
    for k in range(n - 1, -1, -1):
        K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
        gains[k] = K
        P = Q + A.T @ P @ (A - B @ K)
    x = np.array(x_init, dtype=float)
    us, xs = [], []
    for k in range(n):
        u = -gains[k] @ x
        x = A @ x + B @ u
        us.append(u)
        xs.append(x)
    return us, xs


def spring_damper_cost_scalar(x_prev, x_cur, u, dt, variant="symmetric"):
    """Running cost at one grid step, written out with ``math``."""
    import math
    v = (x_cur - x_prev) / dt
    first = -(v - 2.0) ** 2 if variant == "symmetric" else (v - 2.0) ** 2
    return 1.0 - math.exp(first) - math.exp(-(v + 2.0) ** 2) + 0.5 * u * u


def spring_damper_rollout_scalar(x0, x1, controls, dt):
    """Scalar loop for the two-step recursion; ``controls`` are ``u_1..u_{n-2}``."""
    xs = [x0, x1]
    for i, u in enumerate(controls, start=1):
        a, b = xs[i - 1], xs[i]
        d = b - a
        xs.append(b + d + dt * dt * (-(b ** 3 + (d / dt) ** 3) / 6.0 + u))
    return xs


def dense_newton(g, x, H=None):
    """``-H^{-1} grad`` with the Hessian from finite differences unless given."""
    from graphnewton.autodiff import gradient
    _, grad = gradient(g, x)
    if H is None:
        H = fd_graph_hessian(g, x)
    return -np.linalg.solve(H, grad), H, grad


def relerr(a, b, floor=1e-300):
    """``|a - b|_inf / |b|_inf``; ``floor`` guards an all-zero reference."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.abs(a - b).max(initial=0.0) / max(floor, np.abs(b).max(initial=0.0)))
