"""Linear-quadratic control: one Newton step is the whole answer.

A chain of linear dynamics with quadratic costs is a convex quadratic in the
controls, so a single exact Newton step lands on the optimum.  We check it
against the classical backward Riccati recursion.
"""
import numpy as np

from graphnewton import make_lqr_chain, sqp_solve


def riccati(A, B, Q, R, x_init, n):
    P, gains = Q.copy(), []
    for _ in range(n):
        K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
        gains.append(K)
        P = Q + A.T @ P @ (A - B @ K)
    x, us = np.asarray(x_init, float), []
    for K in reversed(gains):
        u = -K @ x
        us.append(u)
        x = A @ x + B @ u
    return np.concatenate(us)


def main():
    n = 20
    p = make_lqr_chain(n, state_dim=3, control_dim=2, seed=1)
    g, md = p.graph, p.metadata
    print(f"graph: {len(g)} nodes, {g.input_dim} control inputs")

    st = sqp_solve(g, p.x0)
    print(f"status {st.status} after {st.iterations} iteration(s), step length {st.log[0].step_length}")

    us = np.concatenate([st.x[g.input_slices[2 * i]] for i in range(n)])
    ref = riccati(md["A"], md["B"], md["Q"], md["R"], md["x_init"], n)
    print(f"max deviation from Riccati controls: {np.abs(us - ref).max():.2e}")


if __name__ == "__main__":
    main()
