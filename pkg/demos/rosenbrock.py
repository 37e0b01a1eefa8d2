"""The Rosenbrock valley as a three-node graph.

Starting from (-1.2, 1) the Hessian is indefinite in places, so the solver
adds a Levenberg shift when the Newton direction is not a descent direction,
and the line search shortens steps until the iterates reach the valley floor.
"""
from graphnewton import SolverConfig, make_rosenbrock, sqp_solve


def main():
    p = make_rosenbrock()
    st = sqp_solve(p.graph, p.x0, cfg=SolverConfig(eps=1e-8))
    print(" it   objective      |grad|     step   shift")
    for r in st.log:
        print(f"{r.iteration:3d}  {r.objective:.4e}  {r.grad_norm:.2e}  {r.step_length:.3f}  {r.shift:.0e}")
    print(f"{st.status}: x = {st.x}")


if __name__ == "__main__":
    main()
