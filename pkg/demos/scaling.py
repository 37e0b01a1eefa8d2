"""Cost of one Newton step: message passing against a dense solve.

The chain family has constant width, so the structured solve grows linearly
with the number of nodes while forming and factorizing the dense Hessian does
not.  Larger sizes make the gap dramatic but take minutes for the dense path.
"""
import numpy as np

from graphnewton import make_banded_chain, make_lqr_chain
from graphnewton.cli import time_newton_step


def main(sizes=(50, 100, 200, 400), reps=3):
    print("    n   mpqp ms   dense ms")
    mp, dn = [], []
    for n in sizes:
        p = make_lqr_chain(n, state_dim=4, control_dim=1, seed=0)
        a, _ = time_newton_step(p, "mpqp", reps)
        b, _ = time_newton_step(p, "dense", reps)
        mp.append(a)
        dn.append(b)
        print(f"{n:5d}  {a:8.1f}  {b:9.1f}")
    ln = np.log(sizes)
    print(f"fitted exponents: mpqp {np.polyfit(ln, np.log(mp), 1)[0]:.2f}, "
          f"dense {np.polyfit(ln, np.log(dn), 1)[0]:.2f}")

    print("\nwidth sweep at n = 200:")
    for w in (2, 4, 8):
        ms, width = time_newton_step(make_banded_chain(200, w, state_dim=4), "mpqp", reps)
        print(f"  bandwidth {w}: decomposition width {width}, {ms:.1f} ms")


if __name__ == "__main__":
    main()
