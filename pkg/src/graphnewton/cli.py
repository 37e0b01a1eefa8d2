"""Command-line front end.

``graphnewton run`` solves one problem and writes the iteration log as CSV;
``graphnewton bench`` times single Newton steps across problem sizes and
widths.  Exit codes: 0 converged, 2 iteration limit, 3 bad input, 4 solver
failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import statistics
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import textformat
from .errors import (DimensionMismatch, GraphError, GraphNewtonError, ParseError)
from .newton import KktStructure, SolverConfig, newton_step, sqp_solve
from .problems import make_banded_chain, make_lqr_chain, make_problem

__all__ = ["RunReport", "CSV_HEADER", "BENCH_HEADER", "read_report", "main"]

CSV_HEADER = ("iter", "objective", "grad_norm", "constraint_norm", "step_length", "solve_ms")
BENCH_HEADER = ("family", "n", "width", "median_ms")
EXIT = {"Converged": 0, "MaxIters": 2, "LineSearchFailed": 4, "SolverError": 4}
INPUT_ERRORS = (ParseError, GraphError, DimensionMismatch, OSError, ValueError)


@dataclass
class RunReport:
    rows: list
    status: str
    width: int | None = None
    timings: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([int(r[0])] + [repr(float(v)) for v in r[1:]])
        return buf.getvalue()

    @classmethod
    def from_state(cls, state, timings=None):
        rows = [(r.iteration, r.objective, r.grad_norm, r.constraint_norm, r.step_length, r.solve_ms)
                for r in state.log]
        return cls(rows=rows, status=state.status, width=state.width, timings=dict(timings or {}))


def read_report(text) -> list:
    """Parse the CSV written by ``run`` back into a list of row tuples."""
    reader = csv.reader(io.StringIO(text))
    header = tuple(next(reader))
    if header != CSV_HEADER:
        raise ParseError(f"unexpected CSV header {header}")
    return [(int(r[0]),) + tuple(float(v) for v in r[1:]) for r in reader if r]


# ---------------------------------------------------------------------------

def _problem_from_args(a):
    if a.problem_file:
        return textformat.load(a.problem_file)
    kw = {}
    if a.problem == "lqr":
        kw = {"n": a.n or 20, "seed": a.seed}
    elif a.problem == "spring-damper":
        kw = {"n": a.n or 100, "dt": a.dt, "cost_variant": a.cost_variant}
    elif a.problem == "random-dag":
        kw = {"num_nodes": a.n or 10, "seed": a.seed}
    elif a.problem == "banded-chain":
        kw = {"n": a.n or 50, "bandwidth": a.width, "seed": a.seed}
    return make_problem(a.problem, **kw)


def _config_from_args(a):
    cfg = SolverConfig.from_json(a.config).to_dict() if a.config else {}
    if a.eps is not None:
        cfg["eps"] = a.eps
    if a.max_iters is not None:
        cfg["max_iters"] = a.max_iters
    if a.dump_tree:
        cfg["dump_tree"] = a.dump_tree
    return SolverConfig.from_dict(cfg)


def _initial_point(p, a):
    if p.x0 is not None and (a.problem_file or p.name != "spring-damper"):
        return p.initial_point()
    return p.initial_point(a.seed)


def cmd_run(a, out, err):
    try:
        p = _problem_from_args(a)
        cfg = _config_from_args(a)
        x0 = _initial_point(p, a)
    except INPUT_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=err)
        return 3

    try:
        if a.dense_oracle:
            x0v = p.graph.flatten_inputs(p.graph.split_inputs(x0))
            lam_c = np.zeros(p.extra.rows) if p.extra is not None else None
            s_tree = newton_step(p.graph, x0v, p.extra, lam_c, cfg)
            dense_cfg = SolverConfig.from_dict({**cfg.to_dict(), "solver": "dense", "dump_tree": None})
            s_dense = newton_step(p.graph, x0v, p.extra, lam_c, dense_cfg)
            dev = float(np.abs(s_tree.dx - s_dense.dx).max(initial=0.0))
            print(f"dense-oracle max deviation: {dev:.3e}", file=out)
        t0 = time.perf_counter()
        state = sqp_solve(p.graph, x0, p.extra, cfg)
        total = 1e3 * (time.perf_counter() - t0)
    except INPUT_ERRORS[:3] as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=err)
        return 3
    except GraphNewtonError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=err)
        return 4

    solve_ms = sum(r.solve_ms for r in state.log)
    rep = RunReport.from_state(state, {"total_ms": total, "kkt_solve_ms": solve_ms})
    text = rep.to_csv()
    if a.out:
        with open(a.out, "w") as fh:
            fh.write(text)
    print(f"status={state.status} iterations={state.iterations} objective={state.objective:.10g} "
          f"grad_norm={state.grad_norm:.3e} constraint_norm={state.constraint_norm:.3e} "
          f"width={state.width} total_ms={total:.1f} kkt_solve_ms={solve_ms:.1f}", file=out)
    code = EXIT[state.status]
    if code:
        print(f"error: solver finished with status {state.status}", file=err)
    return code


def time_newton_step(p, solver="mpqp", reps=5):
    """Median wall time (ms) of one Newton step at the problem's reference point."""
    cfg = SolverConfig(solver=solver, dense_cap=10 ** 9)
    structure = KktStructure(p.graph, p.extra)
    x = p.initial_point() if p.x0 is not None else p.initial_point(0)
    newton_step(p.graph, x, p.extra, None, cfg, structure)  # warm-up, untimed
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        newton_step(p.graph, x, p.extra, None, cfg, structure)
        times.append(1e3 * (time.perf_counter() - t0))
    return statistics.median(times), structure.width


def cmd_bench(a, out, err):
    rows = []
    try:
        for n in a.sizes:
            p = make_lqr_chain(n, state_dim=a.state_dim, control_dim=a.control_dim, seed=a.seed)
            for solver in (["mpqp", "dense"] if a.dense else ["mpqp"]):
                if solver == "dense" and n > a.dense_max:
                    continue
                ms, w = time_newton_step(p, solver, a.reps)
                rows.append(("chain" if solver == "mpqp" else "chain-dense", n, w, ms))
        for wdt in a.widths:
            p = make_banded_chain(a.width_n, wdt, seed=a.seed, state_dim=a.width_state_dim)
            ms, w = time_newton_step(p, "mpqp", a.reps)
            rows.append((f"band{wdt}", a.width_n, w, ms))
    except GraphNewtonError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=err)
        return 4
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(BENCH_HEADER)
    for fam, n, w, ms in rows:
        wr.writerow([fam, n, w, f"{ms:.4f}"])
    if a.out:
        with open(a.out, "w") as fh:
            fh.write(buf.getvalue())
    out.write(buf.getvalue())
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="graphnewton", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="solve one problem")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--problem", choices=["lqr", "spring-damper", "random-dag", "rosenbrock",
                                           "banded-chain"])
    src.add_argument("--problem-file", help="problem document (JSON)")
    r.add_argument("--n", type=int, help="problem size (horizon, grid points or node count)")
    r.add_argument("--dt", type=float, default=0.1)
    r.add_argument("--width", type=int, default=2, help="bandwidth for banded-chain")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--eps", type=float)
    r.add_argument("--max-iters", type=int)
    r.add_argument("--config", help="JSON file of solver options")
    r.add_argument("--dump-tree", help="write the tree decomposition to this path")
    r.add_argument("--dense-oracle", action="store_true",
                   help="compare the first step against a dense KKT solve")
    r.add_argument("--out", help="CSV path for the iteration log")
    r.add_argument("--cost-variant", choices=["symmetric", "paper"], default="symmetric")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("bench", help="time Newton steps across sizes and widths")
    b.add_argument("--sizes", type=int, nargs="+", default=[100, 200, 400, 800, 1600])
    b.add_argument("--widths", type=int, nargs="*", default=[2, 4, 8])
    b.add_argument("--width-n", type=int, default=200)
    b.add_argument("--state-dim", type=int, default=4)
    b.add_argument("--width-state-dim", type=int, default=4)
    b.add_argument("--control-dim", type=int, default=1)
    b.add_argument("--reps", type=int, default=5)
    b.add_argument("--dense", action="store_true", help="also time the dense fallback")
    b.add_argument("--dense-max", type=int, default=800)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv=None, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    a = build_parser().parse_args(argv)
    return a.func(a, out, err)


if __name__ == "__main__":
    sys.exit(main())
