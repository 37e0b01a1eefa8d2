import numpy as np
import pytest

from graphnewton.hypertree import Hypergraph
from graphnewton.mpqp import StructuredQP


def random_hypergraph(rng, max_vertices=12, max_edges=10, max_edge_size=4, max_dim=3):
    n = int(rng.integers(1, max_vertices + 1))
    ne = int(rng.integers(1, max_edges + 1))
    dims = rng.integers(1, max_dim + 1, size=n)
    edges = []
    for _ in range(ne):
        k = int(rng.integers(1, min(max_edge_size, n) + 1))
        edges.append(tuple(sorted(int(u) for u in rng.choice(n, k, replace=False))))
    return Hypergraph(n, edges, dims)


def random_qp(seed, max_vertices=12, max_dim=3, rows=True, indefinite=0.3):
    """Random hypertree QP: per-vertex singleton edges keep every vertex covered.

    ``Q`` blocks are SPD plus a symmetric perturbation of size ``indefinite``;
    each multi-vertex edge carries up to two constraint rows.
    """
    rng = np.random.default_rng(seed)
    H = random_hypergraph(rng, max_vertices=max_vertices, max_dim=max_dim)
    edges = list(H.edges) + [(u,) for u in range(H.num_vertices)]
    H = Hypergraph(H.num_vertices, edges, H.dims)
    Q, b, G, h = [], [], [], []
    for e in edges:
        k = int(sum(H.dims[u] for u in e))
        A = rng.normal(size=(k, k))
        N = rng.normal(size=(k, k))
        Q.append(A @ A.T / k + 0.1 * np.eye(k) + indefinite * (N + N.T) / 2)
        b.append(rng.normal(size=k))
        m = int(rng.integers(0, 3)) if rows and len(e) > 1 else 0
        G.append(rng.normal(size=(m, k)) if m else None)
        h.append(rng.normal(size=m) if m else None)
    return StructuredQP(H, Q, b, G, h)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


BENCH_SIZES = (100, 200, 400, 800, 1600)
BENCH_WIDTHS = (2, 4, 8)


@pytest.fixture(scope="session")
def bench_table():
    """One full ``bench`` run (chain, dense fallback and width family), shared by tests."""
    import io

    from graphnewton.cli import main

    out, err = io.StringIO(), io.StringIO()
    argv = ["bench", "--sizes", *map(str, BENCH_SIZES), "--widths", *map(str, BENCH_WIDTHS),
            "--reps", "5", "--dense", "--dense-max", str(max(BENCH_SIZES))]
    code = main(argv, out, err)
    assert code == 0, err.getvalue()
    rows = [line.split(",") for line in out.getvalue().strip().splitlines()]
    table = {}
    for fam, n, w, ms in rows[1:]:
        table[(fam, int(n))] = (int(w), float(ms))
    return rows[0], table
