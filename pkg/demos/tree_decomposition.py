"""From a computational graph to a tree decomposition.

Each node together with its parents forms a hyperedge.  A min-fill
elimination ordering yields a tree of bags; its width bounds the size of
every dense block the solver ever factorizes.
"""
import numpy as np

from graphnewton import decompose, make_banded_chain, moralize, validate
from graphnewton.hypertree import Hypergraph


def main():
    for w in (1, 2, 4, 8):
        g = make_banded_chain(40, w).graph
        h = moralize(g)
        t = decompose(h)
        print(f"bandwidth {w}: {len(t.bags)} bags, width {t.width}, valid={bool(validate(h, t))}")

    rng = np.random.default_rng(0)
    edges = [tuple(sorted(rng.choice(10, 3, replace=False).tolist())) for _ in range(8)]
    h = Hypergraph(10, edges, [1] * 10)
    t = decompose(h)
    print("\nrandom hypergraph edges:", edges)
    print(t.to_text())

    # tampering with a bag is caught by the validator
    bags = list(t.bags)
    bags[0] = frozenset(list(bags[0])[:1])
    from graphnewton.hypertree import TreeDecomposition
    print("after shrinking bag 0:", validate(h, TreeDecomposition(bags, t.tree_edges)).violation)


if __name__ == "__main__":
    main()
