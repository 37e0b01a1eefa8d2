"""Hypergraphs and tree decompositions.

Decompositions are built by a min-fill elimination ordering on the 2-section
graph, read off as a clique tree and then compacted by absorbing bags that are
contained in a tree neighbour.  :func:`validate` checks the definitional
properties exhaustively plus the edge-separation property of every tree edge.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = ["Hypergraph", "TreeDecomposition", "ValidationReport",
           "adjacency", "incidence", "decompose", "validate"]


class Hypergraph:
    """Vertices ``0..num_vertices-1`` with hyperedges given as vertex tuples.

    ``dims`` gives the block size of each vertex (all ones by default).
    Edge vertex order is preserved; callers that attach dense blocks to an
    edge index them in that order.
    """

    def __init__(self, num_vertices: int, edges: Sequence[Sequence[int]], dims=None):
        self.num_vertices = int(num_vertices)
        self.edges = tuple(tuple(int(u) for u in e) for e in edges)
        for e in self.edges:
            if not e:
                raise ValueError("hyperedges must be nonempty")
            if len(set(e)) != len(e):
                raise ValueError(f"hyperedge {e} repeats a vertex")
            if min(e) < 0 or max(e) >= self.num_vertices:
                raise ValueError(f"hyperedge {e} has a vertex out of range")
        self.dims = tuple(int(d) for d in dims) if dims is not None else (1,) * self.num_vertices
        if len(self.dims) != self.num_vertices:
            raise ValueError("one dimension per vertex required")

    def __repr__(self):
        return f"Hypergraph({self.num_vertices}, {list(self.edges)})"

    def with_edges(self, extra):
        return Hypergraph(self.num_vertices, self.edges + tuple(tuple(e) for e in extra), self.dims)


def adjacency(h: Hypergraph) -> np.ndarray:
    """0/1 matrix: ``A[u, v] = 1`` iff some edge contains both ``u`` and ``v``."""
    A = np.zeros((h.num_vertices, h.num_vertices), dtype=int)
    for e in h.edges:
        idx = np.array(e)
        A[np.ix_(idx, idx)] = 1
    return A


def incidence(h: Hypergraph) -> np.ndarray:
    """0/1 matrix with one row per edge: ``B[e, u] = 1`` iff ``u`` in ``e``."""
    B = np.zeros((len(h.edges), h.num_vertices), dtype=int)
    for i, e in enumerate(h.edges):
        B[i, list(e)] = 1
    return B


@dataclass(frozen=True)
class TreeDecomposition:
    bags: tuple
    tree_edges: tuple

    def __post_init__(self):
        object.__setattr__(self, "bags", tuple(frozenset(b) for b in self.bags))
        object.__setattr__(self, "tree_edges",
                           tuple((int(a), int(b)) for a, b in self.tree_edges))

    @property
    def width(self):
        return max((len(b) for b in self.bags), default=0) - 1

    @property
    def default_root(self):
        return len(self.bags) - 1

    def neighbors(self):
        nb = [[] for _ in self.bags]
        for a, b in self.tree_edges:
            nb[a].append(b)
            nb[b].append(a)
        return [sorted(x) for x in nb]

    def rooted(self, root=None):
        """Parent array (root maps to -1) and a post-order of the bags."""
        root = self.default_root if root is None else root
        nb = self.neighbors()
        parent = [-2] * len(self.bags)
        parent[root] = -1
        order, stack = [], [root]
        while stack:
            i = stack.pop()
            order.append(i)
            for j in reversed(nb[i]):
                if parent[j] == -2:
                    parent[j] = i
                    stack.append(j)
        if len(order) != len(self.bags):
            raise ValueError("tree decomposition is not connected")
        return parent, order[::-1]

    def to_text(self):
        lines = [f"# tree decomposition: {len(self.bags)} bags, width {self.width}"]
        lines += [f"bag {i}: " + " ".join(map(str, sorted(b))) for i, b in enumerate(self.bags)]
        lines += [f"edge {a} {b}" for a, b in self.tree_edges]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        bags, edges = {}, []
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("bag"):
                head, _, rest = line.partition(":")
                bags[int(head.split()[1])] = [int(t) for t in rest.split()]
            elif line.startswith("edge"):
                _, a, b = line.split()
                edges.append((int(a), int(b)))
            else:
                raise ValueError(f"unrecognised line {raw!r}")
        if sorted(bags) != list(range(len(bags))):
            raise ValueError("bag indices must be dense")
        return cls(tuple(bags[i] for i in range(len(bags))), tuple(edges))


# ---------------------------------------------------------------------------
# construction

def _fill(adj, u):
    nb = list(adj[u])
    missing = 0
    for i, a in enumerate(nb):
        na = adj[a]
        for b in nb[i + 1:]:
            if b not in na:
                missing += 1
    return missing


def _min_fill_order(adj):
    """Greedy min-fill elimination; returns (order, clique of each vertex)."""
    n = len(adj)
    adj = [set(a) for a in adj]
    fill = [_fill(adj, u) for u in range(n)]
    heap = [(fill[u], u) for u in range(n)]
    heapq.heapify(heap)
    done = [False] * n
    order, cliques = [], [None] * n
    while heap:
        f, u = heapq.heappop(heap)
        if done[u] or f != fill[u]:
            continue
        done[u] = True
        nb = adj[u]
        cliques[u] = frozenset(nb) | {u}
        order.append(u)
        nbl = list(nb)
        for i, a in enumerate(nbl):
            adj[a].discard(u)
            for b in nbl[i + 1:]:
                adj[a].add(b)
                adj[b].add(a)
        touched = set(nbl)
        for a in nbl:
            touched |= adj[a]
        for w in touched:
            nf = _fill(adj, w)
            if nf != fill[w]:
                fill[w] = nf
                heapq.heappush(heap, (nf, w))
        adj[u] = set()
    return order, cliques


def decompose(h: Hypergraph) -> TreeDecomposition:
    """Heuristic tree decomposition of ``h`` (min-fill, ties by smallest vertex)."""
    n = h.num_vertices
    if n == 0:
        return TreeDecomposition((frozenset(),), ())
    adj = [set() for _ in range(n)]
    for e in h.edges:
        for a in e:
            adj[a].update(e)
    for u in range(n):
        adj[u].discard(u)

    order, cliques = _min_fill_order(adj)
    pos = {u: i for i, u in enumerate(order)}
    bags = [set(cliques[u]) for u in order]
    parent = [-1] * n
    for i, u in enumerate(order):
        later = [pos[w] for w in cliques[u] if w != u]
        if later:
            parent[i] = min(later)

    # absorb bags contained in a tree neighbour; the survivor keeps the parent slot
    rep = list(range(n))

    def find(i):
        while rep[i] != i:
            rep[i] = rep[rep[i]]
            i = rep[i]
        return i

    changed = True
    while changed:
        changed = False
        for i in range(n):
            if rep[i] != i or parent[i] < 0:
                continue
            p = find(parent[i])
            parent[i] = p
            if bags[i] <= bags[p] or bags[p] <= bags[i]:
                if len(bags[i]) > len(bags[p]):
                    bags[p] = bags[i]
                rep[i] = p
                changed = True

    alive = [i for i in range(n) if rep[i] == i]
    index = {i: k for k, i in enumerate(alive)}
    tree_edges = []
    roots = []
    for i in alive:
        if parent[i] < 0:
            roots.append(index[i])
        else:
            tree_edges.append((index[i], index[find(parent[i])]))
    # components share no vertices, so joining their roots keeps every property
    main = max(roots)
    tree_edges += [(r, main) for r in roots if r != main]
    return TreeDecomposition(tuple(frozenset(bags[i]) for i in alive), tuple(sorted(tree_edges)))


# ---------------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    violation: str | None = None
    witness: object = None

    def __bool__(self):
        return self.valid


def validate(h: Hypergraph, t: TreeDecomposition, check_separation=True) -> ValidationReport:
    """Check tree shape, vertex cover, edge cover, induced subtrees and edge separation.

    Returns the first violated property with a witness.
    """
    nbags = len(t.bags)
    if nbags == 0:
        return ValidationReport(False, "NotATree", None)
    if len(t.tree_edges) != nbags - 1:
        return ValidationReport(False, "NotATree", len(t.tree_edges))
    try:
        parent, post = t.rooted()
    except (ValueError, IndexError):
        return ValidationReport(False, "NotATree", t.tree_edges)

    covered = set().union(*t.bags)
    for u in range(h.num_vertices):
        if u not in covered:
            return ValidationReport(False, "VertexCoverViolation", u)
    extra = covered - set(range(h.num_vertices))
    if extra:
        return ValidationReport(False, "VertexCoverViolation", min(extra))

    bags_of = [[] for _ in range(h.num_vertices)]
    for i, b in enumerate(t.bags):
        for u in b:
            bags_of[u].append(i)
    for e in h.edges:
        cand = bags_of[e[0]]
        es = set(e)
        if not any(es <= t.bags[i] for i in cand):
            return ValidationReport(False, "EdgeCoverViolation", e)

    inner = [0] * h.num_vertices
    for a, b in t.tree_edges:
        for u in t.bags[a] & t.bags[b]:
            inner[u] += 1
    for u in range(h.num_vertices):
        if inner[u] != len(bags_of[u]) - 1:
            return ValidationReport(False, "InducedSubtreeViolation", u)

    if check_separation:
        # subtree membership through entry/exit times of a DFS on the rooted tree
        children = [[] for _ in range(nbags)]
        root = None
        for i, p in enumerate(parent):
            if p < 0:
                root = i
            else:
                children[p].append(i)
        tin, tout, clock = [0] * nbags, [0] * nbags, 0
        stack = [(root, False)]
        while stack:
            i, leaving = stack.pop()
            if leaving:
                tout[i] = clock
                continue
            tin[i] = clock
            clock += 1
            stack.append((i, True))
            stack.extend((c, False) for c in children[i])
        for c, p in enumerate(parent):
            if p < 0:
                continue
            sep = t.bags[c] & t.bags[p]
            for e in h.edges:
                sides = set()
                for u in e:
                    if u in sep:
                        continue
                    j = bags_of[u][0]
                    sides.add(tin[c] <= tin[j] < tout[c])
                if len(sides) > 1:
                    return ValidationReport(False, "EdgeSeparationViolation", (c, p))
    return ValidationReport(True)
