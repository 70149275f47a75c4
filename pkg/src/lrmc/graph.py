"""Bipartite observation graphs.

A bipartite graph records which matrix entries are revealed: the edge (i, j)
means entry (i, j) is observed.  This module builds graphs from explicit edge
lists, samples the two random ensembles used by the experiment harness
(regular bipartite and Erdos-Renyi augmentation), and answers the structural
queries the solvers and diagnostics need (degrees, connectivity, diameter,
and the directed-edge dual graph).

Graphs are immutable after construction and safe to share across worker
processes.
"""

from __future__ import annotations

from collections import deque
from functools import cached_property

import numpy as np

__all__ = [
    "GraphError",
    "BipartiteGraph",
    "DualGraph",
    "gen_random_regular_bipartite",
    "gen_er_edges",
    "union",
    "is_connected",
    "diameter",
    "max_degree",
    "build_dual_graph",
    "write_edge_list",
    "read_edge_list",
]

# Wholesale resampling of the matching union is cheap for the small degrees
# used here; the cap only guards against hopeless parameter choices.
_MAX_REGULAR_ATTEMPTS = 200_000


class GraphError(ValueError):
    """A structural precondition on a graph operation was violated."""


class BipartiteGraph:
    """Simple bipartite graph on ``n_rows`` row and ``n_cols`` column vertices.

    Edges are deduplicated and stored sorted by (row, col).  ``rows[e]`` and
    ``cols[e]`` give the endpoints of edge ``e``; that edge ordering is the
    canonical one used for per-edge data (observed values, messages).
    """

    def __init__(self, n_rows: int, n_cols: int, edges) -> None:
        if n_rows < 0 or n_cols < 0:
            raise GraphError("vertex counts must be non-negative")
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            if edges[:, 0].min() < 0 or edges[:, 0].max() >= n_rows:
                raise GraphError("row index out of range")
            if edges[:, 1].min() < 0 or edges[:, 1].max() >= n_cols:
                raise GraphError("column index out of range")
        edges = np.unique(edges, axis=0)
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.rows = edges[:, 0].copy()
        self.cols = edges[:, 1].copy()
        self.n_edges = int(edges.shape[0])

        self.row_degrees = np.bincount(self.rows, minlength=n_rows)
        self.col_degrees = np.bincount(self.cols, minlength=n_cols)

        # CSR-style layout caches.  Edges are already grouped by row; a
        # stable lexsort by (col, row) groups them by column.
        self.row_indptr = np.concatenate(([0], np.cumsum(self.row_degrees)))
        self.col_order = np.lexsort((self.rows, self.cols))
        self.col_indptr = np.concatenate(([0], np.cumsum(self.col_degrees)))
        # Rank of each edge within its row group / column group.
        self.row_slot = np.arange(self.n_edges) - self.row_indptr[self.rows]
        col_rank = np.empty(self.n_edges, dtype=np.int64)
        col_rank[self.col_order] = np.arange(self.n_edges) - np.repeat(
            self.col_indptr[:-1], self.col_degrees
        )
        self.col_slot = col_rank

        for arr in (self.rows, self.cols, self.row_degrees, self.col_degrees,
                    self.row_indptr, self.col_indptr, self.col_order,
                    self.row_slot, self.col_slot):
            arr.setflags(write=False)

    @cached_property
    def edge_set(self) -> frozenset:
        return frozenset(zip(self.rows.tolist(), self.cols.tolist()))

    def row_neighbors(self, i: int) -> np.ndarray:
        """Sorted column indices adjacent to row vertex ``i``."""
        return self.cols[self.row_indptr[i]:self.row_indptr[i + 1]]

    def col_neighbors(self, j: int) -> np.ndarray:
        """Sorted row indices adjacent to column vertex ``j``."""
        sel = self.col_order[self.col_indptr[j]:self.col_indptr[j + 1]]
        return self.rows[sel]

    def row_edge_ids(self, i: int) -> np.ndarray:
        """Edge ids incident to row vertex ``i`` (sorted by column)."""
        return np.arange(self.row_indptr[i], self.row_indptr[i + 1])

    def col_edge_ids(self, j: int) -> np.ndarray:
        """Edge ids incident to column vertex ``j`` (sorted by row)."""
        return self.col_order[self.col_indptr[j]:self.col_indptr[j + 1]]

    def min_degree(self) -> int:
        if self.n_rows + self.n_cols == 0:
            return 0
        parts = []
        if self.n_rows:
            parts.append(self.row_degrees.min())
        if self.n_cols:
            parts.append(self.col_degrees.min())
        return int(min(parts))

    def edge_array(self) -> np.ndarray:
        return np.column_stack((self.rows, self.cols))

    def __eq__(self, other) -> bool:
        if not isinstance(other, BipartiteGraph):
            return NotImplemented
        return (self.n_rows == other.n_rows and self.n_cols == other.n_cols
                and np.array_equal(self.rows, other.rows)
                and np.array_equal(self.cols, other.cols))

    def __repr__(self) -> str:
        return (f"BipartiteGraph(n_rows={self.n_rows}, n_cols={self.n_cols}, "
                f"n_edges={self.n_edges})")


def gen_random_regular_bipartite(n: int, d: int, seed) -> BipartiteGraph:
    """Uniformly random simple d-regular bipartite graph on n + n vertices.

    Permutation model: the union of ``d`` independent uniformly random
    perfect matchings, resampled wholesale whenever two matchings share an
    edge.  ``d == n`` forces the complete graph and is returned directly.
    """
    if not 1 <= d <= n:
        raise GraphError(f"degree d={d} must satisfy 1 <= d <= n={n}")
    if d == n:
        rows = np.repeat(np.arange(n), n)
        cols = np.tile(np.arange(n), n)
        return BipartiteGraph(n, n, np.column_stack((rows, cols)))
    rng = np.random.default_rng(seed)
    for _ in range(_MAX_REGULAR_ATTEMPTS):
        matchings = np.stack([rng.permutation(n) for _ in range(d)])
        hit = np.sort(matchings, axis=0)
        if d > 1 and np.any(hit[1:] == hit[:-1]):
            continue  # parallel edge: some row matched twice to one column
        rows = np.tile(np.arange(n), d)
        return BipartiteGraph(n, n, np.column_stack((rows, matchings.reshape(-1))))
    raise GraphError(
        f"failed to sample a simple {d}-regular bipartite graph on {n}+{n} "
        f"vertices after {_MAX_REGULAR_ATTEMPTS} attempts"
    )


def gen_er_edges(n: int, c: float, seed) -> np.ndarray:
    """Edge set where each of the n^2 pairs appears independently with
    probability c/n.  Returned as a (k, 2) array sorted by (row, col)."""
    if not 0 <= c <= n:
        raise GraphError(f"expected degree c={c} must satisfy 0 <= c <= n={n}")
    rng = np.random.default_rng(seed)
    mask = rng.random((n, n)) < c / n if n else np.zeros((0, 0), dtype=bool)
    rows, cols = np.nonzero(mask)
    return np.column_stack((rows, cols)).astype(np.int64)


def union(g: BipartiteGraph, extra) -> BipartiteGraph:
    """Graph with edge set E(g) union ``extra`` (deduplicated)."""
    extra = np.asarray(extra, dtype=np.int64).reshape(-1, 2)
    if extra.size:
        if extra[:, 0].min() < 0 or extra[:, 0].max() >= g.n_rows:
            raise GraphError("extra edge row index out of range")
        if extra[:, 1].min() < 0 or extra[:, 1].max() >= g.n_cols:
            raise GraphError("extra edge column index out of range")
    combined = np.concatenate((g.edge_array(), extra), axis=0)
    return BipartiteGraph(g.n_rows, g.n_cols, combined)


def _adjacency(g: BipartiteGraph) -> list:
    """Joint adjacency lists: vertices 0..n_rows-1 are rows, the rest columns."""
    adj = [[] for _ in range(g.n_rows + g.n_cols)]
    for i, j in zip(g.rows.tolist(), g.cols.tolist()):
        adj[i].append(g.n_rows + j)
        adj[g.n_rows + j].append(i)
    return adj


def is_connected(g: BipartiteGraph) -> bool:
    """True iff both sides form a single connected component.

    Any isolated vertex (degree 0) makes the graph disconnected.
    """
    total = g.n_rows + g.n_cols
    if total == 0:
        return True
    if g.n_edges == 0:
        return False
    if (g.n_rows and g.row_degrees.min() == 0) or (g.n_cols and g.col_degrees.min() == 0):
        return False
    adj = _adjacency(g)
    seen = np.zeros(total, dtype=bool)
    queue = deque([0])
    seen[0] = True
    count = 1
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if not seen[w]:
                seen[w] = True
                count += 1
                queue.append(w)
    return count == total


def diameter(g: BipartiteGraph) -> int:
    """Exact diameter via breadth-first search from every vertex.

    Raises GraphError on disconnected input (including isolated vertices).
    """
    if not is_connected(g):
        raise GraphError("diameter is undefined for a disconnected graph")
    adj = _adjacency(g)
    total = g.n_rows + g.n_cols
    best = 0
    dist = np.empty(total, dtype=np.int64)
    for src in range(total):
        dist.fill(-1)
        dist[src] = 0
        queue = deque([src])
        far = 0
        while queue:
            v = queue.popleft()
            dv = dist[v]
            for w in adj[v]:
                if dist[w] < 0:
                    dist[w] = dv + 1
                    if dv + 1 > far:
                        far = dv + 1
                    queue.append(w)
        if far > best:
            best = far
    return int(best)


def max_degree(g: BipartiteGraph) -> int:
    """Maximum degree over all row and column vertices (0 for no edges)."""
    if g.n_edges == 0:
        return 0
    return int(max(g.row_degrees.max(), g.col_degrees.max()))


class DualGraph:
    """Graph on the directed edges of a base bipartite graph.

    One dual vertex per directed edge: the row->col copy of base edge ``e``
    and the col->row copy of base edge ``e``.  A row->col edge (i, j) and a
    col->row edge (k, l) are adjacent iff j = k or l = i, i.e. iff the two
    underlying edges share their column or share their row.  The dual is
    itself bipartite (row->col copies vs col->row copies), so it is stored
    as a BipartiteGraph with ``n_edges`` vertices on each side, and the usual
    connectivity/diameter queries apply to it directly.
    """

    def __init__(self, base: BipartiteGraph, graph: BipartiteGraph) -> None:
        self.base = base
        self.graph = graph

    @property
    def n_vertices(self) -> int:
        return 2 * self.base.n_edges

    def forward_label(self, e: int) -> tuple:
        """Directed row->col edge for dual row-side vertex ``e``."""
        return (int(self.base.rows[e]), int(self.base.cols[e]))

    def backward_label(self, e: int) -> tuple:
        """Directed col->row edge for dual col-side vertex ``e``."""
        return (int(self.base.cols[e]), int(self.base.rows[e]))

    def neighbors_of_forward(self, e: int) -> np.ndarray:
        """Dual col-side vertex ids adjacent to forward edge ``e``."""
        return self.graph.row_neighbors(e)

    def neighbors_of_backward(self, e: int) -> np.ndarray:
        """Dual row-side vertex ids adjacent to backward edge ``e``."""
        return self.graph.col_neighbors(e)


def build_dual_graph(g: BipartiteGraph) -> DualGraph:
    """Materialize the directed-edge dual of ``g``.

    Dual adjacency pairs are exactly the base-edge pairs sharing a row or a
    column (each base edge's two directions are mutually adjacent since they
    share both).
    """
    pairs = []
    for i in range(g.n_rows):
        ids = g.row_edge_ids(i)
        if len(ids):
            a, b = np.meshgrid(ids, ids, indexing="ij")
            pairs.append(np.column_stack((a.ravel(), b.ravel())))
    for j in range(g.n_cols):
        ids = g.col_edge_ids(j)
        if len(ids):
            a, b = np.meshgrid(ids, ids, indexing="ij")
            pairs.append(np.column_stack((a.ravel(), b.ravel())))
    if pairs:
        edges = np.concatenate(pairs, axis=0)
    else:
        edges = np.zeros((0, 2), dtype=np.int64)
    dual = BipartiteGraph(g.n_edges, g.n_edges, edges)
    return DualGraph(g, dual)


def write_edge_list(g: BipartiteGraph, path) -> None:
    """Plain-text edge list: header "n_rows n_cols n_edges", one "i j" per line."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{g.n_rows} {g.n_cols} {g.n_edges}\n")
        for i, j in zip(g.rows.tolist(), g.cols.tolist()):
            fh.write(f"{i} {j}\n")


def read_edge_list(path) -> BipartiteGraph:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise GraphError(f"malformed edge-list header in {path}")
        n_rows, n_cols, n_edges = (int(tok) for tok in header)
        edges = np.loadtxt(fh, dtype=np.int64, ndmin=2) if n_edges else np.zeros((0, 2), np.int64)
    if edges.shape != (n_edges, 2):
        raise GraphError(f"edge-list body of {path} does not match its header")
    return BipartiteGraph(n_rows, n_cols, edges)
