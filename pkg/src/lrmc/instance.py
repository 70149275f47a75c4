"""Problem instances: ground-truth factors, observed entries, initializations.

An Instance couples a graph with ground-truth factors alpha (rows) and beta
(columns) and the observed values M[i, j] = alpha_i . beta_j on the graph's
edges.  The factors stay inside the instance for error measurement and
diagnostics; solvers only ever see the (graph, observed values) view.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .graph import BipartiteGraph
from .solver import FactorState, MessageState
from .textio import fmt

__all__ = [
    "Instance",
    "InstanceView",
    "InitSpec",
    "make_instance",
    "gen_rank1_instance",
    "gen_rank_r_instance",
    "gen_split_instance",
    "make_init",
    "write_instance",
    "read_instance",
]


class InstanceView(NamedTuple):
    """What a solver is allowed to see: the graph and the observed values
    (aligned with the graph's edge order)."""

    graph: BipartiteGraph
    values: np.ndarray


@dataclass(frozen=True)
class Instance:
    """Ground truth plus its observation pattern.

    ``entry_bound`` is the positivity bound b of rank-1 ensembles (all factor
    entries in [b, 1/b]); None for ensembles without one.
    """

    rank: int
    alpha: np.ndarray  # (n, r)
    beta: np.ndarray  # (n, r)
    graph: BipartiteGraph
    values: np.ndarray  # (n_edges,) observed entries, graph edge order
    entry_bound: float | None = None
    seed: int = 0

    @property
    def n(self) -> int:
        return self.alpha.shape[0]

    def view(self) -> InstanceView:
        return InstanceView(self.graph, self.values)

    def observed(self, i: int, j: int) -> float:
        """Value revealed on edge (i, j); KeyError if the edge is absent."""
        hits = np.flatnonzero((self.graph.rows == i) & (self.graph.cols == j))
        if len(hits) == 0:
            raise KeyError(f"edge ({i}, {j}) is not observed")
        return float(self.values[hits[0]])


def make_instance(alpha, beta, graph: BipartiteGraph,
                  entry_bound: float | None = None, seed: int = 0) -> Instance:
    """Instance from explicit factors; observed values are recomputed."""
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    if alpha.shape[1] != beta.shape[1]:
        raise ValueError(f"factor ranks differ: {alpha.shape} vs {beta.shape}")
    if alpha.shape[0] != graph.n_rows or beta.shape[0] != graph.n_cols:
        raise ValueError(
            f"factors sized {alpha.shape[0]}+{beta.shape[0]} do not match "
            f"graph {graph.n_rows}+{graph.n_cols}"
        )
    values = np.einsum("er,er->e", alpha[graph.rows], beta[graph.cols])
    alpha.setflags(write=False)
    beta.setflags(write=False)
    values.setflags(write=False)
    return Instance(alpha.shape[1], alpha, beta, graph, values, entry_bound, seed)


def _require_square(graph: BipartiteGraph, n: int) -> None:
    if graph.n_rows != n or graph.n_cols != n:
        raise ValueError(
            f"instance size n={n} does not match graph "
            f"{graph.n_rows}+{graph.n_cols}"
        )


def gen_rank1_instance(n: int, b: float, graph: BipartiteGraph, seed,
                       box: tuple | None = (0.01, 0.99)) -> Instance:
    """Rank-1 instance with positive bounded entries.

    Factor entries are uniform on [b, 1/b] intersected with ``box``; the
    default box (0.01, 0.99) with b = 0.01 is the experiment ensemble, while
    box=None samples the full [b, 1/b].
    """
    if not 0 < b < 1:
        raise ValueError(f"entry bound b={b} must lie in (0, 1)")
    _require_square(graph, n)
    lo, hi = (b, 1.0 / b) if box is None else (max(b, box[0]), min(1.0 / b, box[1]))
    if not lo <= hi:
        raise ValueError(f"empty sampling interval [{lo}, {hi}]")
    rng = np.random.default_rng(seed)
    alpha = rng.uniform(lo, hi, size=(n, 1))
    beta = rng.uniform(lo, hi, size=(n, 1))
    return make_instance(alpha, beta, graph, entry_bound=b)


def gen_rank_r_instance(n: int, r: int, graph: BipartiteGraph, seed) -> Instance:
    """Rank-r instance with factor entries uniform on [-1, 1]."""
    if r < 1:
        raise ValueError(f"rank r={r} must be >= 1")
    _require_square(graph, n)
    rng = np.random.default_rng(seed)
    alpha = rng.uniform(-1.0, 1.0, size=(n, r))
    beta = rng.uniform(-1.0, 1.0, size=(n, r))
    return make_instance(alpha, beta, graph)


def gen_split_instance(n: int, b: float, graph: BipartiteGraph, seed) -> Instance:
    """Rank-1 instance whose alpha is the two-level split pattern.

    alpha_i = b on the first half of the rows and 1/b on the rest; beta is
    uniform on [b, 1/b].  Together with the "adversarial-split"
    initialization (which uses the opposite pattern) the starting row vector
    sits at subspace distance 1 - 4 b^4 / (1 + b^4)^2 from alpha, above 1/2
    for small b.
    """
    if not 0 < b < 1:
        raise ValueError(f"entry bound b={b} must lie in (0, 1)")
    _require_square(graph, n)
    rng = np.random.default_rng(seed)
    alpha = np.full((n, 1), 1.0 / b)
    alpha[: n // 2, 0] = b
    beta = rng.uniform(b, 1.0 / b, size=(n, 1))
    return make_instance(alpha, beta, graph, entry_bound=b)


_INIT_MODES = ("uniform-box", "adversarial-split", "ground-truth", "custom")


@dataclass(frozen=True)
class InitSpec:
    """How to build a solver initialization.

    * uniform-box: every entry i.i.d. uniform on [b, 1/b].
    * adversarial-split: rank 1 only; row entries 1/b on the first half and
      b on the second (the mirror image of the split instance's alpha), with
      uniform-box column entries.
    * ground-truth: copy the instance factors (a fixed point).
    * custom: use ``x``/``y`` as given, validated against [b, 1/b].
    """

    mode: str = "uniform-box"
    b: float = 0.01
    seed: int | None = None
    x: np.ndarray | None = None
    y: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.mode not in _INIT_MODES:
            raise ValueError(f"unknown init mode {self.mode!r}; "
                             f"expected one of {_INIT_MODES}")
        if not 0 < self.b < 1:
            raise ValueError(f"init bound b={self.b} must lie in (0, 1)")


def _validate_custom(arr, shape, b, name):
    arr = np.asarray(arr, dtype=float).reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"custom init {name} contains non-finite entries")
    if np.any(arr < b) or np.any(arr > 1.0 / b):
        raise ValueError(f"custom init {name} leaves the box [{b}, {1.0 / b}]")
    return arr


def make_init(inst: Instance, spec: InitSpec, kind: str = "vertex"):
    """Build a FactorState (kind="vertex") or MessageState (kind="message").

    Message initializations replicate the per-vertex draw semantics: each
    directed edge gets its own i.i.d. draw in uniform-box mode, and copies
    of the source vertex's value in the other modes.
    """
    if kind not in ("vertex", "message"):
        raise ValueError(f"unknown init kind {kind!r}")
    g = inst.graph
    r = inst.rank
    if kind == "message" and g.n_edges and g.min_degree() < 1:
        raise ValueError("message init needs every vertex to have degree >= 1")
    rng = np.random.default_rng(spec.seed)
    lo, hi = spec.b, 1.0 / spec.b

    if spec.mode == "uniform-box":
        if kind == "vertex":
            return FactorState(rng.uniform(lo, hi, (g.n_rows, r)),
                               rng.uniform(lo, hi, (g.n_cols, r)))
        return MessageState(rng.uniform(lo, hi, (g.n_edges, r)),
                            rng.uniform(lo, hi, (g.n_edges, r)))

    if spec.mode == "adversarial-split":
        if r != 1:
            raise ValueError("adversarial-split init is defined for rank 1 only")
        x = np.full((g.n_rows, 1), spec.b)
        x[: g.n_rows // 2, 0] = 1.0 / spec.b
        if kind == "vertex":
            return FactorState(x, rng.uniform(lo, hi, (g.n_cols, 1)))
        return MessageState(x[g.rows], rng.uniform(lo, hi, (g.n_edges, 1)))

    if spec.mode == "ground-truth":
        if kind == "vertex":
            return FactorState(inst.alpha.copy(), inst.beta.copy())
        return MessageState(inst.alpha[g.rows].copy(), inst.beta[g.cols].copy())

    x = _validate_custom(spec.x, (g.n_rows, r), spec.b, "x")
    y = _validate_custom(spec.y, (g.n_cols, r), spec.b, "y")
    if kind == "vertex":
        return FactorState(x, y)
    return MessageState(x[g.rows], y[g.cols])


def write_instance(inst: Instance, path) -> None:
    """Plain text: header "n r b seed", n alpha rows, n beta rows, then one
    "i j value" line per observed edge.  Floats round-trip exactly."""
    b = fmt(inst.entry_bound) if inst.entry_bound is not None else "none"
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{inst.n} {inst.rank} {b} {inst.seed}\n")
        for row in inst.alpha:
            fh.write(" ".join(fmt(v) for v in row) + "\n")
        for row in inst.beta:
            fh.write(" ".join(fmt(v) for v in row) + "\n")
        for e in range(inst.graph.n_edges):
            fh.write(f"{inst.graph.rows[e]} {inst.graph.cols[e]} "
                     f"{fmt(inst.values[e])}\n")


def read_instance(path) -> Instance:
    with open(path, "r", encoding="ascii") as fh:
        n_s, r_s, b_s, seed_s = fh.readline().split()
        n, r, seed = int(n_s), int(r_s), int(seed_s)
        bound = None if b_s == "none" else float(b_s)
        alpha = np.array([[float(v) for v in fh.readline().split()]
                          for _ in range(n)])
        beta = np.array([[float(v) for v in fh.readline().split()]
                         for _ in range(n)])
        edges = []
        values = []
        for line in fh:
            i_s, j_s, v_s = line.split()
            edges.append((int(i_s), int(j_s)))
            values.append(float(v_s))
    if alpha.shape != (n, r) or beta.shape != (n, r):
        raise ValueError(f"factor block of {path} does not match its header")
    graph = BipartiteGraph(n, n, np.array(edges, dtype=np.int64).reshape(-1, 2))
    inst = make_instance(alpha, beta, graph, entry_bound=bound, seed=seed)
    stored = np.array(values)
    order = np.lexsort((np.array(edges)[:, 1], np.array(edges)[:, 0])) if edges else []
    if edges and not np.array_equal(stored[order], inst.values):
        raise ValueError(f"observed values in {path} disagree with the factors")
    return inst
