"""Alternating least-squares solvers for graph-observed matrix completion.

Two algorithms share the same residual structure:

* VLS keeps one length-r vector per vertex.  Each sweep refreshes every row
  vector by least squares against all of its neighbors' current column
  vectors, then every column vector against the fresh row vectors.

* ELS keeps one length-r vector per *directed* edge.  The message x[i->j]
  is fit against all of row i's neighbors except j, each neighbor k matched
  against its own revealed entry M[i, k]; the excluded target edge
  contributes nothing.  A final collapse averages a vertex's outgoing
  messages into a vertex vector.

Within one iteration all row-side updates happen first, from the previous
column-side values, then all column-side updates from the fresh row side;
the phases are never interleaved.  Both solvers see only the graph and the
observed values, never the ground-truth factors.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable

import numpy as np

from . import metrics
from .textio import fmt

if TYPE_CHECKING:
    from .instance import Instance, InstanceView

__all__ = [
    "SolveError",
    "FactorState",
    "MessageState",
    "SolveConfig",
    "Trace",
    "vls_vertex_solve",
    "els_edge_solve",
    "vls_iterate",
    "els_iterate",
    "els_collapse",
    "run",
    "write_factor_state",
    "read_factor_state",
    "write_trace_csv",
    "read_trace_csv",
]

# Relative eigenvalue cutoff below which a normal-equation system is treated
# as rank-deficient and solved in the minimal-norm sense.
RCOND = 1e-10


class SolveError(ValueError):
    """A structural precondition of a solver update was violated."""


@dataclass
class FactorState:
    """Per-vertex iterates: x[i] for row vertices, y[j] for column vertices."""

    x: np.ndarray  # (n_rows, r)
    y: np.ndarray  # (n_cols, r)
    iteration: int = 0

    def __post_init__(self) -> None:
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.y = np.atleast_2d(np.asarray(self.y, dtype=float))
        if self.x.shape[1] != self.y.shape[1]:
            raise SolveError(f"rank mismatch: x is {self.x.shape}, y is {self.y.shape}")

    @property
    def rank(self) -> int:
        return self.x.shape[1]

    def copy(self) -> "FactorState":
        return FactorState(self.x.copy(), self.y.copy(), self.iteration)


@dataclass
class MessageState:
    """Per-directed-edge iterates, aligned with the graph's edge order.

    ``x_msgs[e]`` is the row->col message on edge e, ``y_msgs[e]`` the
    col->row message on the same underlying edge.
    """

    x_msgs: np.ndarray  # (n_edges, r)
    y_msgs: np.ndarray  # (n_edges, r)
    iteration: int = 0

    def __post_init__(self) -> None:
        self.x_msgs = np.atleast_2d(np.asarray(self.x_msgs, dtype=float))
        self.y_msgs = np.atleast_2d(np.asarray(self.y_msgs, dtype=float))
        if self.x_msgs.shape != self.y_msgs.shape:
            raise SolveError(
                f"message shape mismatch: {self.x_msgs.shape} vs {self.y_msgs.shape}"
            )

    @property
    def rank(self) -> int:
        return self.x_msgs.shape[1]

    def copy(self) -> "MessageState":
        return MessageState(self.x_msgs.copy(), self.y_msgs.copy(), self.iteration)


@dataclass(frozen=True)
class SolveConfig:
    """Stopping rules and bookkeeping for one solve."""

    algorithm: str = "vls"
    max_iterations: int = 500
    rms_tolerance: float = 1e-3
    divergence_cap: float = 1e6
    seed: int | None = None
    record_every: int = 1

    def __post_init__(self) -> None:
        if self.algorithm not in ("vls", "els"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if not self.rms_tolerance > 0:
            raise ValueError("rms_tolerance must be positive")
        if not self.divergence_cap > self.rms_tolerance:
            raise ValueError("divergence_cap must exceed rms_tolerance")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass
class Trace:
    """Recorded (iteration, rms, objective) triples plus the final status."""

    records: list = field(default_factory=list)
    status: str = "running"
    seconds_per_iteration: float = 0.0

    @property
    def iterations(self) -> int:
        return self.records[-1][0] if self.records else 0

    @property
    def final_rms(self) -> float:
        return self.records[-1][1] if self.records else float("nan")


def _min_norm_solve(gram: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Minimal-norm solutions of batched symmetric normal equations.

    ``gram`` is (..., r, r) PSD, ``rhs`` (..., r).  Eigenvalues below
    RCOND * max eigenvalue are treated as zero.
    """
    pinv = np.linalg.pinv(gram, rcond=RCOND, hermitian=True)
    return np.einsum("...ij,...j->...i", pinv, rhs)


def vls_vertex_solve(targets) -> np.ndarray:
    """Least-squares vector for one vertex against its observed neighbors.

    ``targets`` is a sequence of (neighbor vector, observed value) pairs.
    Returns the minimizer of sum((x . y_k - m_k)^2) as a length-r array; for
    r = 1 that is sum(m_k y_k) / sum(y_k^2), and for singular normal
    equations the minimal-norm solution.
    """
    if len(targets) == 0:
        raise SolveError("vertex update needs at least one observed neighbor")
    ys = np.array([np.atleast_1d(t[0]) for t in targets], dtype=float)
    ms = np.array([t[1] for t in targets], dtype=float)
    if ys.ndim != 2:
        raise SolveError("neighbor vectors must share one length")
    r = ys.shape[1]
    if r == 1:
        den = float(np.sum(ys[:, 0] ** 2))
        if den == 0.0:
            raise SolveError("all neighbor values are zero: update undefined")
        return np.array([float(ys[:, 0] @ ms) / den])
    return _min_norm_solve(ys.T @ ys, ys.T @ ms)


def els_edge_solve(targets) -> np.ndarray:
    """Least-squares vector for one directed edge.

    Numerically identical to ``vls_vertex_solve``; the caller passes the
    neighbor list with the target edge already removed, so an empty list
    means the source vertex had degree one.
    """
    if len(targets) == 0:
        raise SolveError("edge update needs a neighbor besides the target edge")
    return vls_vertex_solve(targets)


def _gram_rhs_by_group(idx, vecs, vals, n, r):
    """Per-group normal equations: gram[v] = sum outer(w_e, w_e), rhs[v] =
    sum vals_e * w_e over edges e with idx[e] == v."""
    gram = np.empty((n, r, r))
    rhs = np.empty((n, r))
    for a in range(r):
        rhs[:, a] = np.bincount(idx, weights=vals * vecs[:, a], minlength=n)
        for b in range(a, r):
            s = np.bincount(idx, weights=vecs[:, a] * vecs[:, b], minlength=n)
            gram[:, a, b] = s
            gram[:, b, a] = s
    return gram, rhs


def _vls_half_step(old, idx, degrees, vecs, vals, side):
    """One VLS phase: refresh the ``side`` vectors grouped by ``idx``.

    Degree-0 vertices keep their current value (the objective does not
    constrain them).
    """
    n, r = old.shape
    active = degrees > 0
    if r == 1:
        num = np.bincount(idx, weights=vals * vecs[:, 0], minlength=n)
        den = np.bincount(idx, weights=vecs[:, 0] ** 2, minlength=n)
        bad = active & (den == 0.0)
        if np.any(bad):
            v = int(np.flatnonzero(bad)[0])
            raise SolveError(
                f"all neighbor values are zero at {side} vertex {v}: update undefined"
            )
        new = old.copy()
        np.divide(num, den, out=new[:, 0], where=active)
        return new
    gram, rhs = _gram_rhs_by_group(idx, vecs, vals, n, r)
    new = old.copy()
    new[active] = _min_norm_solve(gram[active], rhs[active])
    return new


def vls_iterate(state: FactorState, view: "InstanceView") -> FactorState:
    """One full VLS sweep: all row vectors from the current column vectors,
    then all column vectors from the fresh row vectors."""
    g = view.graph
    if state.x.shape[0] != g.n_rows or state.y.shape[0] != g.n_cols:
        raise SolveError(
            f"state sized {state.x.shape[0]}+{state.y.shape[0]} does not match "
            f"graph {g.n_rows}+{g.n_cols}"
        )
    x_new = _vls_half_step(state.x, g.rows, g.row_degrees,
                           state.y[g.cols], view.values, "row")
    y_new = _vls_half_step(state.y, g.cols, g.col_degrees,
                           x_new[g.rows], view.values, "column")
    return FactorState(x_new, y_new, state.iteration + 1)


def _excluded_group_sums(idx, slot, n, width, values):
    """Exact leave-one-out sums within groups.

    ``values`` has shape (E, ...); element e belongs to group idx[e] at
    in-group position slot[e] < width.  Returns, per element, the sum of its
    group's values with the element itself left out, computed from prefix
    and suffix partial sums so that no cancellation occurs.
    """
    tail = values.shape[1:]
    pad = np.zeros((n, width) + tail)
    pad[idx, slot] = values
    pref = np.cumsum(pad, axis=1)
    suf = np.cumsum(pad[:, ::-1], axis=1)[:, ::-1]
    before = np.where(
        (slot > 0).reshape((-1,) + (1,) * len(tail)),
        pref[idx, np.maximum(slot - 1, 0)],
        0.0,
    )
    after = np.where(
        (slot + 1 < width).reshape((-1,) + (1,) * len(tail)),
        suf[idx, np.minimum(slot + 1, width - 1)],
        0.0,
    )
    return before + after


def _check_els_degrees(g) -> None:
    if g.n_rows and g.row_degrees.min() < 2:
        v = int(np.argmin(g.row_degrees))
        raise SolveError(
            f"edge updates need every vertex degree >= 2; row vertex {v} has "
            f"degree {int(g.row_degrees[v])}"
        )
    if g.n_cols and g.col_degrees.min() < 2:
        v = int(np.argmin(g.col_degrees))
        raise SolveError(
            f"edge updates need every vertex degree >= 2; column vertex {v} "
            f"has degree {int(g.col_degrees[v])}"
        )


def _els_half_step(msgs, vals, g, by_row):
    """One ELS phase: refresh every directed message on one side.

    Each message's normal equations sum over the source vertex's incident
    edges except the message's own edge; every neighbor k is matched against
    its own revealed entry.
    """
    E, r = msgs.shape
    if by_row:
        idx, slot, n, width = g.rows, g.row_slot, g.n_rows, int(g.row_degrees.max())
    else:
        idx, slot, n, width = g.cols, g.col_slot, g.n_cols, int(g.col_degrees.max())
    if r == 1:
        num = _excluded_group_sums(idx, slot, n, width, vals * msgs[:, 0])
        den = _excluded_group_sums(idx, slot, n, width, msgs[:, 0] ** 2)
        if np.any(den == 0.0):
            e = int(np.flatnonzero(den == 0.0)[0])
            a, b = (g.rows[e], g.cols[e]) if by_row else (g.cols[e], g.rows[e])
            raise SolveError(
                f"all other neighbor values are zero for directed edge "
                f"{int(a)}->{int(b)}: update undefined"
            )
        return (num / den)[:, None]
    gram = _excluded_group_sums(idx, slot, n, width,
                                msgs[:, :, None] * msgs[:, None, :])
    rhs = _excluded_group_sums(idx, slot, n, width, vals[:, None] * msgs)
    return _min_norm_solve(gram, rhs)


def els_iterate(state: MessageState, view: "InstanceView") -> MessageState:
    """One full ELS sweep over all directed messages, row side then column side."""
    g = view.graph
    if state.x_msgs.shape[0] != g.n_edges:
        raise SolveError(
            f"message state has {state.x_msgs.shape[0]} edges, graph has {g.n_edges}"
        )
    _check_els_degrees(g)
    x_new = _els_half_step(state.y_msgs, view.values, g, by_row=True)
    y_new = _els_half_step(x_new, view.values, g, by_row=False)
    return MessageState(x_new, y_new, state.iteration + 1)


def els_collapse(state: MessageState, g) -> FactorState:
    """Average each vertex's outgoing messages into a per-vertex vector."""
    if g.n_rows and (g.n_edges == 0 or g.row_degrees.min() == 0):
        v = int(np.argmin(g.row_degrees))
        raise SolveError(f"cannot collapse messages at degree-0 row vertex {v}")
    if g.n_cols and (g.n_edges == 0 or g.col_degrees.min() == 0):
        v = int(np.argmin(g.col_degrees))
        raise SolveError(f"cannot collapse messages at degree-0 column vertex {v}")
    r = state.rank
    x = np.empty((g.n_rows, r))
    y = np.empty((g.n_cols, r))
    for a in range(r):
        x[:, a] = np.bincount(g.rows, weights=state.x_msgs[:, a],
                              minlength=g.n_rows) / g.row_degrees
        y[:, a] = np.bincount(g.cols, weights=state.y_msgs[:, a],
                              minlength=g.n_cols) / g.col_degrees
    return FactorState(x, y, state.iteration)


def _state_factors(state, g):
    if isinstance(state, MessageState):
        collapsed = els_collapse(state, g)
        return collapsed.x, collapsed.y
    return state.x, state.y


def _state_finite(state) -> bool:
    if isinstance(state, MessageState):
        return bool(np.all(np.isfinite(state.x_msgs)) and np.all(np.isfinite(state.y_msgs)))
    return bool(np.all(np.isfinite(state.x)) and np.all(np.isfinite(state.y)))


def run(inst: "Instance", init, config: SolveConfig,
        observer: Callable[[int, object], None] | None = None):
    """Iterate one algorithm to convergence, divergence, or the iteration cap.

    ``init`` must be a FactorState for VLS or a MessageState for ELS.  The
    reconstruction error is evaluated against the instance's ground truth at
    every ``record_every``-th iteration (for ELS, on the collapsed state);
    the run stops as soon as a recorded error drops below ``rms_tolerance``
    (converged), exceeds ``divergence_cap`` or turns non-finite (diverged),
    or the cap is reached.  ``observer(t, state)`` is called on the initial
    state and after every iteration; diagnostics hook in there.

    Returns (final FactorState, Trace).  For ELS the final state is the
    collapsed one.
    """
    view = inst.view()
    g = view.graph
    if config.algorithm == "vls":
        if not isinstance(init, FactorState):
            raise SolveError("vls needs a FactorState initialization")
        iterate = vls_iterate
    else:
        if not isinstance(init, MessageState):
            raise SolveError("els needs a MessageState initialization")
        iterate = els_iterate
        _check_els_degrees(g)
        if g.min_degree() < inst.rank + 1:
            warnings.warn(
                f"minimum degree {g.min_degree()} is below rank+1 = "
                f"{inst.rank + 1}; edge updates may be underdetermined",
                stacklevel=2,
            )

    state = init.copy()
    state.iteration = 0
    started = time.perf_counter()
    trace = Trace()

    def evaluate(t: int) -> float:
        X, Y = _state_factors(state, g)
        value = metrics.rms(X, Y, inst)
        trace.records.append((t, value, metrics.objective(X, Y, view)))
        return value

    def classify(value: float) -> str | None:
        if not np.isfinite(value):
            return "diverged"
        if value < config.rms_tolerance:
            return "converged"
        if value > config.divergence_cap:
            return "diverged"
        return None

    if observer is not None:
        observer(0, state)
    status = classify(evaluate(0))
    t = 0
    while status is None and t < config.max_iterations:
        t += 1
        state = iterate(state, view)
        if observer is not None:
            observer(t, state)
        if not _state_finite(state):
            trace.records.append((t, float("inf"), float("inf")))
            status = "diverged"
            break
        if t % config.record_every == 0 or t == config.max_iterations:
            status = classify(evaluate(t))
    if status is None:
        status = "iteration-cap"
    if trace.records[-1][0] != t:
        classify(evaluate(t))
    trace.status = status
    trace.seconds_per_iteration = (time.perf_counter() - started) / max(t, 1)

    final = els_collapse(state, g) if isinstance(state, MessageState) else state
    return final, trace


def write_factor_state(state: FactorState, path) -> None:
    """Dump a factor state in the instance file's factor-row format:
    header "n_rows n_cols r iteration", then the x rows, then the y rows."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{state.x.shape[0]} {state.y.shape[0]} {state.rank} "
                 f"{state.iteration}\n")
        for row in state.x:
            fh.write(" ".join(fmt(v) for v in row) + "\n")
        for row in state.y:
            fh.write(" ".join(fmt(v) for v in row) + "\n")


def read_factor_state(path) -> FactorState:
    with open(path, "r", encoding="ascii") as fh:
        n_rows, n_cols, r, iteration = (int(tok) for tok in fh.readline().split())
        x = np.array([[float(v) for v in fh.readline().split()]
                      for _ in range(n_rows)])
        y = np.array([[float(v) for v in fh.readline().split()]
                      for _ in range(n_cols)])
    if x.shape != (n_rows, r) or y.shape != (n_cols, r):
        raise ValueError(f"factor block of {path} does not match its header")
    return FactorState(x, y, iteration)


def write_trace_csv(trace: Trace, path) -> None:
    """CSV "iteration,rms,objective,status"; the last row carries the final
    status, earlier rows read "running"."""
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write("iteration,rms,objective,status\n")
        last = len(trace.records) - 1
        for k, (t, r, o) in enumerate(trace.records):
            status = trace.status if k == last else "running"
            fh.write(f"{t},{fmt(r)},{fmt(o)},{status}\n")


def read_trace_csv(path) -> Trace:
    trace = Trace()
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != "iteration,rms,objective,status":
            raise ValueError(f"unexpected trace header {header!r} in {path}")
        status = "running"
        for line in fh:
            t, r, o, status = line.strip().split(",")
            trace.records.append((int(t), float(r), float(o)))
    trace.status = status
    return trace
