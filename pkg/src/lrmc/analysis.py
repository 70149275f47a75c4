"""Oracle-assisted diagnostics for the rank-1 contraction mechanism.

Dividing a rank-1 iterate elementwise by the ground-truth factor gives ratio
vectors u (row side) and v (column side).  When the column side has been
refreshed from the row side, one further sweep acts on u as multiplication
by a row-stochastic matrix: the walk matrix built here.  Its support is the
distance-two adjacency of the row vertices; products of diameter-many
consecutive walk matrices are entrywise positive, which forces the spread
max(u) - min(u) to contract.  This module materializes those objects from
actual solver states and verifies their claimed properties numerically.

All checks that relate consecutive iterates start at t = 1: the initial
column values are arbitrary, so the first sweep is what aligns the column
side with the row side and makes the walk identity hold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import metrics
from .graph import max_degree as graph_max_degree
from .instance import Instance
from .solver import FactorState, MessageState, SolveConfig, Trace, run
from .textio import fmt

__all__ = [
    "AnalysisError",
    "RatioVectors",
    "TransitionMatrix",
    "EntryBoundReport",
    "ratio_vectors",
    "extract_transition_matrix",
    "verify_entry_lower_bound",
    "window_product",
    "DiagnosticRun",
    "diagnose",
    "contraction_trace",
    "write_diagnostics_csv",
    "read_diagnostics_csv",
]

ROW_SUM_TOL = 1e-10
CONSISTENCY_TOL = 1e-9
ENVELOPE_TOL = 1e-12
BOUND_SLACK = 1e-12


class AnalysisError(ValueError):
    """A diagnostic's precondition was violated."""


@dataclass(frozen=True)
class RatioVectors:
    """Iterates divided elementwise by the ground-truth factors.

    kind "vertex": u[i] = x[i]/alpha[i], v[j] = y[j]/beta[j].
    kind "edge": one entry per directed edge, u on row->col messages divided
    by the source row's alpha, v on col->row messages divided by beta.
    """

    u: np.ndarray
    v: np.ndarray
    kind: str


def ratio_vectors(state, inst: Instance) -> RatioVectors:
    """Elementwise ratios of a rank-1 state to the instance's factors."""
    if inst.rank != 1:
        raise AnalysisError("ratio vectors are defined for rank-1 instances only")
    a = inst.alpha[:, 0]
    b = inst.beta[:, 0]
    g = inst.graph
    if isinstance(state, MessageState):
        return RatioVectors(state.x_msgs[:, 0] / a[g.rows],
                            state.y_msgs[:, 0] / b[g.cols], "edge")
    return RatioVectors(state.x[:, 0] / a, state.y[:, 0] / b, "vertex")


@dataclass(frozen=True)
class TransitionMatrix:
    """Dense row-stochastic walk matrix for one sweep.

    kind "vertex": n x n on row vertices, supported on distance-two
    adjacency.  kind "edge": |E| x |E| on row->col messages, supported on
    distance-two adjacency of the directed-edge dual graph.
    """

    matrix: np.ndarray
    kind: str

    @property
    def row_sum_error(self) -> float:
        return float(np.abs(self.matrix.sum(axis=1) - 1.0).max())

    @property
    def min_nonzero(self) -> float:
        nz = self.matrix[self.matrix > 0]
        return float(nz.min()) if nz.size else float("nan")


def _vertex_transition(state: FactorState, inst: Instance) -> np.ndarray:
    x = state.x[:, 0]
    y = state.y[:, 0]
    a = inst.alpha[:, 0]
    g = inst.graph
    if np.any(x <= 0) or np.any(y <= 0):
        raise AnalysisError("walk extraction needs strictly positive iterates")
    den_row = np.bincount(g.rows, weights=y[g.cols] ** 2, minlength=g.n_rows)
    den_col = np.bincount(g.cols, weights=(a * x)[g.rows], minlength=g.n_cols)
    w1 = sp.coo_matrix((y[g.cols] ** 2 / den_row[g.rows], (g.rows, g.cols)),
                       shape=(g.n_rows, g.n_cols))
    w2 = sp.coo_matrix(((a * x)[g.rows] / den_col[g.cols], (g.cols, g.rows)),
                       shape=(g.n_cols, g.n_rows))
    return np.asarray((w1.tocsr() @ w2.tocsr()).todense())


def _edge_transition(state: MessageState, inst: Instance) -> np.ndarray:
    xm = state.x_msgs[:, 0]
    ym = state.y_msgs[:, 0]
    a = inst.alpha[:, 0]
    g = inst.graph
    if np.any(xm <= 0) or np.any(ym <= 0):
        raise AnalysisError("walk extraction needs strictly positive iterates")
    E = g.n_edges
    # First hop: message (i->j) draws on column messages (k->i), k ~ i, k != j.
    rows1, cols1, data1 = [], [], []
    ysq = ym ** 2
    for i in range(g.n_rows):
        ids = g.row_edge_ids(i)
        if len(ids) < 2:
            raise AnalysisError(
                f"edge walk needs every vertex degree >= 2; row vertex {i} has "
                f"degree {len(ids)}")
        for e in ids:
            others = ids[ids != e]
            den = ysq[others].sum()
            rows1.extend([e] * len(others))
            cols1.extend(others.tolist())
            data1.extend((ysq[others] / den).tolist())
    # Second hop: column message (k->i) draws on row messages (m->k), m != i.
    rows2, cols2, data2 = [], [], []
    wts = a[g.rows] * xm
    for j in range(g.n_cols):
        ids = g.col_edge_ids(j)
        if len(ids) < 2:
            raise AnalysisError(
                f"edge walk needs every vertex degree >= 2; column vertex {j} "
                f"has degree {len(ids)}")
        for e in ids:
            others = ids[ids != e]
            den = wts[others].sum()
            rows2.extend([e] * len(others))
            cols2.extend(others.tolist())
            data2.extend((wts[others] / den).tolist())
    w1 = sp.coo_matrix((data1, (rows1, cols1)), shape=(E, E)).tocsr()
    w2 = sp.coo_matrix((data2, (rows2, cols2)), shape=(E, E)).tocsr()
    return np.asarray((w1 @ w2).todense())


def extract_transition_matrix(state, inst: Instance) -> TransitionMatrix:
    """Row-stochastic matrix carrying this state's row-side ratios one sweep
    forward (valid against the actual next iterate once the column side has
    been refreshed from the row side, i.e. from t >= 1)."""
    if inst.rank != 1:
        raise AnalysisError("walk extraction is defined for rank-1 instances only")
    if isinstance(state, MessageState):
        return TransitionMatrix(_edge_transition(state, inst), "edge")
    return TransitionMatrix(_vertex_transition(state, inst), "vertex")


@dataclass(frozen=True)
class EntryBoundReport:
    """Outcome of checking every non-zero walk entry against its floor."""

    floor: float
    min_nonzero: float
    violations: tuple

    @property
    def ok(self) -> bool:
        return len(self.violations) == 0


def verify_entry_lower_bound(P: TransitionMatrix, b: float,
                             delta: int) -> EntryBoundReport:
    """Check non-zero entries of P against the floor b^6 / delta.

    The floor is what the iterate envelope [b^3, 1/b^3] buys on a graph of
    maximum degree delta.  Violations are reported, never raised.
    """
    floor = b ** 6 / delta
    m = P.matrix
    mask = (m > 0) & (m < floor)
    violations = tuple(
        (int(i), int(j), float(m[i, j])) for i, j in zip(*np.nonzero(mask))
    )
    return EntryBoundReport(floor=floor, min_nonzero=P.min_nonzero,
                            violations=violations)


def window_product(ps, d: int, entry_floor: float | None = None) -> TransitionMatrix:
    """Product of d consecutive walk matrices, applied chronologically.

    Given [P_t, P_{t+1}, ...], returns Q = P_{t+d-1} ... P_{t+1} P_t, so
    Q @ u_t advances the ratio vector d sweeps.  When ``entry_floor`` is
    given the diameter-window claim is asserted: every entry must be
    strictly positive and at least the floor (pass 0.0 for bare
    positivity).  With d below the graph diameter the product legitimately
    keeps zero entries, so no assertion applies by default.
    """
    if len(ps) < d:
        raise AnalysisError(f"window of {d} matrices requested, got {len(ps)}")
    if d < 1:
        raise AnalysisError("window length must be >= 1")
    kind = ps[0].kind if isinstance(ps[0], TransitionMatrix) else "vertex"
    mats = [p.matrix if isinstance(p, TransitionMatrix) else np.asarray(p)
            for p in ps[:d]]
    q = mats[0]
    for m in mats[1:]:
        q = m @ q
    if entry_floor is not None:
        if not np.all(q > 0):
            raise AnalysisError(
                f"window product has {int(np.sum(q <= 0))} non-positive "
                f"entries; window may be shorter than the graph diameter")
        if q.min() < entry_floor:
            raise AnalysisError(
                f"window product entry {q.min():.3e} below floor "
                f"{entry_floor:.3e}")
    return TransitionMatrix(q, kind)


@dataclass
class DiagnosticRun:
    """Everything captured while re-running a rank-1 solve with oracle access.

    Per captured state t = 0..T: the ratio statistics and the walk matrix
    P_t extracted from that state.  Pairwise checks (walk consistency,
    envelope monotonicity) cover t >= 1.  `violations()` aggregates every
    failed check; a compliant run returns an empty list.
    """

    kind: str
    entry_bound: float
    max_degree: int
    ts: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    spread_u: list = field(default_factory=list)
    max_u: list = field(default_factory=list)
    min_u: list = field(default_factory=list)
    row_sum_err: list = field(default_factory=list)
    min_nonzero_p: list = field(default_factory=list)
    consistency_err: list = field(default_factory=list)  # (t, rel err), t >= 1
    matrices: list | None = None
    trace: Trace | None = None
    bound_violations: list = field(default_factory=list)
    envelope_violations: list = field(default_factory=list)
    consistency_violations: list = field(default_factory=list)
    floor_violations: list = field(default_factory=list)
    rowsum_violations: list = field(default_factory=list)

    def violations(self) -> list:
        return (self.bound_violations + self.envelope_violations
                + self.consistency_violations + self.floor_violations
                + self.rowsum_violations)


def diagnose(inst: Instance, init, config: SolveConfig | None = None,
             keep_matrices: bool = False) -> DiagnosticRun:
    """Run a rank-1 solve while materializing and checking the proof objects.

    Needs an instance with a positivity bound (entry_bound) so the iterate
    envelope [b^3, 1/b^3] and the walk-entry floor b^6/max_degree are
    defined.  Captures every iteration regardless of config.record_every.
    """
    if inst.rank != 1:
        raise AnalysisError("diagnostics are defined for rank-1 instances only")
    if inst.entry_bound is None:
        raise AnalysisError("diagnostics need an instance with an entry bound")
    if config is None:
        config = SolveConfig()
    b = inst.entry_bound
    delta = graph_max_degree(inst.graph)
    floor = b ** 6 / delta
    lo, hi = b ** 3, 1.0 / b ** 3
    diag = DiagnosticRun(kind=config.algorithm, entry_bound=b, max_degree=delta)
    if keep_matrices:
        diag.matrices = []
    last_matrix: list = []

    def observer(t: int, state) -> None:
        rv = ratio_vectors(state, inst)
        if isinstance(state, MessageState):
            values = np.concatenate((state.x_msgs[:, 0], state.y_msgs[:, 0]))
        else:
            values = np.concatenate((state.x[:, 0], state.y[:, 0]))
        if values.min() < lo * (1 - BOUND_SLACK) or \
                values.max() > hi * (1 + BOUND_SLACK):
            diag.bound_violations.append(
                f"t={t}: iterate range [{values.min():.6g}, {values.max():.6g}] "
                f"leaves [{lo:.6g}, {hi:.6g}]")
        P = extract_transition_matrix(state, inst)
        if keep_matrices:
            diag.matrices.append(P.matrix)
        rs = P.row_sum_error
        if rs > ROW_SUM_TOL:
            diag.rowsum_violations.append(f"t={t}: row sum error {rs:.3e}")
        report = verify_entry_lower_bound(P, b, delta)
        if not report.ok:
            diag.floor_violations.append(
                f"t={t}: {len(report.violations)} walk entries below "
                f"{floor:.3e} (min {report.min_nonzero:.3e})")
        u = rv.u
        if diag.ratios:
            u_prev = diag.ratios[-1]
            t_prev = diag.ts[-1]
            if t_prev >= 1:
                if u.max() > u_prev.max() + ENVELOPE_TOL or \
                        u.min() < u_prev.min() - ENVELOPE_TOL:
                    diag.envelope_violations.append(
                        f"t={t_prev}->{t}: envelope "
                        f"[{u_prev.min():.6g}, {u_prev.max():.6g}] -> "
                        f"[{u.min():.6g}, {u.max():.6g}]")
                predicted = last_matrix[0] @ u_prev
                err = float(np.abs(predicted - u).max()
                            / max(np.abs(u).max(), 1e-300))
                diag.consistency_err.append((t_prev, err))
                if err > CONSISTENCY_TOL:
                    diag.consistency_violations.append(
                        f"t={t_prev}->{t}: walk prediction off by {err:.3e}")
        last_matrix[:] = [P.matrix]
        diag.ts.append(t)
        diag.ratios.append(u)
        diag.spread_u.append(metrics.spread(u))
        diag.max_u.append(float(u.max()))
        diag.min_u.append(float(u.min()))
        diag.row_sum_err.append(rs)
        diag.min_nonzero_p.append(P.min_nonzero)

    _, trace = run(inst, init, config, observer=observer)
    diag.trace = trace
    return diag


def contraction_trace(diag: DiagnosticRun, delta: float | None = None):
    """Spread of the row-side ratios per captured iteration.

    Asserts the monotone envelope on every checked transition and, when
    ``delta`` is given, that the final spread dropped below it.  Returns the
    (t, spread) sequence.
    """
    if diag.envelope_violations:
        raise AnalysisError(
            f"{len(diag.envelope_violations)} envelope violations: "
            f"{diag.envelope_violations[0]}")
    out = list(zip(diag.ts, diag.spread_u))
    if delta is not None and diag.spread_u and diag.spread_u[-1] >= delta:
        raise AnalysisError(
            f"final spread {diag.spread_u[-1]:.6g} did not reach {delta:.6g}")
    return out


DIAG_CSV_HEADER = "t,spread_u,max_u,min_u,min_nonzero_P,row_sum_err"


def write_diagnostics_csv(diag, path) -> None:
    """CSV "t,spread_u,max_u,min_u,min_nonzero_P,row_sum_err".

    Accepts a DiagnosticRun or the row tuples read_diagnostics_csv returns.
    """
    if isinstance(diag, DiagnosticRun):
        rows = zip(diag.ts, diag.spread_u, diag.max_u, diag.min_u,
                   diag.min_nonzero_p, diag.row_sum_err)
    else:
        rows = diag
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(DIAG_CSV_HEADER + "\n")
        for t, *values in rows:
            fh.write(",".join([str(int(t))] + [fmt(v) for v in values]) + "\n")


def read_diagnostics_csv(path):
    """Rows of a diagnostics CSV as (t, spread, max, min, min_nonzero, row_err)."""
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != DIAG_CSV_HEADER:
            raise ValueError(f"unexpected diagnostics header {header!r} in {path}")
        for line in fh:
            t, *values = line.strip().split(",")
            rows.append((int(t), *(float(v) for v in values)))
    return rows
