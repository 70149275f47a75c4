"""Scalar quality measures for completion iterates.

All functions are pure.  ``rms`` is the headline error: the Frobenius
distance between the reconstruction and the full ground-truth product,
divided by n, so it measures recovery of the *unobserved* entries too.
``objective`` is the quantity the solvers actually minimize (observed
residuals only).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .instance import Instance, InstanceView

__all__ = ["MetricReport", "rms", "objective", "subspace_distance", "spread"]


def rms(X: np.ndarray, Y: np.ndarray, inst: "Instance") -> float:
    """(1/n) * Frobenius norm of (ground truth - X @ Y.T), over all n^2 entries."""
    X = np.asarray(X, dtype=float).reshape(inst.n, -1)
    Y = np.asarray(Y, dtype=float).reshape(inst.n, -1)
    if X.shape != inst.alpha.shape or Y.shape != inst.beta.shape:
        raise ValueError(
            f"factor shapes {X.shape}/{Y.shape} do not match the instance "
            f"{inst.alpha.shape}"
        )
    diff = inst.alpha @ inst.beta.T - X @ Y.T
    return float(np.linalg.norm(diff) / inst.n)


def objective(X: np.ndarray, Y: np.ndarray, view: "InstanceView") -> float:
    """Sum of squared residuals over the observed edges only."""
    g = view.graph
    X = np.asarray(X, dtype=float).reshape(g.n_rows, -1)
    Y = np.asarray(Y, dtype=float).reshape(g.n_cols, -1)
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"rank mismatch between factors: {X.shape} vs {Y.shape}")
    preds = np.einsum("er,er->e", X[g.rows], Y[g.cols])
    return float(np.sum((preds - view.values) ** 2))


def subspace_distance(u: np.ndarray, v: np.ndarray) -> float:
    """1 - cos^2 of the angle between two nonzero vectors.

    Zero for collinear vectors, one for orthogonal; invariant to rescaling
    either argument.
    """
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("subspace distance is undefined for a zero vector")
    cos = float(u @ v) / (nu * nv)
    return max(0.0, 1.0 - cos * cos)


def spread(w) -> float:
    """max - min of a non-empty vector."""
    w = np.asarray(w, dtype=float).ravel()
    if w.size == 0:
        raise ValueError("spread of an empty vector")
    return float(w.max() - w.min())


@dataclass(frozen=True)
class MetricReport:
    """One-shot evaluation of a rank-1 factor pair against its instance."""

    rms: float
    objective: float
    subspace_dist_x: float
    subspace_dist_y: float
    spread_u: float
    spread_v: float


def metric_report(X: np.ndarray, Y: np.ndarray, inst: "Instance") -> MetricReport:
    """All rank-1 measures at once (ratio spreads need oracle factors)."""
    if inst.rank != 1:
        raise ValueError("metric_report needs a rank-1 instance")
    x = np.asarray(X, dtype=float).ravel()
    y = np.asarray(Y, dtype=float).ravel()
    return MetricReport(
        rms=rms(x, y, inst),
        objective=objective(x, y, inst.view()),
        subspace_dist_x=subspace_distance(x, inst.alpha[:, 0]),
        subspace_dist_y=subspace_distance(y, inst.beta[:, 0]),
        spread_u=spread(x / inst.alpha[:, 0]),
        spread_v=spread(y / inst.beta[:, 0]),
    )
