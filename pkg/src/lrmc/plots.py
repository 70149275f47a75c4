"""Figure rendering for the report paths.

Every CSV the CLI emits gets a figure next to it.  CSV stays the canonical
output; figures are rendered with matplotlib's Agg backend.  SVG output is
made byte-reproducible by pinning the id hash salt and dropping the creation
date, so re-plotting the same data yields identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

__all__ = ["save_figure", "plot_trace", "plot_compare", "plot_sweep",
           "plot_diagnostics"]

_HASHSALT = "lrmc"


def save_figure(fig, path) -> None:
    """Write a figure deterministically; format follows the suffix."""
    path = str(path)
    kwargs = {}
    if path.endswith(".svg"):
        kwargs["metadata"] = {"Date": None}
    with plt.rc_context({"svg.hashsalt": _HASHSALT}):
        fig.savefig(path, **kwargs)
    plt.close(fig)


def plot_trace(records, path, title: str = "reconstruction error") -> None:
    """Error vs iteration for one run, log scale."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ts = [t for t, _, _ in records]
    vals = [v for _, v, _ in records]
    ax.semilogy(ts, vals, marker=".", lw=1)
    ax.set_xlabel("iteration")
    ax.set_ylabel("RMS")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    save_figure(fig, path)


def plot_compare(rows, path) -> None:
    """RMS (log scale) vs normalized iteration index, one curve per algorithm."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for alg in ("vls", "els"):
        pts = [(idx, v) for a, _, idx, v in rows if a == alg]
        if pts:
            ax.semilogy([p[0] for p in pts], [p[1] for p in pts],
                        marker=".", lw=1, label=alg.upper())
    ax.set_xlabel("normalized iteration index")
    ax.set_ylabel("RMS")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    save_figure(fig, path)


def plot_sweep(cells, path) -> None:
    """Failure fraction vs extra edge density c, one curve per algorithm."""
    fig, ax = plt.subplots(figsize=(6, 4))
    algs = sorted({cell.algorithm for cell in cells})
    for alg in algs:
        pts = sorted((cell.c, cell.failure_fraction)
                     for cell in cells if cell.algorithm == alg)
        ax.plot([p[0] for p in pts], [p[1] for p in pts],
                marker="o", lw=1, label=alg.upper())
    ax.set_xlabel("c (extra edges per vertex)")
    ax.set_ylabel("failure fraction")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    save_figure(fig, path)


def plot_diagnostics(diag, path) -> None:
    """Ratio spread vs iteration for a diagnostic run, log scale."""
    fig, ax = plt.subplots(figsize=(6, 4))
    positive = [(t, s) for t, s in zip(diag.ts, diag.spread_u) if s > 0]
    if positive:
        ax.semilogy([p[0] for p in positive], [p[1] for p in positive],
                    marker=".", lw=1)
    ax.set_xlabel("iteration")
    ax.set_ylabel("spread of row ratios")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    save_figure(fig, path)
