"""Report figures (SVG). Rendering is deterministic: fixed hash salt, no
embedded creation date."""
from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluate import MetricsReport  # noqa: E402
from .ingest import AsciiGrid  # noqa: E402
from .scaling import PowerLawFit, SweepRow, aggregate_sweep  # noqa: E402

plt.rcParams["svg.hashsalt"] = "spectrees"


def _save(fig, path: Union[str, Path]) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_error_curve(rows: Sequence[SweepRow], fit: Optional[PowerLawFit],
                     path: Union[str, Path], xlabel: str = "training samples per class") -> None:
    xs, oe, me = aggregate_sweep(rows)
    fig, ax = plt.subplots(figsize=(5.5, 4))
    per_fold_x = [r.x for r in rows]
    per_fold_e = [r.overall_error for r in rows]
    ax.loglog(per_fold_x, per_fold_e, ".", color="0.7", ms=4, label="folds")
    ax.loglog(xs, oe, "o-", color="tab:blue", label="mean overall error")
    ax.loglog(xs, me, "s--", color="tab:orange", label="mean macro error")
    if fit is not None:
        grid = np.geomspace(xs.min(), xs.max() * 4, 64)
        ax.loglog(grid, fit.amplitude * grid ** (-fit.exponent), "-",
                  color="tab:red", lw=1,
                  label=f"fit: {fit.amplitude:.3g} x^-{fit.exponent:.3f}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("classification error")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def plot_confusion(report: MetricsReport, path: Union[str, Path],
                   names: Optional[dict[int, str]] = None) -> None:
    names = names or {}
    labels = [names.get(c, str(c)) for c in report.classes]
    cm = report.confusion.astype(float)
    row_tot = np.maximum(report.reference_counts.astype(float), 1)
    frac = cm / row_tot[:, None]
    fig, ax = plt.subplots(figsize=(5.5, 5))
    ax.imshow(frac, cmap="Blues", vmin=0, vmax=1)
    for i in range(len(labels)):
        for j in range(len(labels)):
            if cm[i, j] > 0:
                ax.text(j, i, int(cm[i, j]), ha="center", va="center", fontsize=7,
                        color="white" if frac[i, j] > 0.5 else "black")
    ax.set_xticks(range(len(labels)), labels, rotation=45, ha="right", fontsize=8)
    ax.set_yticks(range(len(labels)), labels, fontsize=8)
    ax.set_xlabel("predicted")
    ax.set_ylabel("reference")
    fig.tight_layout()
    _save(fig, path)


def plot_chm(grid: AsciiGrid, path: Union[str, Path], title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(5.5, 5))
    extent = (grid.xllcorner, grid.xllcorner + grid.ncols * grid.cellsize,
              grid.yllcorner, grid.yllcorner + grid.nrows * grid.cellsize)
    im = ax.imshow(grid.values, cmap="viridis", extent=extent, origin="upper")
    fig.colorbar(im, ax=ax, shrink=0.8, label="height (m)")
    if title:
        ax.set_title(title, fontsize=9)
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    fig.tight_layout()
    _save(fig, path)
