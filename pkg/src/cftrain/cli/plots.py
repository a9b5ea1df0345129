"""Static SVG figures with fixed styling so repeated runs give identical files."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .. import nn  # noqa: E402
from ..data import Dataset  # noqa: E402

PALETTE = ("#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02")
FIGSIZE = (5.0, 4.0)
GRID_RES = 120

_STYLE = {
    "svg.hashsalt": "cftrain",
    "svg.fonttype": "none",
    "font.family": "DejaVu Sans",
    "font.size": 9,
}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def boundary_plot(model: nn.MlpModel, data: Dataset, counterfactuals, path: str | Path,
                  title: str = "") -> Path | None:
    """Training points by class, counterfactuals as stars and the predicted
    class regions. Returns ``None`` (and writes nothing) unless the data are
    two-dimensional."""
    if data.dim != 2:
        return None
    cf = np.asarray(counterfactuals, dtype=np.float64).reshape(-1, 2)
    pts = np.vstack([data.X, cf])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    pad = 0.05 * np.maximum(hi - lo, 1e-9)
    lo, hi = lo - pad, hi + pad
    g1, g2 = np.meshgrid(np.linspace(lo[0], hi[0], GRID_RES), np.linspace(lo[1], hi[1], GRID_RES))
    pred = nn.predict(model, np.column_stack([g1.ravel(), g2.ravel()])).reshape(g1.shape)
    colors = [PALETTE[k % len(PALETTE)] for k in range(data.n_classes)]
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=FIGSIZE)
        levels = np.arange(data.n_classes + 1) - 0.5
        ax.contourf(g1, g2, pred, levels=levels, colors=colors, alpha=0.15)
        if data.n_classes > 1:
            ax.contour(g1, g2, pred, levels=levels[1:-1], colors="k", linewidths=0.8)
        for k in range(data.n_classes):
            Xk = data.X[data.y == k]
            ax.scatter(Xk[:, 0], Xk[:, 1], s=6, color=colors[k], alpha=0.6, label=f"class {k}")
        if cf.shape[0]:
            ax.scatter(cf[:, 0], cf[:, 1], s=60, marker="*", color="k", edgecolors="w",
                       linewidths=0.4, label="counterfactual")
        ax.set_xlim(lo[0], hi[0])
        ax.set_ylim(lo[1], hi[1])
        ax.set_xlabel(data.feature_names[0])
        ax.set_ylabel(data.feature_names[1])
        ax.set_title(title)
        ax.legend(loc="upper right", fontsize=7)
        return _save(fig, Path(path))


def robust_figure(curves: Mapping[str, Sequence[tuple[float, float]]], title: str = ""):
    """Accuracy against attack budget, one line per model. The x-axis spans
    exactly the budgets present in the curves."""
    eps = sorted({float(e) for c in curves.values() for e, _ in c})
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=FIGSIZE)
        for i, (name, curve) in enumerate(curves.items()):
            e, a = zip(*curve) if curve else ((), ())
            ax.plot(e, a, marker="o", ms=3, color=PALETTE[i % len(PALETTE)], label=name)
        if eps:
            ax.set_xticks(eps)
            if len(eps) > 1:
                ax.set_xlim(eps[0], eps[-1])
            else:
                ax.set_xlim(eps[0] - 0.5, eps[0] + 0.5)
        ax.set_ylim(0.0, 1.02)
        ax.set_xlabel("attack budget (l-inf)")
        ax.set_ylabel("accuracy")
        ax.set_title(title)
        if curves:
            ax.legend(loc="lower left", fontsize=7)
    return fig


def robust_plot(curves: Mapping[str, Sequence[tuple[float, float]]], path: str | Path, title: str = "") -> Path:
    fig = robust_figure(curves, title)
    with plt.rc_context(_STYLE):
        return _save(fig, Path(path))


def emit_plots(robust: Mapping[str, Mapping[str, Sequence[tuple[float, float]]]], out_dir: str | Path,
               boundaries: Sequence[tuple[str, nn.MlpModel, Dataset, np.ndarray]] = ()) -> tuple[list[Path], list[str]]:
    """Write all figures under ``out_dir/plots``.

    ``robust`` maps ``"model/scenario"`` to per-attack curves; one figure is
    drawn per (attack, scenario). ``boundaries`` holds ``(label, model, data,
    counterfactuals)`` entries. Returns the written paths and notes about
    skipped figures.
    """
    out = Path(out_dir) / "plots"
    written, notes = [], []
    grouped: dict[tuple[str, str], dict[str, Sequence[tuple[float, float]]]] = {}
    for key, per_attack in robust.items():
        name, _, scenario = key.partition("/")
        for attack, curve in per_attack.items():
            grouped.setdefault((attack, scenario), {})[name] = curve
    for (attack, scenario), curves in sorted(grouped.items()):
        written.append(robust_plot(curves, out / f"robust_{attack}_{scenario}.svg", f"{attack.upper()} ({scenario})"))
    for label, model, data, cf in boundaries:
        p = boundary_plot(model, data, cf, out / f"boundary_{label}.svg", label)
        if p is None:
            notes.append(f"boundary plot for {label} skipped: data have {data.dim} features, need 2")
        else:
            written.append(p)
    return written, notes
