"""PNG figures for the report bundle.

Figures are drawn on bare ``Figure`` objects with the Agg canvas, so nothing
touches pyplot's global state. PNG metadata is stripped and the DPI fixed,
which makes the bytes depend only on the data and the matplotlib version.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

from matplotlib.backends.backend_agg import FigureCanvasAgg  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402
import numpy as np  # noqa: E402

DPI = 100
STYLE = {
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "path.simplify": False,
}


def _figure(width=6.0, height=4.0):
    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=(width, height), dpi=DPI)
        FigureCanvasAgg(fig)
        ax = fig.add_subplot(1, 1, 1)
    return fig, ax


def save(fig: Figure, path) -> Path:
    path = Path(path)
    with matplotlib.rc_context(STYLE):
        fig.tight_layout()
        fig.savefig(path, format="png", dpi=DPI, metadata={"Software": None})
    return path


def exposure_curves(curves: dict, path, title="Fitted exposure curves"):
    """``curves`` maps a label to ``(t, gamma)`` arrays."""
    fig, ax = _figure()
    t0 = None
    for label, (t, gamma) in curves.items():
        ax.plot(t, gamma, lw=1.4, label=label)
        t0 = t
    if t0 is not None:
        ax.plot(t0, t0, color="grey", ls="--", lw=1, label="pro rata")
    ax.set_xlabel("exposure t")
    ax.set_ylabel("gamma(t)")
    ax.set_title(title)
    ax.legend()
    return save(fig, path)


def concentration_lorenz(pairs: dict, path):
    """``pairs`` maps a model name to a :class:`CurvePair`."""
    fig, ax = _figure()
    for name, curves in pairs.items():
        step = max(1, len(curves.theta) // 2000)
        line, = ax.plot(curves.theta[::step], curves.cc[::step], lw=1.2, label=f"{name} CC")
        ax.plot(curves.theta[::step], curves.lc[::step], lw=1.0, ls="--", color=line.get_color(), label=f"{name} LC")
    ax.plot([0, 1], [0, 1], color="grey", lw=0.8)
    ax.set_xlabel("theta")
    ax.set_ylabel("cumulative share")
    ax.legend(fontsize=7)
    return save(fig, path)


def murphy(m_grid, losses: dict, path):
    fig, ax = _figure()
    for name, loss in losses.items():
        ax.plot(m_grid, loss, lw=1.2, label=name)
    ax.set_xlabel("threshold m")
    ax.set_ylabel("mean elementary loss")
    ax.legend()
    return save(fig, path)


def penalty_family(grid_t, schedules: dict, path):
    """``schedules`` maps the smoothing level ``a`` to gamma_adj on ``grid_t``."""
    fig, ax = _figure()
    for a, gamma in schedules.items():
        ax.plot(grid_t, gamma - grid_t, lw=1.2, label=f"a = {a:g}")
    ax.set_xlabel("exposure t")
    ax.set_ylabel("penalty / annual premium")
    ax.legend()
    return save(fig, path)


def coefficient_paths(levels, betas: dict, path):
    """``betas`` maps a coefficient name to its values along ``levels``."""
    fig, ax = _figure()
    for name, values in betas.items():
        ax.plot(levels, values, marker="o", ms=3, lw=1.2, label=name)
    ax.set_xlabel("smoothing level a")
    ax.set_ylabel("coefficient")
    ax.legend(fontsize=7, ncol=2)
    return save(fig, path)


def gwm_trace(trace: list, path):
    rows = [r for r in trace if r["curve_change"] is not None]
    fig, ax = _figure()
    if rows:
        it = [r["iteration"] for r in rows]
        ax.semilogy(it, [max(r["curve_change"], 1e-300) for r in rows], marker="o", label="curve change")
        ax.semilogy(it, [max(r["weight_change"], 1e-300) for r in rows], marker="s", label="weight change")
    ax.set_xlabel("iteration")
    ax.set_ylabel("max change at knots")
    ax.legend()
    return save(fig, path)


def group_difference(band, path):
    fig, ax = _figure()
    t = band.grid_t
    ax.fill_between(t, band.estimate - 2 * band.se, band.estimate + 2 * band.se, alpha=0.25, lw=0)
    ax.plot(t, band.estimate, lw=1.4, label="f1 - f2")
    ax.axhline(0.0, color="grey", lw=0.8)
    ax.set_xlabel("exposure t")
    ax.set_ylabel("difference of log curves")
    ax.legend()
    return save(fig, path)


def cut_scores(scores: dict, best, path):
    fig, ax = _figure(5.0, 3.5)
    cuts = sorted(scores)
    colors = ["C3" if c == best else "C0" for c in cuts]
    ax.bar([str(c) for c in cuts], [scores[c] for c in cuts], color=colors)
    ax.set_xlabel("cut level (group 1 = levels at or below)")
    ax.set_ylabel("weighted squared difference")
    return save(fig, path)


def cumulative_shares(cumulative: dict, path):
    fig, ax = _figure()
    x = np.asarray(cumulative["exposure"])
    for key in ("premium", "pro_rata", "loss"):
        ax.plot(x, cumulative[key], lw=1.2, label=key.replace("_", " "))
    ax.set_xlabel("exposure t")
    ax.set_ylabel("cumulative proportion")
    ax.legend()
    return save(fig, path)
