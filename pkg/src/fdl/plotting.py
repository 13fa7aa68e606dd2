"""Figures for the CLI report path, written next to the CSV they are drawn from.

Only the Agg backend is used; nothing is ever shown on screen.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RCPARAMS = {
    "figure.dpi": 120,
    "figure.figsize": (6.0, 3.6),
    "savefig.bbox": "tight",
    "savefig.pad_inches": 0.05,
    "axes.grid": True,
    "grid.color": "lightgray",
    "grid.linewidth": 0.5,
    "axes.linewidth": 0.75,
    "lines.linewidth": 1.5,
    "lines.markersize": 4,
    "font.size": 9,
    "legend.frameon": False,
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_curve(curve, path) -> Path:
    with plt.rc_context(RCPARAMS):
        fig, ax = plt.subplots()
        ax.plot(curve.times(), curve.as_float(), lw=0.8)
        ax.set_xlabel("t")
        ax.set_ylabel("X(t)")
        ax.set_title(f"a={curve.a}, b={curve.b}, level {curve.level}, H={curve.order:.4f}")
        return _save(fig, path)


def plot_hls(rows, path) -> Path:
    """max_ratio and normalized max iota against level."""
    lv = [int(r["level"]) for r in rows]
    with plt.rc_context(RCPARAMS):
        fig, ax = plt.subplots()
        ax.plot(lv, [float(r["max_ratio"]) for r in rows], "o-", label="max ratio")
        ax.plot(lv, [float(r["max_iota_normalized"]) for r in rows], "s--", label="normalized max iota")
        ax.set_xlabel("level n")
        ax.set_yscale("log")
        ax.legend()
        return _save(fig, path)


def plot_strichartz(rows, path) -> Path:
    """Strichartz ratio against width, one line per level."""
    with plt.rc_context(RCPARAMS):
        fig, ax = plt.subplots()
        for lv in sorted({int(r["level"]) for r in rows}):
            sel = [r for r in rows if int(r["level"]) == lv]
            ax.plot([float(r["width"]) for r in sel], [float(r["ratio"]) for r in sel], "o-", label=f"n={lv}")
        ax.set_xscale("log", base=2)
        ax.set_xlabel("Gaussian width")
        ax.set_ylabel("ratio")
        ax.legend()
        return _save(fig, path)


def plot_trace(rows, path) -> Path:
    """Peak, gradient norm and relative mass drift over time."""
    t = np.array([float(r["t"]) for r in rows])
    mass = np.array([float(r["mass"]) for r in rows])
    with plt.rc_context(RCPARAMS):
        fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(6.0, 5.0))
        ax1.plot(t, [float(r["peak"]) for r in rows], label="peak")
        ax1.plot(t, [float(r["grad_norm"]) for r in rows], label="grad norm")
        ax1.legend()
        ax2.plot(t, np.abs(mass / mass[0] - 1.0) + 1e-300)
        ax2.set_yscale("log")
        ax2.set_ylabel("|mass drift|")
        ax2.set_xlabel("t")
        return _save(fig, path)


def plot_picard(distances, path) -> Path:
    with plt.rc_context(RCPARAMS):
        fig, ax = plt.subplots()
        it = np.arange(1, len(distances) + 1)
        ax.semilogy(it, np.maximum(distances, 1e-300), "o-")
        ax.set_xlabel("iteration")
        ax.set_ylabel("consecutive distance")
        return _save(fig, path)


def plot_scan(rows, path) -> Path:
    with plt.rc_context(RCPARAMS):
        fig, ax = plt.subplots()
        for name, marker in (("modulated", "o-"), ("identity", "s--")):
            sel = [r for r in rows if r["curve"] == name]
            if sel:
                ax.plot([float(r["sigma"]) for r in sel], [float(r["peak_growth"]) for r in sel], marker, label=name)
        ax.set_xlabel("sigma")
        ax.set_ylabel("peak growth")
        ax.legend()
        return _save(fig, path)
