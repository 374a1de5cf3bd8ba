"""Matplotlib figures written next to the CSV artifacts."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .music import SpectrumGrid  # noqa: E402

golden_mean = (np.sqrt(5) - 1.0) / 2.0
fig_width = 4.5

params = {
    "axes.labelsize": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 8,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.figsize": [fig_width, fig_width * golden_mean],
    "figure.dpi": 150,
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
    "savefig.bbox": "tight",
}


def new(nrows=1, ncols=1, **kw):
    with plt.rc_context(params):
        return plt.subplots(nrows=nrows, ncols=ncols, **kw)


def save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(params):
        fig.savefig(path)
    plt.close(fig)
    return path


def amplifier_curve(p_in, p_out, path):
    fig, ax = new()
    ax.loglog(p_in, p_out, "-")
    ax.set_xlabel("input power (W)")
    ax.set_ylabel("output power (W)")
    return save(fig, path)


def series(x, curves: dict[str, np.ndarray], xlabel: str, ylabel: str, path, logy=False, logx=False):
    """One line per entry of ``curves`` against a shared x axis."""
    fig, ax = new()
    for label, y in curves.items():
        ax.plot(x, y, "o-", label=label)
    if logy:
        ax.set_yscale("log")
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if len(curves) > 1:
        ax.legend()
    return save(fig, path)


def traces(histories: dict[str, np.ndarray], ylabel: str, path):
    fig, ax = new()
    for label, h in histories.items():
        ax.semilogy(np.arange(1, len(h) + 1), np.maximum(h, 1e-300), label=label)
    ax.set_xlabel("iteration")
    ax.set_ylabel(ylabel)
    ax.legend()
    return save(fig, path)


def spectrum(grid: SpectrumGrid, path, truth_deg=None, title=None):
    """Heat map of the spectrum (dB) with elevation and azimuth cuts through its peak."""
    db = grid.values_db - grid.values_db.max()
    i, j = np.unravel_index(int(np.argmax(db)), db.shape)
    fig, axes = new(1, 3, figsize=(3 * fig_width * 0.8, fig_width * 0.8 * golden_mean * 1.3))
    im = axes[0].pcolormesh(grid.phis_deg, grid.thetas_deg, db, shading="auto", cmap="viridis")
    fig.colorbar(im, ax=axes[0], label="dB (rel. peak)")
    axes[0].set_xlabel("azimuth (deg)")
    axes[0].set_ylabel("elevation (deg)")
    axes[1].plot(grid.thetas_deg, db[:, j])
    axes[1].set_xlabel("elevation (deg)")
    axes[2].plot(grid.phis_deg, db[i, :])
    axes[2].set_xlabel("azimuth (deg)")
    for ax in axes[1:]:
        ax.set_ylabel("dB (rel. peak)")
    if truth_deg is not None:
        axes[0].plot([truth_deg[1]], [truth_deg[0]], "r+", markersize=8)
        axes[1].axvline(truth_deg[0], color="0.5", ls="--")
        axes[2].axvline(truth_deg[1], color="0.5", ls="--")
    if title:
        fig.suptitle(title)
    return save(fig, path)
