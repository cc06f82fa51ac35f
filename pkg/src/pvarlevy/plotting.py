"""PNG renderings of the CLI report data (gnuplot scripts stay the primary output)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .core_path import CadlagPath  # noqa: E402


def _finish(fig, out):
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def plot_small_ball(eps, scaled, limits: dict, out):
    """Scaled log-probabilities against eps with horizontal reference rates."""
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    eps = np.asarray(eps, dtype=float)
    scaled = np.asarray(scaled, dtype=float)
    ok = np.isfinite(scaled)
    if ok.any():
        ax.semilogx(eps[ok], scaled[ok], "o-", color="k", label="exact CDF")
    for (name, val), style in zip(limits.items(), ("--", ":", "-.")):
        ax.axhline(val, ls=style, color="0.4", label=f"{name} = {val:.4g}")
    ax.set_xlabel(r"$\varepsilon$")
    ax.set_ylabel(r"$-\varepsilon^{\delta/(1-\delta)}\log P[S_1<\varepsilon]$")
    ax.legend(frameon=False, fontsize=8)
    return _finish(fig, out)


def plot_path(path: CadlagPath, out, title: str = ""):
    """Coordinates of a node path against time, jumps drawn as gaps."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    t, v, k = path.times, path.values, path.kinds
    cuts = np.flatnonzero((t[1:] == t[:-1])) + 1
    for i in range(path.dim):
        for seg_t, seg_v in zip(np.split(t, cuts), np.split(v[:, i], cuts)):
            ax.plot(seg_t, seg_v, lw=0.8, color=f"C{i}")
    ax.set_xlabel("t")
    if title:
        ax.set_title(title, fontsize=9)
    return _finish(fig, out)
