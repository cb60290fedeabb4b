"""PNG figures drawn from the same arrays the CSV emitters write.

The CSV files are the output contract; these figures are a convenience
rendered next to them when the CLI is given ``--figures``.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_STYLE = {
    "figure.dpi": 100,
    "savefig.dpi": 120,
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
}
# keep PNG bytes independent of the matplotlib version string
_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, metadata=_META)
    plt.close(fig)
    return path


def plot_laws(laws, target_pdf, path: Path) -> Path:
    """One panel per checkpoint: survivor histogram with the target density on top."""
    with plt.rc_context(_STYLE):
        n = max(len(laws), 1)
        fig, axes = plt.subplots(1, n, figsize=(2.6 * n, 2.4), sharey=False, squeeze=False)
        for ax, law in zip(axes[0], laws):
            if law.empty:
                ax.text(0.5, 0.5, "no survivors", ha="center", va="center", transform=ax.transAxes)
            else:
                edges = law.bin_edges
                ax.stairs(law.density, edges, fill=True, alpha=0.5, color="C0")
                if target_pdf is not None:
                    lo, hi = min(edges[0], -6.0), max(edges[-1], 4.0)
                    ys = np.linspace(lo, hi, 400)
                    ax.plot(ys, target_pdf(ys), color="C3", lw=1.2)
            ax.set_title(f"t = {law.t:g}  (n = {law.n_survivors})")
            ax.set_xlabel("x")
        axes[0][0].set_ylabel("density")
        return _save(fig, path)


def plot_survival(times, survival, fit, path: Path) -> Path:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        keep = survival > 0
        ax.semilogy(times[keep], survival[keep], color="C0", lw=1.0, label="estimate")
        if fit is not None:
            ts = np.linspace(*fit.window, 50)
            ax.semilogy(ts, np.exp(fit.intercept + fit.slope * ts), "--", color="C3", label=f"fit, slope {fit.slope:.4f}")
        ax.set_xlabel("t")
        ax.set_ylabel("P(survive to t)")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_kappa(ys, kappa_tilde, kappa, path: Path) -> Path:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        ax.plot(ys, kappa_tilde, label="raw rate", color="C1")
        ax.plot(ys, kappa, label="shifted rate", color="C0")
        ax.axhline(0.0, color="k", lw=0.6)
        ax.set_xlabel("y")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_spectrum(numeric, analytic, path: Path) -> Path:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 3.0))
        idx = np.arange(len(numeric))
        ax.plot(idx, numeric, "o", label="discretised", color="C0")
        if analytic is not None:
            ax.plot(idx, analytic, "x", label="closed form", color="C3", ms=8)
        ax.set_xlabel("index")
        ax.set_ylabel("eigenvalue")
        ax.set_xticks(idx)
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_langevin(mean, var, ref_pdf, path: Path) -> Path:
    """Gaussian with the pooled long-run moments against the reference density."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        sd = float(np.sqrt(var))
        ys = np.linspace(mean - 4 * sd, mean + 4 * sd, 400)
        ax.plot(ys, np.exp(-0.5 * ((ys - mean) / sd) ** 2) / (sd * np.sqrt(2 * np.pi)), label="moment match", color="C0")
        if ref_pdf is not None:
            ax.plot(ys, ref_pdf(ys), "--", label="reference", color="C3")
        ax.set_xlabel("x")
        ax.legend(frameon=False)
        return _save(fig, path)
