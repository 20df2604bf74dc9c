"""Figure rendering for the CLI report paths.

Each report subcommand writes its delimited output and, unless disabled, a
PNG figure next to it.  Uses the Agg backend; nothing here opens a window.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_STYLE = {
    "figure.figsize": (7.0, 4.2),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 9,
    "axes.titlesize": 11,
}


def _axes(title, xlabel, ylabel):
    plt.rcParams.update(_STYLE)
    fig, ax = plt.subplots()
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    return fig, ax


def render_rme_table(table, path, xlabel="scenario"):
    """Estimation error vs sweep value, one line with error bars per estimator."""
    fig, ax = _axes("Riemannian mean error", xlabel, "RME")
    x = np.arange(len(table.rows))
    for j, name in enumerate(table.cols):
        ax.errorbar(x, table.values[:, j], yerr=table.stderr[:, j],
                    marker="o", capsize=3, label=name)
    ax.set_xticks(x, table.rows)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def render_detection_curves(table, path, sweep: str):
    """Detection probability vs target frequency or SCR."""
    xlabel = "normalized target frequency" if sweep == "freq" else "SCR (dB)"
    fig, ax = _axes("Detection probability", xlabel, "Pd")
    x = np.array([float(v) for v in table.rows])
    for j, name in enumerate(table.cols):
        ax.errorbar(x, table.values[:, j], yerr=table.stderr[:, j],
                    marker=".", capsize=2, label=name)
    ax.set_ylim(-0.02, 1.02)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def render_pfa_table(table, path):
    """Realized false-alarm probabilities as grouped bars (log scale)."""
    fig, ax = _axes("Realized PFA under a frozen threshold", "scenario", "PFA")
    n_rows, n_cols = table.values.shape
    x = np.arange(n_rows)
    width = 0.8 / max(n_cols, 1)
    for j, name in enumerate(table.cols):
        vals = np.maximum(table.values[:, j], 1e-6)
        ax.bar(x + (j - (n_cols - 1) / 2) * width, vals, width,
               yerr=table.stderr[:, j], capsize=2, label=name)
    ax.set_yscale("log")
    ax.set_xticks(x, table.rows, rotation=15, ha="right", fontsize=8)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def render_spectra(result: dict, freqs: np.ndarray, path):
    """Range-frequency power maps (dB), one panel per estimator."""
    plt.rcParams.update(_STYLE)
    names = list(result)
    n = len(names)
    ncols = min(3, n)
    nrows = (n + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(4.2 * ncols, 2.8 * nrows),
                             squeeze=False)
    for k, name in enumerate(names):
        ax = axes[k // ncols][k % ncols]
        spec = result[name]
        power_db = 10 * np.log10(np.maximum(spec, 1e-12))
        im = ax.imshow(power_db.T, origin="lower", aspect="auto",
                       extent=(0, spec.shape[0], freqs[0], freqs[-1]),
                       cmap="viridis")
        ax.set_title(name, fontsize=9)
        ax.set_xlabel("range cell")
        ax.set_ylabel("normalized frequency")
        fig.colorbar(im, ax=ax, shrink=0.85)
    for k in range(n, nrows * ncols):
        axes[k // ncols][k % ncols].axis("off")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
