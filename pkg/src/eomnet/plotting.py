"""Optional PNG figures for the command line (needs matplotlib).

matplotlib is imported lazily and forced onto the non-interactive Agg
backend, so importing this module never opens a window.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np


def require_backend():
    """Import pyplot on the Agg backend; raises ImportError without matplotlib."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps repeated renders identical
    fig.savefig(path, dpi=120, metadata={"Software": None})


def squeezing_figure(omega, spectra, thetas, path: Path) -> None:
    """Homodyne spectra against frequency with the shot-noise level at 1."""
    plt = require_backend()
    fig, ax = plt.subplots(figsize=(6, 4))
    f = np.asarray(omega) / (2 * math.pi)
    for theta, row in zip(thetas, np.atleast_2d(spectra)):
        ax.plot(f, row, lw=1.2, label=f"theta = {theta / math.pi:.3g} pi")
    ax.axhline(1.0, color="k", ls="--", lw=0.8)
    ax.set_xlabel("modulation frequency (Hz)")
    ax.set_ylabel("spectrum / shot noise")
    ax.legend(frameon=False)
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def smatrix_figure(sm, path: Path, max_curves: int = 12) -> None:
    """|S|^2 in dB for the largest elements of the bosonic matrix."""
    plt = require_backend()
    data = np.abs(sm.bosonic) ** 2
    peak = data.max(axis=0)
    order = np.argsort(peak, axis=None)[::-1][:max_curves]
    fig, ax = plt.subplots(figsize=(6, 4))
    f = sm.omega / (2 * math.pi)
    labels = sm.labels
    with np.errstate(divide="ignore"):
        for flat in sorted(order):
            a, b = np.unravel_index(flat, peak.shape)
            ax.plot(f, 10 * np.log10(data[:, a, b]), lw=1.0, label=f"{labels[b]} -> {labels[a]}")
    ax.set_xlabel("modulation frequency (Hz)")
    ax.set_ylabel("|S|^2 (dB)")
    ax.legend(frameon=False, fontsize=7, ncol=2)
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)
