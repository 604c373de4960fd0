"""Optional PNG figures next to the CSV outputs.

matplotlib is imported lazily with the Agg backend, so the rest of the
package never needs it.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def cdf_band_figure(path: Path, rows, dim: int) -> None:
    plt = _pyplot()
    sel = [r for r in rows if r[0] == dim]
    if not sel:
        return
    x = np.array([r[2] for r in sel])
    cols = np.array([r[3:7] for r in sel])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.fill_between(x, cols[:, 0], cols[:, 1], step="post", color="0.85", label="prior")
    ax.step(x, cols[:, 2], where="post", color="C0", label="posterior lower")
    ax.step(x, cols[:, 3], where="post", color="C3", label="posterior upper")
    ax.set_xlabel(sel[0][1])
    ax.set_ylabel("cdf bounds")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def polytope_figure(path: Path, poly, atoms=None, names=("x0", "x1")) -> None:
    if poly.dim != 2:
        return
    plt = _pyplot()
    v = poly.vertices()
    fig, ax = plt.subplots(figsize=(4.5, 4))
    if atoms is not None:
        ax.plot(atoms.atoms[:, 0], atoms.atoms[:, 1], ".", ms=1.5, color="0.6", label="atoms")
    closed = np.vstack([v, v[:1]])
    ax.plot(closed[:, 0], closed[:, 1], "-", color="C0", label="expectation")
    ax.set_xlabel(names[0])
    ax.set_ylabel(names[1])
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def posterior_figures(out: Path, rows, poly, atoms) -> None:
    out = Path(out)
    names = {}
    for r in rows:
        names.setdefault(r[0], r[1])
    for d, name in names.items():
        cdf_band_figure(out / f"cdf_bounds_{name}.png", rows, d)
    polytope_figure(out / "expectation.png", poly, atoms, [names[d] for d in sorted(names)][:2])


def mse_figure(path: Path, table) -> None:
    plt = _pyplot()
    k = np.array(table.kappas[:-1])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for d in range(table.normalized.shape[1]):
        ax.plot(k, table.normalized[:-1, d], "-o", ms=3, lw=0.8)
    ax.plot(k, table.median_normalized()[:-1], "k-", lw=2, label="median")
    ax.set_xscale("log")
    ax.set_xlabel("kappa")
    ax.set_ylabel("normalized MSE")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
