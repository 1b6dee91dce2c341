"""Report rendering: plot-ready CSV plus matplotlib figures.

Every artifact is written twice: a delimited file with the exact
numbers (17 significant digits, reproducible byte-for-byte for a fixed
config and seed) and a PNG rendered from the same arrays.  Figures are
deliberately plain: one panel per quantity, no styling beyond labels.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .partition import PartitionWindow, cell_bounds, enumerate_A_tau
from .regularize import EpsilonTable
from .weights import AuxWeights, PsiWeight


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.17g}" if isinstance(v, float) else v
                             for v in row])


def render_partition(outdir: Path, window: PartitionWindow):
    """Cut-parabola outline and the A(tau) cells in (t, |x|) space."""
    tau = window.tau
    ts = np.exp(np.linspace(math.log(1e-6), 0.0, 400))
    para = np.sqrt(np.minimum(tau * ts, 1.0))
    rows = [(float(t), float(p)) for t, p in zip(ts, para)]
    _write_csv(outdir / "cut_parabola.csv", ["t", "x_edge"], rows)

    cells = enumerate_A_tau(window)
    cell_rows = []
    for c in cells:
        t_lo, t_hi, w_lo, w_hi = cell_bounds(c)
        cell_rows.append((c.i, c.j, float(t_lo), float(t_hi),
                          float(w_lo), float(w_hi)))
    _write_csv(outdir / "partition_cells.csv",
               ["i", "j", "t_lo", "t_hi", "w_lo", "w_hi"], cell_rows)

    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.plot(para, ts, "k-", lw=1, label=r"$|x|^2 = \tau t$")
    for c in cells:
        t_lo, t_hi, w_lo, w_hi = cell_bounds(c)
        # cell edges in |x| at the two time faces
        for t_face in (t_lo, t_hi):
            x_lo = 0.5 * math.sqrt(t_face) * (w_lo - 1.0)
            x_hi = 0.5 * math.sqrt(t_face) * (w_hi - 1.0)
            ax.plot([x_lo, x_hi], [t_face, t_face], "b-", lw=0.4, alpha=0.6)
        tt = np.exp(np.linspace(math.log(t_lo), math.log(t_hi), 12))
        ax.plot(0.5 * np.sqrt(tt) * (w_lo - 1.0), tt, "b-", lw=0.4, alpha=0.6)
    ax.set_yscale("log")
    ax.set_xlabel("|x|")
    ax.set_ylabel("t")
    ax.set_title(f"cut parabola and A(tau) cells, tau = {tau:g}")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(outdir / "partition.png", dpi=150)
    plt.close(fig)
    return ["cut_parabola.csv", "partition_cells.csv", "partition.png"]


def render_epsilon(outdir: Path, eps: EpsilonTable):
    """Heat map of ln(eps_ij) with the threshold path overlaid."""
    w = eps.window
    rows = []
    for i in w.rows():
        for j in range(w.j_cap + 1):
            rows.append((i, j, float(eps.value(i, j))))
    _write_csv(outdir / "epsilon_table.csv", ["i", "j", "value"], rows)
    _write_csv(outdir / "epsilon_thresholds.csv", ["i", "j_threshold", "j_guess"],
               [(i, eps.thresholds[i], float(eps.guesses.get(i, math.nan)))
                for i in w.rows()])

    fig, ax = plt.subplots(figsize=(6, 4))
    img = ax.imshow(np.log(eps.values).T, origin="lower", aspect="auto",
                    extent=(w.i_min - 0.5, w.i_max + 0.5, -0.5, w.j_cap + 0.5))
    ax.plot(list(w.rows()), [eps.thresholds[i] for i in w.rows()],
            "w.-", lw=1, ms=4, label="j(i)")
    fig.colorbar(img, ax=ax, label=r"$\ln\,\varepsilon_{ij}$")
    ax.set_xlabel("i")
    ax.set_ylabel("j")
    ax.legend(loc="upper right", fontsize=8)
    ax.set_title(f"regularized table, tau = {w.tau:g}")
    fig.tight_layout()
    fig.savefig(outdir / "epsilon_table.png", dpi=150)
    plt.close(fig)
    return ["epsilon_table.csv", "epsilon_thresholds.csv", "epsilon_table.png"]


def render_weights(outdir: Path, psi: PsiWeight, eps: EpsilonTable,
                   n_s: int = 400, n_r: int = 200):
    """Temporal profiles of h and radial profiles of phi/psi plus the
    auxiliary weights, as CSV + a four-panel figure."""
    h = psi.h
    aux = AuxWeights(eps)
    ss = np.linspace(h.s_min, h.s_max, n_s)
    mid = 0.5 * (h.s_min + h.s_max)
    rr = np.linspace(0.0, 2.2 * math.sqrt(psi.tau), n_r)

    hrows = [(float(s), float(h.h(s)), float(h.hp(s)), float(h.hpp(s)))
             for s in ss]
    _write_csv(outdir / "weight_h.csv", ["s", "h", "hp", "hpp"], hrows)

    phi_mid = psi.phi.eval_outer(np.array([mid]), rr)[0]
    psi_mid = psi.value(np.full_like(rr, mid), rr)
    a4 = aux.a4(np.full_like(rr, mid), rr)
    b4 = aux.b4(np.full_like(rr, mid), rr)
    bp4 = aux.b_perp4(np.full_like(rr, mid), rr)
    wrows = [(float(r), float(p), float(q), float(a), float(b), float(bp))
             for r, p, q, a, b, bp in zip(rr, phi_mid, psi_mid, a4, b4, bp4)]
    _write_csv(outdir / "weight_radial.csv",
               ["r", "phi", "psi", "a4", "b4", "b_perp4"], wrows)

    fig, axes = plt.subplots(2, 2, figsize=(9, 6))
    axes[0, 0].plot(ss, h.hp(ss))
    axes[0, 0].set_title("h'(s)")
    axes[0, 1].plot(ss, h.hpp(ss))
    axes[0, 1].set_title("h''(s)")
    axes[1, 0].plot(rr, phi_mid)
    axes[1, 0].set_title(f"phi(s={mid:.2f}, r)")
    axes[1, 1].plot(rr, a4, label="a^4")
    axes[1, 1].plot(rr, b4, label="b^4")
    axes[1, 1].plot(rr, bp4, label="b_perp^4")
    axes[1, 1].legend(fontsize=8)
    axes[1, 1].set_title("localization weights")
    for ax in axes.flat:
        ax.set_xlabel("s" if ax in (axes[0, 0], axes[0, 1]) else "r")
    fig.tight_layout()
    fig.savefig(outdir / "weights.png", dpi=150)
    plt.close(fig)
    return ["weight_h.csv", "weight_radial.csv", "weights.png"]


def render_gap_sweep(outdir: Path, sweep_rows):
    """Blow-up of the gap-inequality constant across the spectrum."""
    _write_csv(outdir / "gap_sweep.csv", ["tau4", "min_ratio", "gap"],
               [(r["tau4"], r["min_ratio"], r["gap"]) for r in sweep_rows])
    fig, ax = plt.subplots(figsize=(6, 4))
    t4 = [r["tau4"] for r in sweep_rows]
    ax.semilogy(t4, [1.0 / max(r["min_ratio"], 1e-12) for r in sweep_rows],
                "o-", ms=3, label="1 / achieved ratio")
    ax.semilogy(t4, [1.0 / max(r["gap"], 1e-12) for r in sweep_rows],
                "--", label="1 / spectral gap")
    ax.set_xlabel(r"$4\tau$")
    ax.set_ylabel("estimate constant")
    ax.legend(fontsize=8)
    ax.set_title("gap-inequality constant across the spectrum")
    fig.tight_layout()
    fig.savefig(outdir / "gap_sweep.png", dpi=150)
    plt.close(fig)
    return ["gap_sweep.csv", "gap_sweep.png"]


def render_ratio_reports(outdir: Path, reports):
    """Bar chart of achieved margins over their bounds."""
    fig, ax = plt.subplots(figsize=(7, 0.6 * max(4, len(reports))))
    names = [r.inequality for r in reports]
    margins = [r.min_ratio - r.bound for r in reports]
    colors = ["tab:green" if r.passed else "tab:red" for r in reports]
    ax.barh(range(len(reports)), margins, color=colors)
    ax.set_yticks(range(len(reports)))
    ax.set_yticklabels(names, fontsize=7)
    ax.axvline(0.0, color="k", lw=0.8)
    ax.set_xlabel("achieved ratio minus bound")
    fig.tight_layout()
    fig.savefig(outdir / "ratio_reports.png", dpi=150)
    plt.close(fig)
    return ["ratio_reports.png"]
