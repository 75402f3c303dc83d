"""Report figures, rendered to files with the Agg backend."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .splitting import SplittingFit, SplittingScan, model  # noqa: E402

plt.rcParams.update({
    "font.size": 9,
    "axes.linewidth": 0.8,
    "lines.linewidth": 1.0,
    "legend.frameon": False,
    "savefig.dpi": 150,
})


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_histograms(hists: dict, path) -> Path:
    """Co/cross coincidence histograms, one panel per basis.

    ``hists`` maps a panel title to ``(co, cross)`` histogram pairs.
    """
    n = len(hists)
    fig, axes = plt.subplots(n, 1, figsize=(5.0, 1.8 * n), sharex=True, squeeze=False)
    for ax, (title, (co, cross)) in zip(axes[:, 0], hists.items()):
        k = co.offsets
        ax.bar(k - 0.18, co.counts, width=0.36, color="tab:blue", label="co")
        ax.bar(k + 0.18, cross.counts, width=0.36, color="tab:red", label="cross")
        ax.set_ylabel("pairs")
        ax.set_title(title, fontsize=9)
    axes[0, 0].legend(loc="upper right")
    axes[-1, 0].set_xlabel("pulse offset k (X minus XX)")
    return _save(fig, path)


def plot_bell(results: dict, path) -> Path:
    """Bell parameters and fidelity for each analysis (e.g. ungated/gated)."""
    names = ["S_RC", "S_DC", "S_RD"]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(6.0, 2.6), gridspec_kw={"width_ratios": [3, 1.3]})
    width = 0.8 / max(len(results), 1)
    for j, (label, res) in enumerate(results.items()):
        x = np.arange(len(names)) + (j - (len(results) - 1) / 2) * width
        vals = [getattr(res, n).value for n in names]
        errs = [getattr(res, n).error for n in names]
        ax1.bar(x, vals, width, yerr=errs, capsize=2, label=label)
        ax2.bar(j, res.fidelity.value, 0.6, yerr=res.fidelity.error, capsize=2)
    ax1.axhline(2.0, color="k", ls="--", lw=0.8)
    ax1.axhline(2 * np.sqrt(2), color="0.5", ls=":", lw=0.8)
    ax1.set_xticks(range(len(names)), names)
    ax1.set_ylabel("Bell parameter")
    ax1.set_ylim(0, 3.3)
    ax1.legend(loc="upper left", ncol=2)
    ax2.axhline(0.5, color="k", ls="--", lw=0.8)
    ax2.set_xticks(range(len(results)), list(results))
    ax2.set_ylim(0, 1)
    ax2.set_ylabel("fidelity to psi+")
    return _save(fig, path)


def plot_chsh(res, path) -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 2.6))
    vals = [e.value for e in res.E]
    errs = [e.error for e in res.E]
    colors = ["tab:blue" if s > 0 else "tab:red" for s in res.signs]
    ax.bar(range(4), vals, yerr=errs, color=colors, capsize=2)
    ax.axhline(0, color="k", lw=0.6)
    ax.set_xticks(range(4), [lab.replace("chsh-", "") for lab in res.labels], fontsize=8)
    ax.set_ylabel("E")
    ax.set_title(f"S = {res.S.value:.3f} +/- {res.S.error:.3f}", fontsize=9)
    return _save(fig, path)


def plot_splitting(scan: SplittingScan, fit: SplittingFit, path) -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 2.8))
    if (scan.sigma_ueV > 0).any():
        ax.errorbar(scan.angle_deg, scan.delta_E_ueV, yerr=scan.sigma_ueV, fmt="o", ms=3)
    else:
        ax.plot(scan.angle_deg, scan.delta_E_ueV, "o", ms=3)
    th = np.linspace(scan.angle_deg.min(), scan.angle_deg.max(), 400)
    ax.plot(th, model(th, fit.S_ueV, fit.phase_deg, fit.offset_ueV), "k-")
    ax.set_xlabel("half-waveplate angle (deg)")
    ax.set_ylabel("E(X) - E(XX) shift (ueV)")
    ax.set_title(f"S = {fit.S_ueV:.3f} +/- {fit.sigma_S:.3f} ueV", fontsize=9)
    return _save(fig, path)


def plot_gate_sweep(table, path) -> Path:
    """Fidelity against XX gate width; ``table`` is a DataFrame-like mapping."""
    fig, ax = plt.subplots(figsize=(4.5, 2.8))
    ax.plot(table["gate_xx_ns"], table["fidelity_model"], "k-", label="model")
    if "fidelity" in table:
        ax.errorbar(table["gate_xx_ns"], table["fidelity"], yerr=table["fidelity_err"],
                    fmt="o", ms=3, label="events")
    ax.axhline(0.5, color="0.5", ls="--", lw=0.8)
    ax.set_xlabel("XX gate width (ns)")
    ax.set_ylabel("fidelity to psi+")
    ax.legend()
    return _save(fig, path)
