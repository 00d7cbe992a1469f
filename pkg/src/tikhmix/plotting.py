"""Optional figure rendering for simulation results (PNG files next to the CSVs)."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _by_algo(rows, key):
    out = {}
    for r in rows:
        out.setdefault(r["algo"], []).append(r)
    for v in out.values():
        v.sort(key=lambda r: r[key])
    return out


def plot_error_rates(result, path, metric="per"):
    fig, ax = plt.subplots(figsize=(5, 4))
    for algo, rows in _by_algo(result.rows, "ebn0_db").items():
        x = [r["ebn0_db"] for r in rows]
        y = [max(r[metric], 1e-6) for r in rows]
        err = [r[f"{metric}_ci"] for r in rows]
        ax.errorbar(x, y, yerr=err, marker="o", capsize=3, label=algo)
    ax.set_yscale("log")
    ax.set_xlabel("Eb/N0 [dB]")
    ax.set_ylabel(metric.upper())
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_gamma(result, path):
    fig, ax = plt.subplots(figsize=(5, 4))
    curves = {}
    for g in result.gamma:
        if g["mean_order"] == g["mean_order"]:
            curves.setdefault((g["algo"], g["ebn0_db"]), []).append((g["iteration"], g["mean_order"]))
    for (algo, snr), pts in sorted(curves.items()):
        it, val = zip(*sorted(pts))
        ax.plot(it, val, marker="o", label=f"{algo} {snr:g} dB")
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("mean mixture order")
    ax.grid(True, alpha=0.3)
    if curves:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_all(result, out):
    """Write per.png, ber.png and gamma.png into ``out``; returns the paths."""
    paths = [os.path.join(out, n) for n in ("per.png", "ber.png", "gamma.png")]
    plot_error_rates(result, paths[0], "per")
    plot_error_rates(result, paths[1], "ber")
    plot_gamma(result, paths[2])
    return paths
