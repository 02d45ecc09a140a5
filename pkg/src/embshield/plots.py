"""Figure rendering for pipeline reports.

All plots write straight to files (SVG/PNG per the extension); nothing here
opens a window.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

ATTR_COLORS = {
    "identity": "tab:blue",
    "age": "tab:red",
    "gender": "tab:green",
    "ethnicity": "tab:purple",
}


def plot_fmr_fnmr(curve_rows, path, eer=None, title=""):
    """False match vs false non-match rates across the threshold sweep."""
    rows = np.asarray(curve_rows, dtype=float)
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    ax.plot(rows[:, 1], rows[:, 2], lw=1.6, color="tab:blue")
    if eer is not None:
        ax.plot([eer], [eer], "o", color="tab:red", ms=5,
                label=f"EER = {eer:.4f}")
        ax.legend(frameon=False)
    ax.set_xlabel("False Match Rate")
    ax.set_ylabel("False Non-Match Rate")
    ax.set_title(title)
    ax.grid(alpha=0.3, lw=0.4)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_sweep(rows, param_name, path, logx=False):
    """Accuracy curves against one swept parameter.

    rows: sequence of dicts with keys value, rank1, age, gender, ethnicity.
    """
    values = [r["value"] for r in rows]
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    series = [("rank1", "identity"), ("age", "age"),
              ("gender", "gender"), ("ethnicity", "ethnicity")]
    for key, label in series:
        ax.plot(values, [100.0 * r[key] for r in rows], "o-", lw=1.2, ms=4,
                color=ATTR_COLORS[label], label=label)
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(param_name)
    ax.set_ylabel("Accuracy (%)")
    ax.set_ylim(0, 102)
    ax.grid(alpha=0.3, lw=0.4)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_bench(stage_medians_a, stage_medians_b, labels, path):
    """Side-by-side per-record stage timings for two configurations."""
    stages = list(stage_medians_a)
    x = np.arange(len(stages))
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    w = 0.38
    ax.bar(x - w / 2, [stage_medians_a[s] for s in stages], w, label=labels[0])
    ax.bar(x + w / 2, [stage_medians_b[s] for s in stages], w, label=labels[1])
    ax.set_xticks(x, stages, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("median ms per record")
    ax.set_yscale("log")
    ax.grid(alpha=0.3, lw=0.4, axis="y")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
