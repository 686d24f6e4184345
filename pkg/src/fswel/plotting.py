"""Figures written next to the report tables."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

COLORS = {"FS-WEL": "#1b6ca8", "MCAR": "#c0392b", "MAR": "#e67e22"}


def plot_replicates(df, path, parameters=None):
    """Box plots of replicate estimates per parameter, one box per method, truth as a dashed line."""
    ok = df[df["converged"].astype(bool) & np.isfinite(df["estimate"])]
    if parameters is None:
        parameters = list(ok[ok.method == "MCAR"].parameter.unique()) or list(ok.parameter.unique())
    fig, axes = plt.subplots(1, len(parameters), figsize=(3.2 * len(parameters), 3.4), squeeze=False)
    for ax, p in zip(axes[0], parameters):
        sub = ok[ok.parameter == p]
        methods = [m for m in COLORS if m in set(sub.method)]
        data = [sub[sub.method == m].estimate.to_numpy() for m in methods]
        box = ax.boxplot(data, patch_artist=True, widths=0.6)
        ax.set_xticks(range(1, len(methods) + 1), methods)
        for patch, m in zip(box["boxes"], methods):
            patch.set_facecolor(COLORS[m])
            patch.set_alpha(0.5)
        truth = sub.truth.iloc[0] if len(sub) else np.nan
        ax.axhline(truth, color="k", ls="--", lw=1)
        ax.set_title(p)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_fit(result: dict, path):
    """Point estimates with 95% Wald intervals for each method."""
    terms = result["model"]["assoc_terms"]
    series = [("FS-WEL", result["fswel"]["wald"])]
    for m in ("MCAR", "MAR"):
        if m in result["baselines"]:
            series.append((m, result["baselines"][m]["wald"]))
    fig, ax = plt.subplots(figsize=(6, 0.5 * len(terms) + 1.5))
    ypos = np.arange(len(terms))
    for k, (m, rows) in enumerate(series):
        by = {w["name"]: w for w in rows}
        est = np.array([by[t]["estimate"] for t in terms])
        lo = np.array([by[t]["ci_lower"] for t in terms])
        hi = np.array([by[t]["ci_upper"] for t in terms])
        off = (k - (len(series) - 1) / 2) * 0.2
        ax.errorbar(est, ypos + off, xerr=[est - lo, hi - est], fmt="o", color=COLORS[m], label=m, capsize=2)
    ax.axvline(0, color="k", lw=0.8)
    ax.set_yticks(ypos, terms)
    ax.invert_yaxis()
    ax.set_xlabel("log odds ratio")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
