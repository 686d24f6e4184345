"""Human-readable tables. Machine-readable outputs keep full precision;
everything here is rounded for display."""

from __future__ import annotations

import numpy as np

from fswel.simulation import RepSummary

METHODS = ("FS-WEL", "MCAR", "MAR")


def _milli(v):
    return "nan" if not np.isfinite(v) else f"{1000 * v:.0f}"


def _milli1(v):
    return "nan" if not np.isfinite(v) else f"{1000 * v:.1f}"


def render_estimates(summary: RepSummary, methods=METHODS):
    """Mean estimate (mean asymptotic SE / empirical SE) and coverage, in units of 1e-3."""
    t = summary.table
    lines = [f"{'method':8s} {'parameter':12s} {'true':>6s} {'est(asy/emp)':>16s} {'cov':>5s} {'n':>5s}"]
    for m in methods:
        for _, row in t[t.method == m].iterrows():
            est = f"{_milli(row['mean'])} ({_milli(row.asy_se)}/{_milli(row.emp_se)})"
            cov = "nan" if not np.isfinite(row.coverage) else f"{1000 * row.coverage:.0f}"
            lines.append(f"{m:8s} {row.parameter:12s} {_milli(row.truth):>6s} {est:>16s} {cov:>5s} {int(row.n):5d}")
    return "\n".join(lines)


def render_bias_mse(summary: RepSummary, parameters=None, methods=METHODS):
    """Bias and MSE per method side by side, in units of 1e-3."""
    t = summary.table
    if parameters is None:
        parameters = [p for p in t[t.method == methods[-1]].parameter]
    head = f"{'parameter':12s} {'true':>6s}" + "".join(f" {m + ' bias':>12s} {m + ' MSE':>10s}" for m in methods)
    lines = [head]
    for p in parameters:
        sub = t[t.parameter == p]
        if sub.empty:
            continue
        line = f"{p:12s} {_milli(sub.truth.iloc[0]):>6s}"
        for m in methods:
            r = sub[sub.method == m]
            if r.empty:
                line += f" {'':>12s} {'':>10s}"
            else:
                line += f" {_milli1(r.bias.iloc[0]):>12s} {_milli1(r.mse.iloc[0]):>10s}"
        lines.append(line)
    return "\n".join(lines)


def render_summary(summary: RepSummary):
    fails = ", ".join(f"{m}: {k}" for m, k in summary.failures.items())
    return (
        f"replicates: {summary.n_reps}   failed fits: {fails or 'none'}\n\n"
        "Estimates (x1e-3): est(asy/emp) cov\n"
        + render_estimates(summary)
        + "\n\nBias and MSE (x1e-3)\n"
        + render_bias_mse(summary)
        + "\n"
    )


def render_fit(result: dict):
    """Estimate (SE) and one-sided Wald p-value per parameter for FS-WEL and the naive fit."""
    fs = {w["name"]: w for w in result["fswel"]["wald"]}
    naive = {w["name"]: w for w in result["baselines"]["MCAR"]["wald"]} if "MCAR" in result["baselines"] else {}
    mar = {w["name"]: w for w in result["baselines"]["MAR"]["wald"]} if "MAR" in result["baselines"] else {}

    def cell(w):
        if w is None:
            return f"{'':>17s} {'':>6s}"
        est = f"{w['estimate']:.3f} ({w['std_error']:.3f})"
        p = "" if w["name"] == "theta" else f"{w['p_one_sided']:.3f}"
        return f"{est:>17s} {p:>6s}"

    lines = [f"{'parameter':22s} {'FS-WEL (SE)':>17s} {'p':>6s} {'Naive (SE)':>17s} {'p':>6s} {'MAR (SE)':>17s} {'p':>6s}"]
    for name in result["model"]["assoc_terms"] + ["theta"]:
        lines.append(f"{name:22s} {cell(fs.get(name))} {cell(naive.get(name))} {cell(mar.get(name))}")
    lines.append("")
    lines.append(f"{'availability model':22s} {'FS-WEL (SE)':>17s} {'p':>6s}")
    for name, w in fs.items():
        if name.startswith("alpha["):
            lines.append(f"{name:22s} {cell(w)}")
    lines.append("")
    lines.append("p: one-sided Wald test")
    return "\n".join(lines) + "\n"
