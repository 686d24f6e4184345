"""Command line: ``fswel fit``, ``fswel simulate``, ``fswel report``.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 estimation error, 5 file error, 6 too many failed replicates.
"""

from __future__ import annotations

import argparse
import io as _io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import pandas as pd

from fswel import io
from fswel.baselines import fit_mar_ipw, fit_mcar_naive
from fswel.errors import FswelError, InvariantViolation, SchemaError
from fswel.estimator import FitConfig, fit_fswel
from fswel.report import render_fit, render_summary
from fswel.simulation import COLUMNS, SimConfig, run_replications, summarize
from fswel.variance import wald, wald_test

EXIT_CONFIG, EXIT_DATA, EXIT_ESTIMATION, EXIT_IO, EXIT_FAILURES = 2, 3, 4, 5, 6
FAILURE_BUDGET = 0.02

log = logging.getLogger("fswel")


def fit_payload(spec, data, fit, baselines, cfg, ingestion, seed=None):
    out = {
        "provenance": io.provenance(cfg, seed),
        "model": spec.to_dict(),
        "ingestion": ingestion,
        "fswel": {
            "names": fit.names,
            "estimates": fit.estimates(),
            "std_errors": fit.std_errors(),
            "cov": fit.cov,
            "wald": [w.__dict__ for w in wald(fit)],
            "converged": fit.converged,
            "iterations": fit.iterations,
            "final_residual_norm": fit.final_residual_norm,
            "diagnostics": fit.diagnostics,
            "delta": {"patterns": fit.delta_hat.patterns, "table": fit.delta_hat.delta},
        },
        "baselines": {},
    }
    names = spec.eta_names
    for res in baselines:
        out["baselines"][res.method] = {
            "names": names,
            "estimates": res.estimates(),
            "std_errors": res.std_errors,
            "se_kind": "model-based",
            "wald": [wald_test(e, s, n).__dict__ for n, e, s in zip(names, res.estimates(), res.std_errors)],
        }
    return out


def cmd_fit(args):
    cfg = io.load_config(args.config)
    model = io.ModelConfig.from_dict(cfg.get("model") or {})
    spec = model.spec()
    solver = FitConfig.from_dict(cfg.get("solver"))
    data, ingestion = io.load_dataset(args.data, model)
    fit = fit_fswel(spec, data, solver)
    baselines = [fit_mcar_naive(spec, data), fit_mar_ipw(spec, data)]
    payload = fit_payload(spec, data, fit, baselines, cfg, ingestion, cfg.get("seed"))
    out = Path(args.out)
    io.dump_json(payload, out)
    payload = io.load_json(out)
    table = render_fit(payload)
    out.with_suffix(".txt").write_text(table)
    if not args.no_figure:
        from fswel.plotting import plot_fit

        plot_fit(payload, out.with_suffix(".png"))
    print(table, end="")
    return 0


def write_replicates(df, path, header):
    buf = _io.StringIO()
    for k, v in header.items():
        buf.write(f"# {k}: {json.dumps(v, sort_keys=True, default=str)}\n")
    df.to_csv(buf, index=False, lineterminator="\n")
    Path(path).write_text(buf.getvalue())


def read_replicates(path):
    df = pd.read_csv(path, comment="#", float_precision="round_trip")
    missing = set(COLUMNS) - set(df.columns)
    if missing:
        raise SchemaError(f"replicate file lacks columns {sorted(missing)}")
    df["converged"] = df["converged"].astype(str).str.lower().isin(["true", "1"])
    return df


def _summarize_to(df, path, figure=True):
    summary = summarize(df)
    text = render_summary(summary)
    Path(path).with_suffix(".summary.txt").write_text(text)
    if figure:
        from fswel.plotting import plot_replicates

        plot_replicates(df, Path(path).with_suffix(".png"))
    print(text, end="")
    return summary


def cmd_simulate(args):
    cfg = io.load_config(args.config) if args.config else {}
    sim = dict(cfg.get("simulation") or {})
    if cfg.get("solver"):
        sim["fit"] = cfg["solver"]
    config = SimConfig.from_dict(sim)
    if args.reps is not None:
        config = replace(config, reps=args.reps)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    df = run_replications(config, workers=args.workers)
    header = io.provenance(cfg, config.seed)
    header["simulation"] = config.to_dict()
    write_replicates(df, args.out, header)
    summary = _summarize_to(df, args.out, not args.no_figure)
    if summary.failure_rate() > FAILURE_BUDGET:
        log.error("%.1f%% of FS-WEL fits failed (budget %.0f%%)", 100 * summary.failure_rate(), 100 * FAILURE_BUDGET)
        return EXIT_FAILURES
    return 0


def cmd_report(args):
    df = read_replicates(args.inp)
    _summarize_to(df, args.inp, not args.no_figure)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="fswel", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit FS-WEL and the baselines to a subject CSV")
    f.add_argument("--data", required=True)
    f.add_argument("--config", required=True)
    f.add_argument("--out", required=True, help="result JSON; .txt table and .png figure written alongside")
    f.add_argument("--no-figure", action="store_true")
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="run the replication study")
    s.add_argument("--config")
    s.add_argument("--reps", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True, help="per-replicate CSV; summary and figure written alongside")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--no-figure", action="store_true")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", help="summarize an existing per-replicate CSV")
    r.add_argument("--in", dest="inp", required=True)
    r.add_argument("--no-figure", action="store_true")
    r.set_defaults(func=cmd_report)
    return p


def run_cli(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (SchemaError, InvariantViolation) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FswelError as exc:
        print(f"estimation error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except (ValueError, TypeError, KeyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return EXIT_IO


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
