"""Command-line front end for the SOC estimation benchmark.

Subcommands::

    sockf simulate    --config cfg.json --seed 1 --out trace.csv
    sockf run         --config cfg.json --seed 1 --out report.json
    sockf compare     --config cfg.json --seed 1 --out table.json
    sockf montecarlo  --config cfg.json --seed 1 --trials 20 --out mc.json
    sockf tune        --config cfg.json --seed 1 --out tune.json
    sockf report      --in report.json --format csv --out report.csv

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
breakdown.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import harness
from .dataset import DataError, atomic_write_text, write_dataset_csv
from .filters import NumericBreakdown
from .harness import ConfigError, NumericFailure
from .numerics import NumericsError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _add_common(sub, stochastic: bool):
    sub.add_argument("--config", help="JSON or TOML experiment config", default=None)
    sub.add_argument("--out", help="output file path", required=True)
    if stochastic:
        sub.add_argument("--seed", type=int, required=True, help="master seed (required)")
    sub.add_argument("--filter", dest="filter_name", default=None, help="variant override")
    sub.add_argument("--trials", type=int, default=None, help="Monte Carlo trial count")
    sub.add_argument(
        "--engine",
        choices=("auto", "fast", "generic"),
        default=None,
        help="force the compiled or the pure-numpy lane",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sockf", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)
    for name, stochastic in (
        ("simulate", True),
        ("run", True),
        ("compare", True),
        ("tune", True),
        ("montecarlo", True),
    ):
        _add_common(subs.add_parser(name), stochastic)
    rep = subs.add_parser("report", help="re-emit a saved JSON report")
    rep.add_argument("--in", dest="infile", required=True)
    rep.add_argument("--format", choices=("json", "csv", "plotdata"), default="csv")
    rep.add_argument("--out", required=True)
    return parser


def _load_cfg(args) -> harness.ExperimentConfig:
    doc = harness.load_config_file(args.config) if args.config else {}
    overrides = {}
    if getattr(args, "seed", None) is not None:
        doc.setdefault("experiment", {})["seed"] = args.seed
    if args.filter_name:
        doc.setdefault("filter", {})["filter"] = args.filter_name
    if args.trials is not None:
        doc.setdefault("experiment", {})["trials"] = args.trials
    if args.engine:
        doc.setdefault("experiment", {})["engine"] = args.engine
    return harness.config_from_dict(doc, overrides)


def _cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    ds = harness.build_dataset(cfg)
    write_dataset_csv(ds, args.out)
    print(f"wrote {len(ds)} samples to {args.out}")
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = _load_cfg(args)
    report = harness.run_experiment(cfg)
    harness.emit_report(report, "single", "json", args.out)
    print(
        f"{report.variant}: rmse={report.rmse:.4f}% mae={report.mae:.4f}% "
        f"max={report.max_abs:.4f}% mean_step={report.timing_mean_ms:.3f} ms"
    )
    return EXIT_OK


def _cmd_compare(args) -> int:
    cfg = _load_cfg(args)
    reports = harness.run_comparison(cfg)
    harness.emit_report(reports, "comparison", "json", args.out)
    width = max(len(r.variant) for r in reports)
    print(f"{'variant':<{width}}  {'MAE':>9}  {'MSE':>9}  {'RMSE':>9}")
    for r in reports:
        print(f"{r.variant:<{width}}  {r.mae:9.4f}  {r.mse:9.4f}  {r.rmse:9.4f}")
    return EXIT_OK


def _cmd_montecarlo(args) -> int:
    cfg = _load_cfg(args)
    summary = harness.monte_carlo(cfg)
    harness.emit_report(summary, "montecarlo", "json", args.out)
    print(
        f"{summary.variant}: {summary.trials} trials, mean rmse={summary.mean:.4f}% "
        f"(sd {summary.stddev:.4f})"
    )
    return EXIT_OK


def _cmd_tune(args) -> int:
    doc = harness.load_config_file(args.config) if args.config else {}
    cfg = _load_cfg(args)
    tsga_cfg = harness.tsga_config_from_dict(doc, default_seed=cfg.seed)
    report = harness.tune_kernels(cfg, tsga_cfg)
    harness.emit_report(report, "tune", "json", args.out)
    a1, a2, b1, b2 = report.best_position
    print(
        f"best kernels: alpha=({a1:.4f}, {a2:.4f}) beta=({b1:.3e}, {b2:.3e}) "
        f"frozen rmse={report.frozen_rmse:.4f}% fresh mean={report.fresh_mean_rmse:.4f}%"
    )
    return EXIT_OK


def _cmd_report(args) -> int:
    try:
        with open(args.infile, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"report file not found: {args.infile}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed report: {exc}") from exc
    if args.format == "json":
        atomic_write_text(args.out, json.dumps(doc, indent=2) + "\n")
        return EXIT_OK
    kind = doc.get("kind")
    if kind == "comparison" and args.format == "csv":
        lines = ["variant,mae,mse,rmse,max_abs,timing_max_ms,timing_mean_ms,fallbacks,fp_caps"]
        for r in doc["rows"]:
            lines.append(
                f"{r['variant']},{r['mae']:.17g},{r['mse']:.17g},{r['rmse']:.17g},"
                f"{r['max_abs']:.17g},{r['timing']['max_ms']:.17g},"
                f"{r['timing']['mean_ms']:.17g},{r['flags']['fallback_count']},"
                f"{r['flags']['fp_cap_count']}"
            )
        atomic_write_text(args.out, "\n".join(lines) + "\n")
        return EXIT_OK
    if kind == "single" and args.format == "csv":
        r = doc["report"]
        lines = [
            "variant,mae,mse,rmse,max_abs,timing_max_ms,timing_mean_ms,fallbacks,fp_caps",
            f"{r['variant']},{r['mae']:.17g},{r['mse']:.17g},{r['rmse']:.17g},"
            f"{r['max_abs']:.17g},{r['timing']['max_ms']:.17g},"
            f"{r['timing']['mean_ms']:.17g},{r['flags']['fallback_count']},"
            f"{r['flags']['fp_cap_count']}",
        ]
        atomic_write_text(args.out, "\n".join(lines) + "\n")
        return EXIT_OK
    if kind == "montecarlo" and args.format in ("csv", "plotdata"):
        s = doc["summary"]
        lines = ["trial,rmse"] + [
            f"{i},{r:.17g}" for i, r in enumerate(s["rmse_per_trial"])
        ]
        atomic_write_text(args.out, "\n".join(lines) + "\n")
        return EXIT_OK
    raise ConfigError(f"cannot render kind={kind!r} as {args.format}")


_COMMANDS = {
    "simulate": _cmd_simulate,
    "run": _cmd_run,
    "compare": _cmd_compare,
    "montecarlo": _cmd_montecarlo,
    "tune": _cmd_tune,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericFailure, NumericBreakdown, NumericsError) as exc:
        print(f"numeric breakdown: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
