"""Command-line entry point: ``covihawkes {synth,train,validate,scenario}``.

Exit codes: 0 success, 1 runtime/model error, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .data_model import Level, ModelConfig
from .errors import CoviHawkesError, TrainingDivergedError
from .evaluate import ValidationPlan, fit_and_forecast, replay_actuals, rolling_validate, write_report_csv
from .ingest import FILE_NAMES, load_bundle, write_bundle
from .scenario import MEAN_PATH, PRESETS, SAMPLED, long_forecast, preset_table, weekday_mobility, write_forecast_csv, write_plot_csv
from .synth import synthetic_world
from .trainer import fit, load_model, save_model

log = logging.getLogger("covihawkes")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
INPUT_KINDS = ("cases", "mobility", "vaccination", "population", "regions")


class UsageError(Exception):
    pass


def default_seed() -> int:
    return int(os.environ.get("COVIHAWKES_SEED", "0"))


def _date(text):
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO date: {text!r}") from None


def _int_list(text):
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("window sizes must be positive integers")
    return values


def _add_data_args(p):
    g = p.add_argument_group("input data")
    g.add_argument("--data", type=Path, help="directory holding the five input CSVs")
    for kind in INPUT_KINDS:
        g.add_argument(f"--{kind}", type=Path, help=f"path to {FILE_NAMES[kind]} (overrides --data)")
    sel = p.add_mutually_exclusive_group()
    sel.add_argument("--region", action="append", help="region id (repeatable)")
    sel.add_argument("--regions-level", choices=[lv.value for lv in Level], help="every region at this level")


def _add_model_args(p):
    g = p.add_argument_group("model")
    d = ModelConfig()
    g.add_argument("--lag", type=int, default=d.lag, help="lag window L in days (default %(default)s)")
    g.add_argument("--delta", type=int, default=d.delta, help="mobility delay in days (default %(default)s)")
    g.add_argument("--hidden", type=int, default=d.hidden, help="LSTM hidden size (default %(default)s)")
    g.add_argument("--step-size", type=float, default=d.step_size, help="Adam step size (default %(default)s)")
    g.add_argument("--iterations", type=int, default=d.max_iter, help="iteration budget (default %(default)s)")
    g.add_argument("--tol", type=float, default=d.tol, help="relative convergence tolerance (default %(default)s)")
    g.add_argument("--patience", type=int, default=d.patience, help="convergence window (default %(default)s)")


def _add_common(p):
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes (default 1)")
    p.add_argument("--seed", type=int, default=None, help="seed (default: $COVIHAWKES_SEED or 0)")
    p.add_argument("-v", "--verbose", action="store_true")


def _config(args) -> ModelConfig:
    return ModelConfig(
        lag=args.lag,
        delta=args.delta,
        hidden=args.hidden,
        step_size=args.step_size,
        max_iter=args.iterations,
        tol=args.tol,
        patience=args.patience,
        seed=args.seed,
    )


def _input_paths(args) -> list[Path]:
    paths = []
    for kind in INPUT_KINDS:
        path = getattr(args, kind)
        if path is None:
            if args.data is None:
                raise UsageError(f"--{kind} or --data is required")
            path = args.data / FILE_NAMES[kind]
        if not path.is_file():
            raise UsageError(f"input file not found: {path}")
        paths.append(path)
    return paths


def _load(args):
    bundle = load_bundle(*_input_paths(args))
    if args.regions_level:
        records = [bundle.records[k] for k in sorted(bundle.records)
                   if bundle.records[k].region.level.value == args.regions_level]
        if not records:
            raise UsageError(f"no regions at level {args.regions_level}")
    elif args.region:
        missing = [r for r in args.region if r not in bundle.records]
        if missing:
            raise UsageError(f"unknown region(s): {', '.join(missing)}")
        records = [bundle.records[r] for r in args.region]
    else:
        records = [bundle.records[k] for k in sorted(bundle.records)
                   if bundle.records[k].region.level is Level.NATION]
    return bundle, records


def _map(fn, items, workers):
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _train_one(job):
    record, config = job
    try:
        return record.region.id, fit(record, config), None
    except TrainingDivergedError as exc:
        return record.region.id, None, str(exc)


def cmd_train(args) -> int:
    config = _config(args)
    _, records = _load(args)
    args.out.mkdir(parents=True, exist_ok=True)
    results = _map(_train_one, [(r, config) for r in records], args.workers)
    failures = []
    with (args.out / "train_summary.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["region_id", "iterations", "converged", "final_nll", "mu", "model_file"])
        for rid, report, err in results:
            if report is None:
                failures.append((rid, err))
                w.writerow([rid, "", "", "", "", ""])
                continue
            path = args.out / f"{rid}.model.json"
            save_model(path, report.final_params, config, rid)
            w.writerow([rid, report.iterations_run, int(report.converged), f"{report.best_nll:.6f}",
                        f"{report.final_params.mu:.6f}", path.name])
            print(f"{rid}: {report.iterations_run} iterations, nll {report.best_nll:.6f} -> {path}")
    if failures:
        print("region\terror", file=sys.stderr)
        for rid, err in failures:
            print(f"{rid}\t{err}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_validate(args) -> int:
    config = _config(args)
    windows = args.windows
    if max(windows) > args.span:
        raise UsageError(f"span {args.span} is shorter than the largest window {max(windows)}")
    _, records = _load(args)
    args.out.mkdir(parents=True, exist_ok=True)
    forecaster = replay_actuals if args.replay_actuals else fit_and_forecast
    for rec in records:
        t_s = rec.day_of(args.start_date) if args.start_date else rec.n_days - args.span + 1
        if t_s < 1 or t_s + args.span - 1 > rec.n_days:
            raise UsageError(f"{rec.region.id}: validation span does not fit inside {rec.start_date}..{rec.end_date}")
        reports = [
            rolling_validate(rec, config, ValidationPlan(t_s, args.span, w), forecaster, args.workers)
            for w in windows
        ]
        path = args.out / f"validation_{rec.region.id}.csv"
        write_report_csv(path, reports)
        for rep in reports:
            print(f"{rec.region.id}: E({rep.window}) = {rep.aggregate:.6f} over {len(rep.per_interval)} intervals")
    return EXIT_OK


def _models_for(args, records):
    if args.model is not None:
        params, config, rid = load_model(args.model)
        if rid is None:
            if len(records) != 1:
                raise UsageError("model file has no region id; select exactly one region")
            return [(records[0], params, config)]
        return [(next((r for r in records if r.region.id == rid), None) or _lookup(args, rid), params, config)]
    out = []
    for rec in records:
        path = args.models / f"{rec.region.id}.model.json"
        if not path.is_file():
            raise UsageError(f"model file not found: {path}")
        params, config, _ = load_model(path)
        out.append((rec, params, config))
    return out


def _lookup(args, rid):
    if rid not in args._bundle.records:
        raise UsageError(f"model region {rid!r} not in the data")
    return args._bundle.records[rid]


def cmd_scenario(args) -> int:
    if args.model is None and args.models is None:
        raise UsageError("--model or --models is required")
    if not args.preset and not args.custom_interval:
        raise UsageError("--preset or --custom-interval is required")
    if args.horizon <= 0:
        raise UsageError("--horizon must be positive")
    bundle, records = _load(args)
    args._bundle = bundle
    mode = SAMPLED if args.mode == "sample" else MEAN_PATH
    presets = list(PRESETS) if "all" in (args.preset or []) else list(dict.fromkeys(args.preset or []))
    args.out.mkdir(parents=True, exist_ok=True)
    for rec, params, config in _models_for(args, records):
        tables = [preset_table(rec, name) for name in presets]
        if args.custom_interval:
            start, end = args.custom_interval
            tables.append(weekday_mobility(rec, start, end, name=f"custom_{start}_{end}"))
        for table in tables:
            fc = long_forecast(params, config, rec, table, args.horizon, mode, args.seed)
            stem = f"{rec.region.id}_{table.name}"
            write_forecast_csv(args.out / f"forecast_{stem}.csv", fc)
            write_plot_csv(args.out / f"plot_{stem}.csv", fc)
            print(f"{rec.region.id} [{table.name}]: {fc.cumulative[-1]:.1f} cases over {args.horizon} days")
    return EXIT_OK


def cmd_synth(args) -> int:
    weights = None
    if args.weights:
        try:
            weights = np.array([float(v) for v in args.weights.split(",")])
        except ValueError:
            raise UsageError(f"--weights must be comma-separated numbers: {args.weights!r}") from None
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-6:
            raise UsageError("--weights must be non-negative and sum to 1")
        weights = weights / weights.sum()
    lag = len(weights) if weights is not None else args.lag
    bundle = synthetic_world(
        n_districts=args.districts,
        days=args.days,
        seed=args.seed,
        mu=args.mu,
        lag=lag,
        population=args.population,
        start_date=args.start_date,
        weights=weights,
    )
    paths = write_bundle(bundle, args.out)
    for kind in INPUT_KINDS:
        print(paths[kind])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="covihawkes",
        description="Hawkes-process case-count forecasting with a mobility-driven reproduction number.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit one model per selected region")
    _add_data_args(p)
    _add_model_args(p)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("validate", help="rolling-origin MAPE validation")
    _add_data_args(p)
    _add_model_args(p)
    _add_common(p)
    p.add_argument("--windows", type=_int_list, default=[7, 14, 28], help="window sizes (default 7,14,28)")
    p.add_argument("--span", type=int, default=84, help="validation span in days (default 84)")
    p.add_argument("--start-date", type=_date, help="first validation date (default: last SPAN days)")
    p.add_argument("--replay-actuals", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser(
        "scenario",
        help="long-horizon forecast under lockdown scenarios",
        description="Weekday averages use 1 = Sunday .. 7 = Saturday. Presets: "
        + "; ".join(f"{k} {a}..{b}" for k, (a, b) in PRESETS.items()),
    )
    _add_data_args(p)
    _add_common(p)
    p.add_argument("--model", type=Path, help="a single model file")
    p.add_argument("--models", type=Path, help="directory of <region>.model.json files")
    p.add_argument("--preset", action="append", choices=[*PRESETS, "all"], help="scenario preset (repeatable)")
    p.add_argument("--custom-interval", nargs=2, type=_date, metavar=("START", "END"))
    p.add_argument("--horizon", type=int, default=120, help="days to forecast (default 120)")
    p.add_argument("--mode", choices=["mean", "sample"], default="mean")
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("synth", help="write a synthetic world as the five input CSVs")
    _add_common(p)
    p.add_argument("--districts", type=int, default=3)
    p.add_argument("--days", type=int, default=600)
    p.add_argument("--mu", type=float, default=2.0, help="base rate per district")
    p.add_argument("--lag", type=int, default=28, help="length of the default lag weights")
    p.add_argument("--weights", help="comma-separated lag weights, oldest first (sum to 1)")
    p.add_argument("--population", type=int, default=2_000_000, help="population per district")
    p.add_argument("--start-date", type=_date, default=dt.date(2020, 2, 15))
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is None:
        args.seed = default_seed()
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"covihawkes {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDivergedError as exc:
        print(f"covihawkes {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (CoviHawkesError, ValueError, KeyError) as exc:
        print(f"covihawkes {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
