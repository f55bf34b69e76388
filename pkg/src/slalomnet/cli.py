"""Command-line front end.

Exit codes: 0 success, 1 acceptance or runtime failure (collision, rejected
corpus, diverged training), 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiment
from .config import ConfigError, ExperimentConfig, load_config
from .data import DataFormatError, Dataset
from .expert import CorpusError, SpeedProfile
from .nn.model import CnnModel, ModelFormatError
from .nn.training import TrainingError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("slalomnet")


class UsageError(Exception):
    pass


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _existing(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {p}")
    return p


def cmd_collect(args) -> int:
    cfg = _load(args)
    changes = {}
    if args.runs is not None:
        changes["num_runs"] = args.runs
        if args.train is None:
            # keep the configured train fraction
            frac = cfg.expert.train_runs / cfg.expert.num_runs
            changes["train_runs"] = min(max(1, round(frac * args.runs)), args.runs - 1)
    if args.train is not None:
        changes["train_runs"] = args.train
    if changes:
        try:
            cfg = dataclasses.replace(cfg, expert=dataclasses.replace(cfg.expert, **changes))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    manifest = experiment.collect(cfg, args.out)
    print(f"collected {manifest['num_runs']} runs ({manifest['train_runs']} train / "
          f"{manifest['test_runs']} test, {manifest['rejected_attempts']} rejected attempts) "
          f"-> {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load(args)
    if args.epochs is not None:
        cfg = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, epochs=args.epochs))
    if args.train_csv:
        train_csv = _existing(args.train_csv, "training dataset")
        test_csv = _existing(args.test_csv, "test dataset") if args.test_csv else None
    elif args.data:
        train_csv = _existing(Path(args.data) / "train.csv", "training dataset")
        test_csv = Path(args.data) / "test.csv"
        test_csv = test_csv if test_csv.is_file() else None
    else:
        raise UsageError("give --data <dir> or --train-csv <path>")
    out = Path(args.out)
    try:
        _, report = experiment.train_from_files(cfg, train_csv, test_csv, out)
    except TrainingError as exc:
        out.mkdir(parents=True, exist_ok=True)
        experiment._dump(out / "fit_report.json", {"valid": False, "error": str(exc)})
        stale = out / "model.json"
        if stale.exists():
            stale.rename(out / "model.invalid.json")
        print(f"error: training aborted: {exc}", file=sys.stderr)
        return EXIT_FAIL
    print(json.dumps({k: getattr(report, k) for k in
                      ("train_mse", "train_r2", "test_mse", "test_r2", "seconds")}))
    return EXIT_OK


def cmd_eval(args) -> int:
    _load(args)  # validates --config even though evaluation only needs the model
    model = CnnModel.load(_existing(args.model, "model file"))
    dataset = Dataset.from_csv(_existing(args.dataset, "dataset"))
    result = experiment.eval_offline(model, dataset)
    result["split"] = args.split or Path(args.dataset).stem
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    experiment._dump(out / f"offline_{result['split']}.json", result)
    print(json.dumps(result))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load(args)
    model_path = _existing(args.model, "model file")
    model = CnnModel.load(model_path)
    report = experiment.run_trials(cfg, model, args.out, trials=args.trials,
                                   profile=args.profile, compare_expert=args.compare_expert,
                                   fit_report=model_path.with_name("fit_report.json"))
    print(f"{report.trials} trials: {report.collisions} collisions, "
          f"{report.completed} completed")
    if report.comparison is not None:
        print("lane-change peak |wheel angle| pilot vs expert: "
              f"{report.comparison['pilot_lane_change_peaks']} vs "
              f"{report.comparison['expert_lane_change_peaks']}")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_plot(args) -> int:
    cfg = _load(args)
    paths = [_existing(p, "trace file") for p in args.traces]
    written = experiment.plot_traces(paths, args.out, cfg.build_course())
    for p in written:
        print(p)
    return EXIT_OK


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML experiment config (defaults built in)")
    p.add_argument("--seed", type=int, help="global seed; overrides the config")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("-v", "--verbose", action="store_true")


def _profile(text: str) -> str:
    try:
        SpeedProfile.parse(text, np.random.default_rng(0))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slalomnet",
                                     description="Learned slalom steering: data, training, "
                                                 "closed-loop evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", help="generate the expert corpus")
    _common(p)
    p.add_argument("--runs", type=int, help="total number of runs")
    p.add_argument("--train", type=int, help="runs assigned to the training split")
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("train", help="train the CNN on a corpus")
    _common(p)
    p.add_argument("--data", help="directory holding train.csv and test.csv")
    p.add_argument("--train-csv", help="training dataset CSV")
    p.add_argument("--test-csv", help="test dataset CSV (optional)")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval-offline", help="MSE / R2 of a model on a dataset")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", help="label for the report (default: dataset file stem)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run-closedloop", help="closed-loop trials with the learned pilot")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--trials", type=int)
    p.add_argument("--profile", type=_profile, help="'random' or 'fixed:<km/h>'")
    p.add_argument("--compare-expert", action=argparse.BooleanOptionalAction, default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("plot", help="render SVG figures from RunTrace CSVs")
    _common(p)
    p.add_argument("traces", nargs="+")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s:%(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, ModelFormatError, DataFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, TrainingError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
