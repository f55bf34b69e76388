"""Experiment orchestration shared by the CLI and the acceptance suite."""
from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import plots
from .config import ExperimentConfig
from .controller import LoopSettings, lane_change_peaks, run_closed_loop, summarize_trace
from .data import Dataset, RunTrace, read_trace_csv
from .expert import (SpeedProfile, generate_corpus, reference_path, run_rng,
                     simulate_expert_run)
from .nn.estimator import evaluate, train
from .nn.model import CnnModel

log = logging.getLogger(__name__)

TRIAL_STREAM = 0xC105ED
COMPARE_STREAM = 10 ** 6


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def collect(cfg: ExperimentConfig, out_dir) -> dict:
    """Generate the expert corpus and write train.csv, test.csv, manifest.json."""
    out = Path(out_dir)
    course = cfg.build_course()
    corpus = generate_corpus(cfg.expert, course, cfg.vehicle, cfg.controller, cfg.dt)
    corpus.write(out)
    return corpus.manifest


def train_from_files(cfg: ExperimentConfig, train_csv, test_csv, out_dir):
    """Train on CSV datasets; write model.json, fit_report.json, loss_curve.svg."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_ds = Dataset.from_csv(train_csv)
    test_ds = Dataset.from_csv(test_csv) if test_csv is not None else None
    model, report = train(train_ds, cfg.train, test_ds, cfg.vehicle.wheel_angle_max)
    model.save(out / "model.json")
    rep = report.to_dict()
    # wall-clock time would make otherwise identical reruns differ byte for byte
    rep.pop("seconds")
    rep.update(valid=True, mse_units="normalized (wheel angle / target_scale)",
               target_scale=model.target_scale, train_config=dataclasses.asdict(cfg.train))
    _dump(out / "fit_report.json", rep)
    plots.write_svg(out / "loss_curve.svg",
                    plots.loss_plot(report.epoch_train_mse, report.epoch_val_mse,
                                    "CNN loss during training"))
    return model, report


def eval_offline(model: CnnModel, dataset: Dataset) -> dict:
    mse, r2 = evaluate(model, dataset)
    return {"samples": len(dataset), "runs": int(len(dataset.run_ids)), "mse": mse,
            "r2": "undefined" if r2 is None else r2,
            "mse_units": "normalized (wheel angle / target_scale)"}


@dataclass
class MetricsReport:
    trials: int = 0
    collisions: int = 0
    completed: int = 0
    per_trial: list = field(default_factory=list)
    speed_min: float = float("nan")
    speed_max: float = float("nan")
    speed_mean: float = float("nan")
    wheel_rate_rms_mean: float = float("nan")
    offline: dict | None = None
    comparison: dict | None = None

    @property
    def passed(self) -> bool:
        return self.collisions == 0 and self.completed == self.trials

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["passed"] = self.passed
        return d


def trial_profiles(cfg: ExperimentConfig, trials: int, profile: str) -> list[SpeedProfile]:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, TRIAL_STREAM]))
    return [SpeedProfile.parse(profile, rng) for _ in range(trials)]


def compare_with_expert(cfg: ExperimentConfig, model: CnnModel, speed: SpeedProfile,
                        pilot_trace: RunTrace | None = None):
    """Run the expert and the pilot on the same speed profile; compare the
    peak |wheel angle| on each lane change."""
    course = cfg.build_course()
    presets = {p.name: p for p in cfg.expert.presets}
    if cfg.run.compare_preset not in presets:
        raise ValueError(f"unknown compare_preset {cfg.run.compare_preset!r}; "
                         f"choose from {sorted(presets)}")
    profile = reference_path(course, cfg.vehicle, cfg.expert.blend_length,
                             cfg.expert.clearance_margin)
    expert = simulate_expert_run(course, profile, presets[cfg.run.compare_preset], speed,
                                 cfg.vehicle, cfg.controller,
                                 run_rng(cfg.seed, COMPARE_STREAM), run_id=-1, dt=cfg.dt,
                                 max_time=cfg.run.max_time)
    if pilot_trace is None:
        pilot_trace = run_closed_loop(model, course, speed, cfg.vehicle, cfg.controller,
                                      LoopSettings(cfg.dt, cfg.run.max_time))
    pp = lane_change_peaks(pilot_trace.column("x"), pilot_trace.column("wheel_angle"), course)
    ep = lane_change_peaks(expert.column("x"), expert.column("wheel_angle"), course)
    smaller = [bool(a <= b) for a, b in zip(pp, ep)]
    result = {
        "preset": cfg.run.compare_preset,
        "speed_profile": speed.to_dict(),
        "pilot_lane_change_peaks": pp,
        "expert_lane_change_peaks": ep,
        "pilot_peak_not_larger": smaller,
        "passed": any(smaller),
    }
    return result, expert, pilot_trace


def run_trials(cfg: ExperimentConfig, model: CnnModel, out_dir, trials: int | None = None,
               profile: str | None = None, compare_expert: bool | None = None,
               fit_report=None) -> MetricsReport:
    """Closed-loop campaign: per-trial traces, path/speed/steering plots and a
    metrics report.  Offline metrics are copied from ``fit_report`` if that
    file exists."""
    out = Path(out_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    trials = cfg.run.trials if trials is None else trials
    profile = profile or cfg.run.profile
    compare_expert = cfg.run.compare_expert if compare_expert is None else compare_expert
    course = cfg.build_course()
    settings = LoopSettings(cfg.dt, cfg.run.max_time)
    report = MetricsReport(trials=trials)
    if fit_report is not None and Path(fit_report).is_file():
        fr = json.loads(Path(fit_report).read_text())
        report.offline = {k: fr.get(k) for k in ("train_mse", "train_r2", "test_mse", "test_r2")}
    tables, traces = [], []
    speeds = trial_profiles(cfg, trials, profile)
    for k, sp in enumerate(speeds):
        trace = run_closed_loop(model, course, sp, cfg.vehicle, cfg.controller, settings,
                                run_id=k)
        traces.append(trace)
        path = out / "traces" / f"trial_{k:02d}.csv"
        trace.to_csv(path)
        tables.append(read_trace_csv(path))
        s = summarize_trace(trace, course)
        report.per_trial.append(dataclasses.asdict(s) | {"speed_profile": sp.to_dict()})
        report.collisions += int(trace.collided)
        report.completed += int(trace.completed)
        log.info("trial %d: completed=%s collided=%s %s", k, trace.completed, trace.collided,
                 trace.failure or "")
    if traces:
        speed = np.concatenate([t.column("speed_kmh") for t in traces])
        report.speed_min = float(speed.min())
        report.speed_max = float(speed.max())
        report.speed_mean = float(speed.mean())
        report.wheel_rate_rms_mean = float(np.mean([p["wheel_rate_rms"]
                                                    for p in report.per_trial]))
        rects = plots.cone_rects(course)
        plots.write_svg(out / "paths.svg", plots.path_plot(tables, rects, "Closed-loop paths"))
        plots.write_svg(out / "speed.svg", plots.speed_plot(tables, "Speed per trial"))
        plots.write_svg(out / "steering.svg",
                        plots.steering_plot(tables, "Steering-wheel angle per trial"))
    if compare_expert and traces:
        result, expert, pilot = compare_with_expert(cfg, model, speeds[0], traces[0])
        report.comparison = result
        expert.to_csv(out / "traces" / "expert_compare.csv")
        e_tab = read_trace_csv(out / "traces" / "expert_compare.csv")
        e_tab.name = f"expert ({result['preset']})"
        p_tab = dataclasses.replace(tables[0], name="CNN + PD")
        plots.write_svg(out / "compare_steering.svg",
                        plots.steering_plot([e_tab, p_tab], "Steering: system vs expert"))
        plots.write_svg(out / "compare_path.svg",
                        plots.path_plot([e_tab, p_tab], plots.cone_rects(course),
                                        "Position: system vs expert"))
    _dump(out / "metrics.json", report.to_dict())
    return report


def plot_traces(paths, out_dir, course=None) -> list[Path]:
    """Render path / steering / speed SVGs from RunTrace CSV files.

    All traces are parsed before anything is written, so a bad file leaves
    no partial output behind.
    """
    tables = [read_trace_csv(p) for p in paths]
    if not tables:
        raise ValueError("no trace files given")
    rects = plots.cone_rects(course) if course is not None else []
    svgs = {
        "paths.svg": plots.path_plot(tables, rects),
        "steering.svg": plots.steering_plot(tables),
        "speed.svg": plots.speed_plot(tables),
    }
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, svg in svgs.items():
        plots.write_svg(out / name, svg)
        written.append(out / name)
    return written
