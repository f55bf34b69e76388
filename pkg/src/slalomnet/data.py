"""Demonstration datasets, run traces and their CSV formats."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import FEATURE_NAMES, N_FEATURES, FeatureFrame
from .sim import VehicleState

DATASET_COLUMNS = ("run_id", "t") + FEATURE_NAMES + ("target_wheel_angle_rad",)
TRACE_COLUMNS = ("t", "x", "y", "heading", "speed_kmh", "wheel_angle", "wheel_rate", "torque",
                 "collision_flag")


class DataFormatError(ValueError):
    pass


def _fmt(v: float) -> str:
    return repr(float(v))


@dataclass
class Dataset:
    """Samples of (seven raw features -> target steering-wheel angle in rad)."""

    run_id: np.ndarray
    t: np.ndarray
    features: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        self.run_id = np.asarray(self.run_id, dtype=np.int64).reshape(-1)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(-1)
        self.features = np.asarray(self.features, dtype=np.float64).reshape(-1, N_FEATURES)
        self.target = np.asarray(self.target, dtype=np.float64).reshape(-1)
        n = len(self.run_id)
        if not (len(self.t) == len(self.features) == len(self.target) == n):
            raise ValueError("dataset columns have different lengths")

    def __len__(self) -> int:
        return len(self.target)

    @property
    def run_ids(self) -> np.ndarray:
        return np.unique(self.run_id)

    def subset_runs(self, run_ids) -> "Dataset":
        mask = np.isin(self.run_id, np.asarray(list(run_ids)))
        return Dataset(self.run_id[mask], self.t[mask], self.features[mask], self.target[mask])

    @classmethod
    def concat(cls, parts) -> "Dataset":
        parts = list(parts)
        if not parts:
            return cls(np.zeros(0), np.zeros(0), np.zeros((0, N_FEATURES)), np.zeros(0))
        return cls(np.concatenate([p.run_id for p in parts]), np.concatenate([p.t for p in parts]),
                   np.concatenate([p.features for p in parts]),
                   np.concatenate([p.target for p in parts]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(DATASET_COLUMNS) + "\n")
            for rid, t, feats, y in zip(self.run_id, self.t, self.features, self.target):
                fh.write(",".join([str(int(rid)), _fmt(t), *map(_fmt, feats), _fmt(y)]) + "\n")

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        rows = _read_rows(path, DATASET_COLUMNS)
        if not rows:
            raise DataFormatError(f"{path}: dataset has no samples")
        arr = np.array(rows, dtype=np.float64)
        return cls(arr[:, 0].astype(np.int64), arr[:, 1], arr[:, 2:2 + N_FEATURES], arr[:, -1])


def _read_rows(path, columns) -> list[list[float]]:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFormatError(f"{path}: empty file")
        if tuple(h.strip() for h in header) != tuple(columns):
            raise DataFormatError(f"{path}:1: expected header {','.join(columns)}, "
                                  f"got {','.join(header)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(columns):
                raise DataFormatError(f"{path}:{lineno}: expected {len(columns)} fields, "
                                      f"got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
            if not all(math.isfinite(v) for v in vals):
                raise DataFormatError(f"{path}:{lineno}: non-finite value")
            rows.append(vals)
    return rows


@dataclass
class TraceRecord:
    t: float
    state: VehicleState
    frame: FeatureFrame
    target: float  # commanded / desired wheel angle, rad
    torque: float
    collision: bool


@dataclass
class RunTrace:
    run_id: int
    dt: float
    records: list[TraceRecord] = field(default_factory=list)
    collided: bool = False
    completed: bool = False
    failure: str | None = None
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        getters = {
            "t": lambda r: r.t,
            "x": lambda r: r.state.x,
            "y": lambda r: r.state.y,
            "heading": lambda r: r.state.heading,
            "speed_kmh": lambda r: r.state.speed_kmh,
            "wheel_angle": lambda r: r.state.wheel_angle,
            "wheel_rate": lambda r: r.state.wheel_rate,
            "torque": lambda r: r.torque,
            "collision_flag": lambda r: float(r.collision),
            "target": lambda r: r.target,
        }
        return np.array([getters[name](r) for r in self.records], dtype=np.float64)

    def to_dataset(self) -> Dataset:
        n = len(self.records)
        return Dataset(np.full(n, self.run_id), [r.t for r in self.records],
                       [r.frame.as_array() for r in self.records] if n else np.zeros((0, 7)),
                       [r.target for r in self.records])

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(",".join(TRACE_COLUMNS) + "\n")
        for r in self.records:
            s = r.state
            buf.write(",".join([_fmt(r.t), _fmt(s.x), _fmt(s.y), _fmt(s.heading),
                                _fmt(s.speed_kmh), _fmt(s.wheel_angle), _fmt(s.wheel_rate),
                                _fmt(r.torque), "1" if r.collision else "0"]) + "\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


@dataclass
class TraceTable:
    """A RunTrace as read back from CSV: one float array per column."""

    columns: dict[str, np.ndarray]
    name: str = ""

    def __getitem__(self, key: str) -> np.ndarray:
        return self.columns[key]

    def __len__(self) -> int:
        return len(self.columns["t"])


def read_trace_csv(path) -> TraceTable:
    rows = _read_rows(path, TRACE_COLUMNS)
    if not rows:
        raise DataFormatError(f"{path}: trace has no records")
    arr = np.array(rows, dtype=np.float64)
    return TraceTable({c: arr[:, i] for i, c in enumerate(TRACE_COLUMNS)}, Path(path).stem)
