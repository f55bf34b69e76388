"""Mini-batch training loop and regression metrics."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..features import FEATURE_NAMES, encode_matrices
from .model import CnnModel
from .optim import Adam, ReduceLROnPlateau

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    """Training recipe.

    ``frame_stride`` keeps every k-th frame of each run for the optimisation
    passes (validation still uses every frame).

    ``decorrelated_features`` names features whose values are, with
    probability ``decorrelate_prob`` per training sample and epoch, replaced
    by a uniform draw over that feature's training range, so they carry no
    information about the target and the network learns to ignore them
    across the whole range.  By default this applies to the two rate
    features, which otherwise let the network copy the demonstrator's
    steering motion instead of reading the road.

    ``grad_clip_norm`` rescales any minibatch gradient whose global L2 norm
    exceeds it; with batch size 4 a single outlier batch can otherwise push
    the ELU layers into saturation from which training never recovers.
    """

    epochs: int = 18
    batch_size: int = 4
    lr0: float = 1e-3
    lr_factor: float = 0.5
    lr_patience: int = 3
    lr_min: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    validation_fraction: float = 0.1
    frame_stride: int = 1
    conv_filters: tuple = (32, 64, 128)
    kernel_size: tuple = (2, 2)
    dense_units: tuple = (128, 64)
    grad_clip_norm: float | None = 1.0
    decorrelated_features: tuple = ("f6", "f7")
    decorrelate_prob: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr0 > 0:
            raise ValueError("lr0 must be > 0")
        if self.frame_stride < 1:
            raise ValueError("frame_stride must be >= 1")
        if not 0 <= self.validation_fraction < 1:
            raise ValueError("validation_fraction must lie in [0, 1)")
        if self.grad_clip_norm is not None and not self.grad_clip_norm > 0:
            raise ValueError("grad_clip_norm must be > 0 (or None to disable)")
        if not 0 <= self.decorrelate_prob <= 1:
            raise ValueError("decorrelate_prob must lie in [0, 1]")
        self.decorrelated_features = tuple(self.decorrelated_features)
        unknown = set(self.decorrelated_features) - set(FEATURE_NAMES)
        if unknown:
            raise ValueError(f"unknown feature name(s) {sorted(unknown)}; "
                             f"choose from {FEATURE_NAMES}")
        self.conv_filters = tuple(self.conv_filters)
        self.kernel_size = tuple(self.kernel_size)
        self.dense_units = tuple(self.dense_units)


@dataclass
class FitReport:
    epoch_train_mse: list[float] = field(default_factory=list)
    epoch_val_mse: list[float] = field(default_factory=list)
    epoch_lr: list[float] = field(default_factory=list)
    train_mse: float | None = None
    train_r2: float | None = None
    test_mse: float | None = None
    test_r2: float | None = None
    n_train_samples: int = 0
    n_val_samples: int = 0
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def regression_metrics(y_true, y_pred) -> tuple[float, float | None]:
    """Return ``(MSE, R2)``; R2 is ``None`` when the targets have zero variance."""
    y_true = np.asarray(y_true, dtype=np.float64).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=np.float64).reshape(-1)
    if y_true.size == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    resid = y_true - y_pred
    mse = float(np.mean(resid ** 2))
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    if ss_tot == 0.0:
        return mse, None
    return mse, 1.0 - float(np.sum(resid ** 2)) / ss_tot


def predict_batched(model: CnnModel, X, batch: int = 8192) -> np.ndarray:
    X = np.asarray(X)
    if len(X) == 0:
        return np.zeros(0)
    return np.concatenate([model.forward(X[i:i + batch]) for i in range(0, len(X), batch)])


def feature_mask(permutations, feature_idx) -> np.ndarray:
    """Boolean ``(rows, 7, 1)`` mask of the matrix cells holding the given features."""
    table = np.asarray(permutations)
    return np.isin(table, list(feature_idx))[..., None]


def fit_model(model: CnnModel, X, y, config: TrainConfig, rng: np.random.Generator,
              X_val=None, y_val=None, report: FitReport | None = None) -> FitReport:
    """Optimise ``model.params`` in place with Adam on MSE.

    ``X`` holds encoded feature matrices and ``y`` targets in normalized units.
    The learning rate is halved (by default) when the validation MSE, or the
    training MSE if no validation data is given, stalls for ``lr_patience``
    epochs.  Validation always sees the untouched features.  Replacement
    values for decorrelated features are drawn within
    ``model.input_bounds`` (or the range of ``X`` if unset).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n = len(y)
    if n == 0:
        raise TrainingError("empty training set")
    if n < config.batch_size:
        raise TrainingError(f"need at least batch_size={config.batch_size} samples, got {n}")
    report = report or FitReport()
    report.n_train_samples = n
    report.n_val_samples = 0 if y_val is None else len(y_val)
    opt = Adam(model.n_params, config.beta1, config.beta2, config.adam_eps)
    sched = ReduceLROnPlateau(config.lr0, config.lr_factor, config.lr_patience, config.lr_min)
    lr = config.lr0
    bs = config.batch_size
    feature_idx = [FEATURE_NAMES.index(f) for f in config.decorrelated_features]
    mask = feature_mask(model.permutations, feature_idx) if feature_idx else None
    if model.input_bounds is not None:
        lo, hi = model.input_bounds
    else:
        lo, hi = X[:, 0, :, 0].min(axis=0), X[:, 0, :, 0].max(axis=0)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        swap = rng.random(n) < config.decorrelate_prob
        fresh = rng.uniform(lo, hi, size=(n, len(lo)))
        total = 0.0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            Xb = X[idx]
            if mask is not None:
                # encode whole replacement rows so every matrix row still holds the same values
                sel = swap[start:start + bs]
                repl = encode_matrices(fresh[start:start + bs][sel], model.permutations)[..., None]
                Xb[sel] = np.where(mask, repl, Xb[sel])
            loss, grad = model.loss_and_grad(Xb, y[idx])
            if not math.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise TrainingError(f"non-finite loss/gradient in epoch {epoch + 1}")
            if config.grad_clip_norm is not None:
                norm = float(np.linalg.norm(grad))
                if norm > config.grad_clip_norm:
                    grad *= config.grad_clip_norm / norm
            opt.step(model.params, grad, lr)
            total += loss * len(idx)
        train_mse = total / n
        report.epoch_train_mse.append(train_mse)
        report.epoch_lr.append(lr)
        if X_val is not None and len(y_val):
            val_mse = float(np.mean((predict_batched(model, X_val) - y_val) ** 2))
            report.epoch_val_mse.append(val_mse)
            monitor = val_mse
        else:
            monitor = train_mse
        if not math.isfinite(monitor):
            raise TrainingError(f"non-finite loss after epoch {epoch + 1}")
        log.info("epoch %d/%d  train_mse=%.6g  monitor=%.6g  lr=%.3g", epoch + 1,
                 config.epochs, train_mse, monitor, lr)
        lr = sched.update(monitor)
        model.epochs = epoch + 1
    return report
