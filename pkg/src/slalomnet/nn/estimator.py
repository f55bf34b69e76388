"""scikit-learn style front end for the steering CNN."""
from __future__ import annotations

import math
import time

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..features import DEFAULT_PERMUTATIONS, N_FEATURES, FeatureMatrixEncoder
from .model import CnnModel
from .training import FitReport, TrainConfig, fit_model, predict_batched, regression_metrics


def stride_mask(groups: np.ndarray, stride: int) -> np.ndarray:
    """Keep every ``stride``-th sample within each group, in order of appearance."""
    groups = np.asarray(groups)
    if stride == 1:
        return np.ones(len(groups), dtype=bool)
    order = np.argsort(groups, kind="stable")
    sorted_groups = groups[order]
    starts = np.r_[0, np.flatnonzero(sorted_groups[1:] != sorted_groups[:-1]) + 1]
    run_start = np.repeat(starts, np.diff(np.r_[starts, len(groups)]))
    position = np.empty(len(groups), dtype=np.int64)
    position[order] = np.arange(len(groups)) - run_start
    return position % stride == 0


class SteeringCNNRegressor(RegressorMixin, BaseEstimator):
    """Predict the steering-wheel angle (rad) from the seven raw driving features.

    Features are z-scored, laid out as a 5x7 one-channel image via fixed
    permutations and passed through the CNN.  Targets are divided by
    ``target_scale`` before training so the network works on roughly [-1, 1].

    Parameters
    ----------
    conv_filters, kernel_size, dense_units : tuple
        Network architecture.
    epochs, batch_size, learning_rate : training recipe.
    lr_factor, lr_patience, min_lr : reduce-on-plateau schedule.
    validation_fraction : float
        Share of runs (``groups``) held out to drive the schedule.
    frame_stride : int
        Train on every k-th sample of each group.
    grad_clip_norm : float or None
        Global gradient-norm clip per minibatch.
    decorrelated_features, decorrelate_prob :
        Features decorrelated from the target during training (see
        :class:`~slalomnet.nn.training.TrainConfig`).  Inputs are clipped to
        the normalized range seen in training at prediction time.
    target_scale : float
        Wheel angle (rad) that maps to a network output of 1.
    random_state : int
    """

    def __init__(self, conv_filters=(32, 64, 128), kernel_size=(2, 2), dense_units=(128, 64),
                 epochs=18, batch_size=4, learning_rate=1e-3, lr_factor=0.5, lr_patience=3,
                 min_lr=1e-5, beta1=0.9, beta2=0.999, adam_eps=1e-8, validation_fraction=0.1,
                 frame_stride=1, grad_clip_norm=1.0, decorrelated_features=("f6", "f7"),
                 decorrelate_prob=1.0,
                 permutations=DEFAULT_PERMUTATIONS, target_scale=2.5 * math.pi,
                 random_state=0):
        self.conv_filters = conv_filters
        self.kernel_size = kernel_size
        self.dense_units = dense_units
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lr_factor = lr_factor
        self.lr_patience = lr_patience
        self.min_lr = min_lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.adam_eps = adam_eps
        self.validation_fraction = validation_fraction
        self.frame_stride = frame_stride
        self.grad_clip_norm = grad_clip_norm
        self.decorrelated_features = decorrelated_features
        self.decorrelate_prob = decorrelate_prob
        self.permutations = permutations
        self.target_scale = target_scale
        self.random_state = random_state

    @classmethod
    def from_config(cls, config: TrainConfig, target_scale: float = 2.5 * math.pi):
        return cls(conv_filters=config.conv_filters, kernel_size=config.kernel_size,
                   dense_units=config.dense_units, epochs=config.epochs,
                   batch_size=config.batch_size, learning_rate=config.lr0,
                   lr_factor=config.lr_factor, lr_patience=config.lr_patience,
                   min_lr=config.lr_min, beta1=config.beta1, beta2=config.beta2,
                   adam_eps=config.adam_eps, validation_fraction=config.validation_fraction,
                   frame_stride=config.frame_stride, grad_clip_norm=config.grad_clip_norm,
                   decorrelated_features=config.decorrelated_features,
                   decorrelate_prob=config.decorrelate_prob, target_scale=target_scale,
                   random_state=config.seed)

    @classmethod
    def from_model(cls, model: CnnModel) -> "SteeringCNNRegressor":
        """Wrap an already trained (e.g. loaded) model for prediction."""
        if model.normalizer is None:
            raise ValueError("model carries no normalizer statistics")
        est = cls(conv_filters=model.conv_filters, kernel_size=model.kernel_size,
                  dense_units=model.dense_units, permutations=model.permutations,
                  target_scale=model.target_scale, random_state=model.seed)
        est.model_ = model
        est.encoder_ = FeatureMatrixEncoder(model.permutations)
        est.encoder_.normalizer_ = model.normalizer
        est.n_features_in_ = N_FEATURES
        return est

    def _config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                           lr0=self.learning_rate, lr_factor=self.lr_factor,
                           lr_patience=self.lr_patience, lr_min=self.min_lr, beta1=self.beta1,
                           beta2=self.beta2, adam_eps=self.adam_eps,
                           validation_fraction=self.validation_fraction,
                           frame_stride=self.frame_stride, grad_clip_norm=self.grad_clip_norm,
                           decorrelated_features=self.decorrelated_features,
                           decorrelate_prob=self.decorrelate_prob, conv_filters=self.conv_filters,
                           kernel_size=self.kernel_size, dense_units=self.dense_units,
                           seed=self.random_state)

    def fit(self, X, y, groups=None):
        """Fit on raw features ``X`` (n, 7) and wheel angles ``y`` (rad).

        ``groups`` (run ids) make the validation split and the frame stride
        operate per run.
        """
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        if X.shape[1] != N_FEATURES:
            raise ValueError(f"expected {N_FEATURES} features, got {X.shape[1]}")
        config = self._config()
        started = time.perf_counter()
        rng = np.random.default_rng(self.random_state)
        groups = np.arange(len(y)) if groups is None else np.asarray(groups)

        uniq = np.unique(groups)
        n_val = int(round(self.validation_fraction * len(uniq)))
        if self.validation_fraction > 0 and len(uniq) > 1:
            n_val = min(max(n_val, 1), len(uniq) - 1)
        else:
            n_val = 0
        val_groups = rng.permutation(uniq)[:n_val]
        val_mask = np.isin(groups, val_groups)
        fit_mask = ~val_mask & stride_mask(groups, self.frame_stride)

        self.encoder_ = FeatureMatrixEncoder(self.permutations).fit(X[~val_mask])
        self.model_ = CnnModel((len(self.permutations), N_FEATURES, 1), self.conv_filters,
                               self.kernel_size, self.dense_units,
                               normalizer=self.encoder_.normalizer_,
                               permutations=self.permutations, target_scale=self.target_scale,
                               seed=self.random_state)
        Z = self.encoder_.normalizer_.transform(X[~val_mask])
        self.model_.input_bounds = (Z.min(axis=0), Z.max(axis=0))
        self.model_.init_he(rng)
        Xm = self.model_.encode(X)
        ys = y / self.target_scale
        X_val = Xm[val_mask] if n_val else None
        y_val = ys[val_mask] if n_val else None
        self.report_ = fit_model(self.model_, Xm[fit_mask], ys[fit_mask], config, rng,
                                 X_val, y_val)
        self.report_.seconds = time.perf_counter() - started
        self.n_features_in_ = N_FEATURES
        return self

    def transform_features(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        return self.model_.encode(check_array(X, dtype=np.float64))

    def predict_normalized(self, X) -> np.ndarray:
        return predict_batched(self.model_, self.transform_features(X))

    def predict(self, X) -> np.ndarray:
        return self.predict_normalized(X) * self.model_.target_scale

    def evaluate(self, X, y) -> tuple[float, float | None]:
        """MSE (normalized target units) and R2."""
        y = np.asarray(y, dtype=np.float64) / self.model_.target_scale
        return regression_metrics(y, self.predict_normalized(X))


def train(dataset, config: TrainConfig, test=None,
          target_scale: float = 2.5 * math.pi) -> tuple[CnnModel, FitReport]:
    """Train on a :class:`~slalomnet.data.Dataset`; fill in train (and test) metrics."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    est = SteeringCNNRegressor.from_config(config, target_scale)
    est.fit(dataset.features, dataset.target, groups=dataset.run_id)
    report = est.report_
    report.train_mse, report.train_r2 = est.evaluate(dataset.features, dataset.target)
    if test is not None and len(test):
        report.test_mse, report.test_r2 = est.evaluate(test.features, test.target)
    return est.model_, report


def evaluate(model: CnnModel, dataset) -> tuple[float, float | None]:
    """``(MSE, R2)`` of ``model`` on ``dataset``; MSE is in normalized target units."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    return SteeringCNNRegressor.from_model(model).evaluate(dataset.features, dataset.target)
