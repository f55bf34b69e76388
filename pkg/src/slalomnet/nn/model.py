"""The steering-angle CNN: parameter storage, forward/backward and JSON I/O."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from ..features import DEFAULT_PERMUTATIONS, Normalizer, encode_matrices
from .layers import conv2d_backward, conv2d_forward, elu, elu_grad

FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


def shape_chain(input_shape, conv_filters, kernel_size, dense_units):
    """Activation shapes from the input to the scalar output.

    >>> shape_chain((5, 7, 1), (32, 64, 128), (2, 2), (128, 64))[-4:]
    [(2, 4, 128), (1024,), (128,), (64,)]
    """
    h, w, c = input_shape
    kh, kw = kernel_size
    shapes = [(h, w, c)]
    for f in conv_filters:
        h, w, c = h - kh + 1, w - kw + 1, f
        if h < 1 or w < 1:
            raise ValueError(f"conv stack {conv_filters} with kernel {kernel_size} "
                             f"does not fit input {input_shape}")
        shapes.append((h, w, c))
    shapes.append((h * w * c,))
    shapes.extend((u,) for u in dense_units)
    shapes.append((1,))
    return shapes


class CnnModel:
    """Conv(ELU) x len(conv_filters) -> flatten -> Dense(ELU) x len(dense_units) -> Dense(linear, 1).

    All weights live in one contiguous float64 vector ``params``; the per-layer
    arrays in ``conv`` and ``dense`` are views into it.  Inputs are NHWC arrays
    of shape ``(n,) + input_shape``; outputs are in normalized target units
    (wheel angle divided by ``target_scale``).

    ``input_bounds`` optionally holds per-feature ``(low, high)`` limits in
    normalized units, the range seen during training; :meth:`encode` clips
    to it so the network is never evaluated outside that range.
    """

    def __init__(self, input_shape=(5, 7, 1), conv_filters=(32, 64, 128), kernel_size=(2, 2),
                 dense_units=(128, 64), params=None, normalizer: Normalizer | None = None,
                 permutations=DEFAULT_PERMUTATIONS, target_scale: float = 2.5 * math.pi,
                 seed: int | None = None, epochs: int = 0, input_bounds=None):
        self.input_shape = tuple(int(v) for v in input_shape)
        self.conv_filters = tuple(int(v) for v in conv_filters)
        self.kernel_size = tuple(int(v) for v in kernel_size)
        self.dense_units = tuple(int(v) for v in dense_units)
        self.shapes = shape_chain(self.input_shape, self.conv_filters, self.kernel_size,
                                  self.dense_units)
        self.normalizer = normalizer
        self.permutations = tuple(tuple(int(i) for i in row) for row in permutations)
        self.target_scale = float(target_scale)
        self.seed = seed
        self.epochs = epochs
        self.input_bounds = None
        if input_bounds is not None:
            lo, hi = (np.asarray(b, dtype=np.float64) for b in input_bounds)
            if lo.shape != hi.shape or np.any(lo > hi):
                raise ModelFormatError("input_bounds need matching low <= high vectors")
            self.input_bounds = (lo, hi)

        self._layout = []
        kh, kw = self.kernel_size
        cin = self.input_shape[2]
        for f in self.conv_filters:
            self._layout.append(("conv", (kh, kw, cin, f), (f,)))
            cin = f
        fan_in = self.shapes[len(self.conv_filters) + 1][0]
        for u in self.dense_units + (1,):
            self._layout.append(("dense", (fan_in, u), (u,)))
            fan_in = u
        self.n_params = sum(math.prod(w) + math.prod(b) for _, w, b in self._layout)
        if params is None:
            params = np.zeros(self.n_params)
        params = np.ascontiguousarray(params, dtype=np.float64)
        if params.shape != (self.n_params,):
            raise ModelFormatError(f"expected {self.n_params} parameters, got {params.shape}")
        self.params = params
        self.conv, self.dense = self.split(self.params)

    def split(self, flat):
        """Per-layer ``(weight, bias)`` views into a flat vector with this model's layout."""
        conv, dense = [], []
        pos = 0
        for kind, wshape, bshape in self._layout:
            nw, nb = math.prod(wshape), math.prod(bshape)
            w = flat[pos:pos + nw].reshape(wshape)
            b = flat[pos + nw:pos + nw + nb]
            pos += nw + nb
            (conv if kind == "conv" else dense).append((w, b))
        return conv, dense

    def init_he(self, rng: np.random.Generator) -> "CnnModel":
        """He-normal weights, zero biases."""
        for w, b in self.conv + self.dense:
            fan_in = math.prod(w.shape[:-1])
            w[...] = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=w.shape)
            b[...] = 0.0
        return self

    def encode(self, features) -> np.ndarray:
        """Raw feature rows ``(n, 7)`` -> clipped, normalized input matrices."""
        if self.normalizer is None:
            raise ValueError("model has no normalizer statistics; cannot encode features")
        Z = self.normalizer.transform(features)
        if self.input_bounds is not None:
            Z = np.clip(Z, *self.input_bounds)
        return encode_matrices(Z, self.permutations)[..., None]

    def _check_input(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 3:
            X = X[..., None]
        if X.shape[1:] != self.input_shape:
            raise ValueError(f"model expects inputs of shape (n,) + {self.input_shape}, "
                             f"got {X.shape}")
        return X

    def forward(self, X, return_cache=False):
        """Predict normalized wheel angles for a batch of feature matrices."""
        X = self._check_input(X)
        cache = []
        a = X
        for w, b in self.conv:
            z = conv2d_forward(a, w, b)
            cache.append((a, z))
            a = elu(z)
        a = a.reshape(a.shape[0], -1)
        last = len(self.dense) - 1
        for i, (w, b) in enumerate(self.dense):
            z = a @ w + b
            cache.append((a, z))
            a = elu(z) if i < last else z
        out = a[:, 0]
        return (out, cache) if return_cache else out

    def loss_and_grad(self, X, y):
        """Batch MSE and its exact gradient as a flat vector."""
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        pred, cache = self.forward(X, return_cache=True)
        n = pred.shape[0]
        if n == 0:
            raise ValueError("empty batch")
        resid = pred - y
        loss = float(resid @ resid) / n
        grad = np.empty_like(self.params)
        g_conv, g_dense = self.split(grad)

        g = (2.0 / n) * resid[:, None]
        nconv = len(self.conv)
        for i in range(len(self.dense) - 1, -1, -1):
            a_in, z = cache[nconv + i]
            if i < len(self.dense) - 1:
                g = g * elu_grad(z)
            w = self.dense[i][0]
            g_dense[i][0][...] = a_in.T @ g
            g_dense[i][1][...] = g.sum(axis=0)
            g = g @ w.T
        g = g.reshape((n,) + self.shapes[nconv])
        for i in range(nconv - 1, -1, -1):
            a_in, z = cache[i]
            g = g * elu_grad(z)
            dk, db, g = conv2d_backward(a_in, self.conv[i][0], g, need_input_grad=i > 0)
            g_conv[i][0][...] = dk
            g_conv[i][1][...] = db
        return loss, grad

    def copy(self) -> "CnnModel":
        return CnnModel.from_dict(self.to_dict())

    def to_dict(self) -> dict:
        norm = None
        if self.normalizer is not None:
            norm = {"mean": self.normalizer.mean_.tolist(), "std": self.normalizer.std_.tolist(),
                    "epsilon": self.normalizer.epsilon}
        layers = []
        names = [f"conv{i + 1}" for i in range(len(self.conv))] + \
                [f"dense{i + 1}" for i in range(len(self.dense))]
        for name, (w, b) in zip(names, self.conv + self.dense):
            layers.append({"name": name, "weight_shape": list(w.shape),
                           "weight": w.ravel().tolist(), "bias": b.tolist()})
        return {
            "format_version": FORMAT_VERSION,
            "input_shape": list(self.input_shape),
            "conv_filters": list(self.conv_filters),
            "kernel_size": list(self.kernel_size),
            "dense_units": list(self.dense_units),
            "activation": "elu",
            "layers": layers,
            "normalizer": norm,
            "permutations": [list(r) for r in self.permutations],
            "target_scale": self.target_scale,
            "input_bounds": None if self.input_bounds is None else
            {"low": self.input_bounds[0].tolist(), "high": self.input_bounds[1].tolist()},
            "seed": self.seed,
            "epochs": self.epochs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CnnModel":
        version = d.get("format_version")
        if version != FORMAT_VERSION:
            raise ModelFormatError(f"model format version {version!r} does not match "
                                   f"supported version {FORMAT_VERSION}")
        flat = []
        for layer in d["layers"]:
            flat.extend(layer["weight"])
            flat.extend(layer["bias"])
        norm = None
        if d.get("normalizer") is not None:
            nd = d["normalizer"]
            norm = Normalizer.from_stats(nd["mean"], nd["std"], nd.get("epsilon", 1e-8))
        bounds = d.get("input_bounds")
        if bounds is not None:
            bounds = (bounds["low"], bounds["high"])
        return cls(d["input_shape"], d["conv_filters"], d["kernel_size"], d["dense_units"],
                   params=np.array(flat, dtype=np.float64), normalizer=norm,
                   permutations=d["permutations"], target_scale=d["target_scale"],
                   seed=d.get("seed"), epochs=d.get("epochs", 0), input_bounds=bounds)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "CnnModel":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"{path}: not a model file ({exc})") from exc
        return cls.from_dict(d)
