"""Independent reference implementations used as test oracles.

Nothing here calls into the package's layer code: convolutions are written
as explicit loops or per-offset einsums, so agreement with the optimized
im2col path is a real check.
"""
from __future__ import annotations

import numpy as np


def conv_loop(x, kernel, bias):
    """Valid stride-1 cross-correlation as a literal quadruple loop."""
    n, h, w, cin = x.shape
    kh, kw, _, cout = kernel.shape
    ho, wo = h - kh + 1, w - kw + 1
    out = np.empty((n, ho, wo, cout))
    for b in range(n):
        for i in range(ho):
            for j in range(wo):
                for co in range(cout):
                    acc = bias[co]
                    for di in range(kh):
                        for dj in range(kw):
                            for ci in range(cin):
                                acc += x[b, i + di, j + dj, ci] * kernel[di, dj, ci, co]
                    out[b, i, j, co] = acc
    return out


def conv_offsets(x, kernel, bias):
    kh, kw = kernel.shape[:2]
    ho, wo = x.shape[1] - kh + 1, x.shape[2] - kw + 1
    out = np.broadcast_to(bias, x.shape[:1] + (ho, wo, kernel.shape[3])).copy()
    for di in range(kh):
        for dj in range(kw):
            out += x[:, di:di + ho, dj:dj + wo, :] @ kernel[di, dj]
    return out


def elu(z):
    return np.where(z > 0, z, np.expm1(np.minimum(z, 0.0)))


def _layers(model):
    conv, dense = model.split(model.params)
    return [("conv", w, b) for w, b in conv] + [("dense", w, b) for w, b in dense]


def reference_forward(model, X, start=0, z=None):
    """Forward pass from layer ``start``; ``z`` optionally replaces that
    layer's pre-activation.  Returns the scalar outputs and per-layer
    ``(input, pre-activation)`` pairs."""
    layers = _layers(model)
    a = np.asarray(X, dtype=np.float64)
    cache = []
    for k, (kind, w, b) in enumerate(layers):
        if k < start:
            continue
        if kind == "dense" and a.ndim > 2:
            a = a.reshape(a.shape[0], -1)
        if k == start and z is not None:
            zk = z
        else:
            zk = conv_offsets(a, w, b) if kind == "conv" else a @ w + b
        cache.append((a, zk))
        a = zk if k == len(layers) - 1 else elu(zk)
    return a[:, 0], cache


def reference_loss(model, X, y):
    pred, _ = reference_forward(model, X)
    return float(np.mean((pred - y) ** 2))


def fd_gradient_bruteforce(model, X, y, h=1e-5):
    """Central differences, one full forward pass per perturbation."""
    grad = np.empty_like(model.params)
    for k in range(model.params.size):
        old = model.params[k]
        model.params[k] = old + h
        lp = reference_loss(model, X, y)
        model.params[k] = old - h
        lm = reference_loss(model, X, y)
        model.params[k] = old
        grad[k] = (lp - lm) / (2 * h)
    return grad


def fd_gradient(model, X, y, h=1e-5, chunk=256):
    """Central differences for every parameter, batched per layer.

    Perturbing one parameter of layer ``k`` leaves the activations below
    ``k`` unchanged and moves that layer's affine pre-activation by ``h``
    times its partial derivative, so only the layers from ``k`` upward are
    re-evaluated.  Each perturbed network is still evaluated in full from
    that point, giving the same numbers as :func:`fd_gradient_bruteforce`
    at a fraction of the cost.
    """
    y = np.asarray(y, dtype=np.float64)
    _, cache = reference_forward(model, X)
    layers = _layers(model)
    n = y.size
    grad = np.empty_like(model.params)
    pos = 0
    for k, (kind, w, b) in enumerate(layers):
        a_in, z = cache[k]
        nw = w.size
        for lo in range(0, nw + b.size, chunk):
            idx = np.arange(lo, min(lo + chunk, nw + b.size))
            dz = np.zeros((idx.size,) + z.shape)
            rows = np.arange(idx.size)
            wsel, bsel = idx < nw, idx >= nw
            if wsel.any():
                pw = np.unravel_index(idx[wsel], w.shape)
                if kind == "conv":
                    di, dj, ci, co = pw
                    ho, wo = z.shape[1:3]
                    patches = np.stack([np.stack([a_in[:, i:i + ho, j:j + wo, :]
                                                  for j in range(w.shape[1])])
                                        for i in range(w.shape[0])])
                    dz[rows[wsel], :, :, :, co] = patches[di, dj, :, :, :, ci]
                else:
                    i, j = pw
                    dz[rows[wsel], :, j] = a_in[:, i].T
            dz[rows[bsel], ..., idx[bsel] - nw] = 1.0
            losses = []
            for sgn in (1.0, -1.0):
                zp = (z[None] + sgn * h * dz).reshape((-1,) + z.shape[1:])
                out, _ = reference_forward(model, np.zeros((zp.shape[0],) + a_in.shape[1:]),
                                           start=k, z=zp)
                out = out.reshape(idx.size, n)
                losses.append(np.mean((out - y) ** 2, axis=1))
            grad[pos + idx] = (losses[0] - losses[1]) / (2 * h)
        pos += nw + b.size
    return grad


def relative_error(analytic, numeric, floor=1e-6):
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``.

    The floor keeps entries whose true gradient is essentially zero from
    dividing round-off noise by round-off noise.
    """
    a = np.asarray(analytic)
    b = np.asarray(numeric)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
