"""Batched layer primitives on NHWC float64 arrays."""
import numpy as np

ELU_ALPHA = 1.0


def elu(z, alpha=ELU_ALPHA):
    """``z`` for ``z > 0`` else ``alpha * (exp(z) - 1)``."""
    z = np.asarray(z, dtype=np.float64)
    return np.where(z > 0, z, alpha * np.expm1(np.minimum(z, 0.0)))


def elu_grad(z, alpha=ELU_ALPHA):
    z = np.asarray(z, dtype=np.float64)
    return np.where(z > 0, 1.0, alpha * np.exp(np.minimum(z, 0.0)))


def _im2col(x, kh, kw):
    n, h, w, _ = x.shape
    ho, wo = h - kh + 1, w - kw + 1
    patches = [x[:, i:i + ho, j:j + wo, :] for i in range(kh) for j in range(kw)]
    return np.concatenate(patches, axis=3)  # (n, ho, wo, kh*kw*c)


def conv2d_forward(x, kernel, bias):
    """Valid cross-correlation with stride 1.

    Parameters
    ----------
    x : ndarray, shape (n, h, w, c_in)
    kernel : ndarray, shape (kh, kw, c_in, c_out)
    bias : ndarray, shape (c_out,)

    Returns
    -------
    out : ndarray, shape (n, h - kh + 1, w - kw + 1, c_out)
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ValueError(f"conv input must be (n, h, w, c), got shape {x.shape}")
    kh, kw, cin, cout = kernel.shape
    if x.shape[3] != cin:
        raise ValueError(f"conv expects {cin} input channels, got {x.shape[3]}")
    if x.shape[1] < kh or x.shape[2] < kw:
        raise ValueError(f"input {x.shape[1:3]} smaller than kernel {(kh, kw)}")
    cols = _im2col(x, kh, kw)
    return cols @ kernel.reshape(kh * kw * cin, cout) + bias


def conv2d_backward(x, kernel, grad_out, need_input_grad=True):
    """Gradients of :func:`conv2d_forward` w.r.t. kernel, bias and input."""
    kh, kw, cin, cout = kernel.shape
    n, h, w, _ = x.shape
    ho, wo = h - kh + 1, w - kw + 1
    cols = _im2col(x, kh, kw).reshape(-1, kh * kw * cin)
    g = grad_out.reshape(-1, cout)
    d_kernel = (cols.T @ g).reshape(kernel.shape)
    d_bias = g.sum(axis=0)
    if not need_input_grad:
        return d_kernel, d_bias, None
    d_cols = (g @ kernel.reshape(kh * kw * cin, cout).T).reshape(n, ho, wo, kh * kw, cin)
    d_x = np.zeros_like(x)
    k = 0
    for i in range(kh):
        for j in range(kw):
            d_x[:, i:i + ho, j:j + wo, :] += d_cols[:, :, :, k, :]
            k += 1
    return d_kernel, d_bias, d_x
