"""Feed-forward layers with exact manual gradients.

Public functions take ``[C, H, W]`` or batched ``[N, C, H, W]`` arrays.  The
``*_cf`` variants are the fast path used by the model: activations are held
as ``[C, N, H, W]`` so that a 3x3 convolution is one GEMM
``W[C_out, 9*C_in] @ cols[9*C_in, N*H*W]`` with no transposes.
"""
import numpy as np

from ..errors import DimensionError, ParameterError
from . import kernels as K


def _as4d(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise DimensionError(f"expected [C,H,W] or [N,C,H,W], got shape {x.shape}")


# --------------------------------------------------------------------------
# 3x3 same-padding convolution


def conv3x3_forward_cf(x, wk, bias):
    """Same-padded 3x3 convolution on channels-first ``x`` of shape ``[C_in, N, H, W]``.

    ``wk`` is the kernel tensor reshaped to ``[C_out, 9*C_in]``.  Returns
    ``(y, cols)``; ``cols`` is kept for the backward pass.
    """
    c_in, n, h, w = x.shape
    if wk.shape[1] != 9 * c_in:
        raise DimensionError(f"kernel expects {wk.shape[1] // 9} input channels, input has {c_in}")
    cols = K.im2col3x3(np.ascontiguousarray(x))
    y = wk @ cols.reshape(9 * c_in, n * h * w)
    y += bias[:, None]
    return y.reshape(wk.shape[0], n, h, w), cols


def conv3x3_backward_cf(dy, cols, wk, need_dx=True):
    """Return ``(dx or None, dwk, dbias)``."""
    c_out = dy.shape[0]
    dy2 = dy.reshape(c_out, -1)
    cols2 = cols.reshape(wk.shape[1], -1)
    dwk = dy2 @ cols2.T
    dbias = dy2.sum(axis=1)
    dx = None
    if need_dx:
        dx = K.col2im3x3((wk.T @ dy2).reshape(cols.shape))
    return dx, dwk, dbias


def _check_conv(x4, kernels, bias):
    if kernels.ndim != 4 or kernels.shape[2:] != (3, 3):
        raise DimensionError(f"kernels must be [C_out, C_in, 3, 3], got {kernels.shape}")
    if kernels.shape[1] != x4.shape[1]:
        raise DimensionError(f"kernels have C_in={kernels.shape[1]}, input has C_in={x4.shape[1]}")
    if bias is not None and bias.shape != (kernels.shape[0],):
        raise DimensionError(f"bias must have shape ({kernels.shape[0]},), got {bias.shape}")


def conv2d_forward(x, kernels, bias):
    """3x3 convolution with zero-filled same padding.

    Parameters
    ----------
    x : array, shape (C_in, H, W) or (N, C_in, H, W)
    kernels : array, shape (C_out, C_in, 3, 3)
    bias : array, shape (C_out,)

    Returns
    -------
    array with the spatial shape of ``x`` and ``C_out`` channels.
    """
    x4, squeeze = _as4d(x)
    kernels = np.asarray(kernels, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    _check_conv(x4, kernels, bias)
    y, _ = conv3x3_forward_cf(x4.transpose(1, 0, 2, 3), kernels.reshape(kernels.shape[0], -1), bias)
    y = np.ascontiguousarray(y.transpose(1, 0, 2, 3))
    return y[0] if squeeze else y


def conv2d_backward(dout, x, kernels):
    """Gradients of :func:`conv2d_forward`: ``(dx, dkernels, dbias)``."""
    x4, squeeze = _as4d(x)
    d4, _ = _as4d(dout)
    kernels = np.asarray(kernels, dtype=np.float64)
    _check_conv(x4, kernels, None)
    cols = K.im2col3x3(np.ascontiguousarray(x4.transpose(1, 0, 2, 3)))
    dx, dwk, db = conv3x3_backward_cf(np.ascontiguousarray(d4.transpose(1, 0, 2, 3)), cols,
                                      kernels.reshape(kernels.shape[0], -1))
    dx = np.ascontiguousarray(dx.transpose(1, 0, 2, 3))
    return (dx[0] if squeeze else dx), dwk.reshape(kernels.shape), db


# --------------------------------------------------------------------------
# PReLU


def prelu_forward(x, slope, axis=0):
    """Parametric ReLU, one slope per entry along ``axis``.

    ``out = x`` where ``x > 0`` and ``slope * x`` elsewhere.
    """
    slope = np.ascontiguousarray(slope, dtype=np.float64)
    xv = np.moveaxis(np.asarray(x, dtype=np.float64), axis, 0)
    if slope.shape != (xv.shape[0],):
        raise DimensionError(f"slope has shape {slope.shape}, expected ({xv.shape[0]},)")
    out = K.prelu_forward(np.ascontiguousarray(xv).reshape(xv.shape[0], -1), slope)
    return np.moveaxis(out.reshape(xv.shape), 0, axis)


def prelu_backward(dout, x, slope, axis=0):
    """Return ``(dx, dslope)``."""
    slope = np.ascontiguousarray(slope, dtype=np.float64)
    xv = np.moveaxis(np.asarray(x, dtype=np.float64), axis, 0)
    dv = np.moveaxis(np.asarray(dout, dtype=np.float64), axis, 0)
    c = xv.shape[0]
    dx, dslope = K.prelu_backward(np.ascontiguousarray(dv).reshape(c, -1),
                                  np.ascontiguousarray(xv).reshape(c, -1), slope)
    return np.moveaxis(dx.reshape(xv.shape), 0, axis), dslope


# --------------------------------------------------------------------------
# 2x2 max pooling


def maxpool2x2_forward(x):
    """Disjoint 2x2 max pooling over the last two axes of ``[C,H,W]`` or ``[N,C,H,W]``.

    Returns ``(out, argmax)`` where ``argmax`` (0..3) records the winning
    position in each block for :func:`maxpool2x2_backward`.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (3, 4):
        raise DimensionError(f"expected [C,H,W] or [N,C,H,W], got shape {x.shape}")
    h, w = x.shape[-2:]
    if h % 2 or w % 2:
        raise DimensionError(f"max pooling needs even H and W, got {(h, w)}")
    out, arg = K.maxpool2x2_forward(np.ascontiguousarray(x).reshape(-1, h, w))
    lead = x.shape[:-2]
    return out.reshape(lead + out.shape[1:]), arg.reshape(lead + arg.shape[1:])


def maxpool2x2_backward(dout, argmax):
    dout = np.asarray(dout, dtype=np.float64)
    hp, wp = dout.shape[-2:]
    dx = K.maxpool2x2_backward(np.ascontiguousarray(dout).reshape(-1, hp, wp),
                               np.ascontiguousarray(argmax).reshape(-1, hp, wp))
    return dx.reshape(dout.shape[:-2] + (2 * hp, 2 * wp))


# --------------------------------------------------------------------------
# Dropout


def dropout_mask(shape, rate, rng):
    """Inverted-dropout multiplier: 0 for dropped entries, ``1/(1-rate)`` otherwise."""
    if not 0 <= rate < 1:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0:
        return None
    keep = rng.random(shape, dtype=np.float32) >= np.float32(rate)
    return keep * (1.0 / (1.0 - rate))


def dropout_forward(x, rate, mode, rng=None):
    """Inverted dropout.

    Parameters
    ----------
    mode : {"train", "eval"}
        Eval mode is the identity.
    rng : numpy.random.Generator
        Required in train mode when ``rate > 0``.

    Returns
    -------
    (out, mask)
        ``mask`` is ``None`` when the layer acted as the identity.
    """
    if not 0 <= rate < 1:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise ParameterError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    if mode == "eval" or rate == 0:
        return x, None
    mask = dropout_mask(x.shape, rate, rng)
    return x * mask, mask


def dropout_backward(dout, mask):
    return dout if mask is None else dout * mask


# --------------------------------------------------------------------------
# Dense


def dense_forward(x, weight, bias):
    """``out = W x + b`` for ``x`` of shape ``[d_in]`` or ``[N, d_in]``."""
    x = np.asarray(x, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if weight.ndim != 2 or x.shape[-1] != weight.shape[1] or bias.shape != (weight.shape[0],):
        raise DimensionError(
            f"dense shapes do not conform: x {x.shape}, W {weight.shape}, b {bias.shape}")
    return x @ weight.T + bias


def dense_backward(dout, x, weight):
    """Return ``(dx, dweight, dbias)``."""
    dout = np.asarray(dout, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    dx = dout @ weight
    if x.ndim == 1:
        return dx, np.outer(dout, x), dout.copy()
    return dx, dout.T @ x, dout.sum(axis=0)


# --------------------------------------------------------------------------
# Loss


def mse_loss(pred, target):
    """Mean squared error and its gradient with respect to ``pred``."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if pred.shape != target.shape:
        raise DimensionError(f"pred has {pred.size} entries, target has {target.size}")
    if pred.size == 0:
        raise ParameterError("mse_loss needs at least one sample")
    err = pred - target
    n = err.size
    return float(err @ err) / n, (2.0 / n) * err
