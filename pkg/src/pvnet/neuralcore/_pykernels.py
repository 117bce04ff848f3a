"""Pure-numpy implementations of the hot encoder kernels.

All arrays are float64 and channels-first: activations are ``[C, N, H, W]``
(channel, frame, row, column), so a 3x3 convolution is the single GEMM
``W[C_out, 9*C_in] @ cols[9*C_in, N*H*W]``.  ``_ckernels.pyx`` provides
the same functions compiled; both give identical results except for the
summation order inside ``prelu_backward``'s slope gradient.
"""
import numpy as np

BACKEND = "numpy"


def im2col3x3(x):
    """Unfold 3x3 zero-padded neighbourhoods.

    Parameters
    ----------
    x : ndarray, shape (C, N, H, W)

    Returns
    -------
    ndarray, shape (C, 9, N, H, W)
        ``cols[c, 3*di + dj, n, i, j] == x[c, n, i+di-1, j+dj-1]`` (0 outside).
    """
    c, n, h, w = x.shape
    padded = np.zeros((c, n, h + 2, w + 2))
    padded[:, :, 1:-1, 1:-1] = x
    cols = np.empty((c, 9, n, h, w))
    for k in range(9):
        di, dj = divmod(k, 3)
        cols[:, k] = padded[:, :, di:di + h, dj:dj + w]
    return cols


def col2im3x3(dcols):
    """Adjoint of :func:`im2col3x3`: scatter-add columns back onto the grid."""
    c, _, n, h, w = dcols.shape
    padded = np.zeros((c, n, h + 2, w + 2))
    for k in range(9):
        di, dj = divmod(k, 3)
        padded[:, :, di:di + h, dj:dj + w] += dcols[:, k]
    return np.ascontiguousarray(padded[:, :, 1:-1, 1:-1])


def maxpool2x2_forward(x):
    """Disjoint 2x2 max pooling of planes ``[B, H, W]``.

    Returns the pooled planes and the argmax (0..3, row-major inside the
    block, first maximum wins) used to route gradients.
    """
    b, h, w = x.shape
    blocks = x.reshape(b, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4).reshape(b, h // 2, w // 2, 4)
    arg = np.argmax(blocks, axis=-1).astype(np.uint8)
    out = np.take_along_axis(blocks, arg[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(out), arg


def maxpool2x2_backward(dout, arg):
    b, hp, wp = dout.shape
    onehot = np.zeros((b, hp, wp, 4))
    np.put_along_axis(onehot, arg[..., None].astype(np.intp), dout[..., None], axis=-1)
    dx = onehot.reshape(b, hp, wp, 2, 2).transpose(0, 1, 3, 2, 4)
    return np.ascontiguousarray(dx.reshape(b, hp * 2, wp * 2))


def prelu_forward(x, slope):
    """PReLU on ``[C, M]`` rows, one slope per row."""
    return np.where(x > 0, x, x * slope[:, None])


def prelu_backward(dy, x, slope):
    """Return ``(dx, dslope)`` for ``[C, M]`` inputs."""
    neg = x <= 0
    dx = np.where(neg, dy * slope[:, None], dy)
    dslope = (dy * x * neg).sum(axis=1)
    return dx, dslope


def adam_step(p, g, m, v, b1, b2, step, inv_sqrt_c2, eps):
    """One in-place Adam update of flat float64 arrays."""
    tmp = np.multiply(g, 1.0 - b1)
    m *= b1
    m += tmp
    np.multiply(g, g, out=tmp)
    tmp *= 1.0 - b2
    v *= b2
    v += tmp
    np.sqrt(v, out=tmp)
    tmp *= inv_sqrt_c2
    tmp += eps
    np.divide(m, tmp, out=tmp)
    tmp *= step
    p -= tmp
