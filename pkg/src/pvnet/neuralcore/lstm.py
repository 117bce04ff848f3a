"""LSTM cell, unidirectional sequence pass and bidirectional wrapper.

Gate parameters for one direction are stored stacked in the order
``f, i, o, c``::

    W : [4u, d]   input weights  (W_f; W_i; W_o; W_c)
    U : [4u, u]   recurrent weights
    b : [4u]      biases

The gate nonlinearity is the hard sigmoid ``clip(0.2 z + 0.5, 0, 1)``; the
candidate and output nonlinearities are ``tanh``.
"""
import numpy as np

from ..errors import DimensionError, ParameterError

GATES = ("f", "i", "o", "c")


def hard_sigmoid(z):
    return np.clip(0.2 * z + 0.5, 0.0, 1.0)


def hard_sigmoid_grad(z):
    return np.where(np.abs(z) < 2.5, 0.2, 0.0)


def gate_slice(params, name, gate):
    """View of one gate block, e.g. ``gate_slice(p, "W", "f")`` is ``W_f``."""
    u = params["U"].shape[1]
    k = GATES.index(gate)
    return params[name][k * u:(k + 1) * u]


def _check(params, d):
    W, U, b = params["W"], params["U"], params["b"]
    u = U.shape[1]
    if W.shape != (4 * u, d) or U.shape != (4 * u, u) or b.shape != (4 * u,):
        raise DimensionError(
            f"LSTM params do not conform to input dim {d}: W {W.shape}, U {U.shape}, b {b.shape}")
    return u


def _gates(z, u):
    f = hard_sigmoid(z[..., :u])
    i = hard_sigmoid(z[..., u:2 * u])
    o = hard_sigmoid(z[..., 2 * u:3 * u])
    g = np.tanh(z[..., 3 * u:])
    return f, i, o, g


def lstm_cell_step(x, h_prev, c_prev, params):
    """One LSTM step.  Works on ``[d]`` vectors or ``[B, d]`` batches.

    Returns ``(h, c)``.
    """
    h, c, _ = lstm_cell_forward(x, h_prev, c_prev, params)
    return h, c


def lstm_cell_forward(x, h_prev, c_prev, params):
    """Like :func:`lstm_cell_step` but also returns the cache for backward."""
    x = np.asarray(x, dtype=np.float64)
    u = _check(params, x.shape[-1])
    if h_prev.shape[-1] != u or c_prev.shape[-1] != u:
        raise DimensionError(f"state size must be {u}")
    z = x @ params["W"].T + h_prev @ params["U"].T + params["b"]
    f, i, o, g = _gates(z, u)
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (x, h_prev, c_prev, z, f, i, o, g, tc)


def lstm_cell_backward(dh, dc, cache, params):
    """Backward through one step.

    Returns ``(dx, dh_prev, dc_prev, grads)`` with ``grads`` keyed W, U, b.
    """
    x, h_prev, c_prev, z, f, i, o, g, tc = cache
    u = params["U"].shape[1]
    dc = dc + dh * o * (1.0 - tc * tc)
    dz = np.concatenate([
        dc * c_prev * hard_sigmoid_grad(z[..., :u]),
        dc * g * hard_sigmoid_grad(z[..., u:2 * u]),
        dh * tc * hard_sigmoid_grad(z[..., 2 * u:3 * u]),
        dc * i * (1.0 - g * g),
    ], axis=-1)
    if dz.ndim == 1:
        grads = {"W": np.outer(dz, x), "U": np.outer(dz, h_prev), "b": dz.copy()}
    else:
        grads = {"W": dz.T @ x, "U": dz.T @ h_prev, "b": dz.sum(axis=0)}
    return dz @ params["W"], dz @ params["U"], dc * f, grads


def lstm_forward(seq, params):
    """Run a unidirectional LSTM from zero state over ``seq`` of shape ``[B, T, d]``.

    Returns ``(hs, cache)`` with ``hs`` of shape ``[B, T, u]``.
    """
    B, T, d = seq.shape
    u = _check(params, d)
    U_T = params["U"].T
    zx = (seq.reshape(B * T, d) @ params["W"].T).reshape(B, T, 4 * u) + params["b"]
    h = np.zeros((B, u))
    c = np.zeros((B, u))
    hs = np.empty((B, T, u))
    zs = np.empty((B, T, 4 * u))
    cs = np.empty((B, T + 1, u))
    cs[:, 0] = 0.0
    for t in range(T):
        z = zx[:, t] + h @ U_T
        f, i, o, g = _gates(z, u)
        c = f * c + i * g
        h = o * np.tanh(c)
        zs[:, t] = z
        cs[:, t + 1] = c
        hs[:, t] = h
    return hs, (seq, zs, cs, hs)


def lstm_backward(dhs, cache, params):
    """Backpropagation through time for :func:`lstm_forward`.

    Returns ``(dseq, grads)``.
    """
    seq, zs, cs, hs = cache
    B, T, d = seq.shape
    u = params["U"].shape[1]
    U = params["U"]
    dz_all = np.empty((B, T, 4 * u))
    dU = np.zeros_like(U)
    dh_next = np.zeros((B, u))
    dc_next = np.zeros((B, u))
    for t in range(T - 1, -1, -1):
        z = zs[:, t]
        f, i, o, g = _gates(z, u)
        c_prev = cs[:, t]
        tc = np.tanh(cs[:, t + 1])
        dh = dhs[:, t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz = np.concatenate([
            dc * c_prev * hard_sigmoid_grad(z[:, :u]),
            dc * g * hard_sigmoid_grad(z[:, u:2 * u]),
            dh * tc * hard_sigmoid_grad(z[:, 2 * u:3 * u]),
            dc * i * (1.0 - g * g),
        ], axis=1)
        dz_all[:, t] = dz
        if t > 0:
            dU += dz.T @ hs[:, t - 1]
        dh_next = dz @ U
        dc_next = dc * f
    dz2 = dz_all.reshape(B * T, 4 * u)
    grads = {"W": dz2.T @ seq.reshape(B * T, d), "U": dU, "b": dz2.sum(axis=0)}
    dseq = (dz2 @ params["W"]).reshape(B, T, d)
    return dseq, grads


def _as_batched_seq(sequence):
    seq = np.asarray(sequence, dtype=np.float64)
    if seq.ndim == 2:
        return seq[None], True
    if seq.ndim == 3:
        return seq, False
    raise DimensionError(f"sequence must be [T, d] or [B, T, d], got {seq.shape}")


def bilstm_forward(sequence, fwd_params, bwd_params, return_cache=False):
    """Bidirectional LSTM.

    ``output[t] = concat(h_fwd[t], h_bwd[t])`` where the backward direction
    is the forward recurrence run on the reversed sequence and re-reversed.

    Parameters
    ----------
    sequence : array, shape (T, d) or (B, T, d)

    Returns
    -------
    array of shape (T, 2u) or (B, T, 2u); with ``return_cache`` also the cache.
    """
    seq, squeeze = _as_batched_seq(sequence)
    if seq.shape[1] < 1:
        raise ParameterError("bilstm_forward needs a sequence of length >= 1")
    hf, cache_f = lstm_forward(seq, fwd_params)
    hb_rev, cache_b = lstm_forward(np.ascontiguousarray(seq[:, ::-1]), bwd_params)
    out = np.concatenate([hf, hb_rev[:, ::-1]], axis=-1)
    if squeeze:
        out = out[0]
    if return_cache:
        return out, (cache_f, cache_b, squeeze)
    return out


def bilstm_backward(dout, cache, fwd_params, bwd_params):
    """Return ``(dseq, grads_fwd, grads_bwd)``."""
    cache_f, cache_b, squeeze = cache
    dout = np.asarray(dout, dtype=np.float64)
    if squeeze:
        dout = dout[None]

    u = fwd_params["U"].shape[1]
    dseq_f, gf = lstm_backward(dout[..., :u], cache_f, fwd_params)
    dseq_b, gb = lstm_backward(np.ascontiguousarray(dout[:, ::-1, u:]), cache_b, bwd_params)
    dseq = dseq_f + dseq_b[:, ::-1]
    return (dseq[0] if squeeze else dseq), gf, gb
