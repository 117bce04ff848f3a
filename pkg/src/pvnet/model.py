"""PVNet: shared CNN frame encoder, bidirectional LSTM and a scalar head.

Data flow for one window of 8 frames::

    frame [C,H,W] --conv3x3 -> PReLU -> dropout, conv3x3 -> PReLU -> maxpool -> dropout, ...--> flatten
                  --FC--> dropout --> x_t [fc_dim]

A conv directly followed by a max-pool has its dropout applied to the pooled
map; dropping before the max would bias the pooled values against eval mode.
    x_1..x_8 --BiLSTM--> [h_fwd; h_bwd]_1..8 --concat--> head --> scalar

Internally frames are held channels-first (``[C, F, H, W]``) so every
convolution is one GEMM.

Training batches many windows at once. Because a frame is a function of its
instant alone, consecutive windows share 7 of their 8 frames; each batch
encodes only its distinct frames and scatters the sequence gradients back
onto them. Batches are built from runs of ``batch_run_length`` consecutive
windows, shuffled per epoch with a seeded stream.
"""
from dataclasses import dataclass, fields

import numpy as np

from . import seeding
from .errors import DimensionError, NumericalError, ParameterError
from .features import CHANNELS, WINDOW
from .neuralcore import kernels as K
from .neuralcore.layers import conv3x3_backward_cf, conv3x3_forward_cf, dropout_mask, mse_loss
from .neuralcore.lstm import bilstm_backward, bilstm_forward
from .neuralcore.optim import AdamState, adam_update
from .series import PowerSeries

FORGET_BIAS = 1.0
PRELU_INIT = 0.25
EVAL_CHUNK = 128


@dataclass(frozen=True)
class PVNetConfig:
    conv_stack: tuple = (64, 64, "pool", 128, 128, "pool", 256, 256, "pool")
    fc_dim: int = 512
    lstm_units: int = 128
    dropout_conv: float = 0.20
    dropout_fc: float = 0.30
    lr: float = 0.0015
    warmup_steps: int = 300
    lr_decay: str = "cosine"
    batch_size: int = 32
    batch_run_length: int = 32
    epochs: int = 60
    seed: int = 0

    def __post_init__(self):
        if self.fc_dim < 1 or self.lstm_units < 1:
            raise ParameterError("fc_dim and lstm_units must be >= 1")
        for name in ("dropout_conv", "dropout_fc"):
            if not 0 <= getattr(self, name) < 1:
                raise ParameterError(f"{name} must be in [0, 1)")

    @classmethod
    def from_config(cls, cfg):
        return cls(**{f.name: getattr(cfg, f.name) for f in fields(cls)})

    @property
    def n_pools(self):
        return sum(1 for s in self.conv_stack if s == "pool")

    def plan(self, c_in):
        """Encoder layers as ``("conv", name, c_in, c_out)`` / ``("pool",)`` tuples."""
        out, k = [], 0
        for s in self.conv_stack:
            if s == "pool":
                out.append(("pool",))
            else:
                out.append(("conv", f"conv{k}", c_in, int(s)))
                c_in = int(s)
                k += 1
        return out

    def check_grid(self, shape):
        p = 2 ** self.n_pools
        if shape[0] % p or shape[1] % p:
            raise DimensionError(f"grid {shape[0]}x{shape[1]} is not divisible by 2^{self.n_pools}")


def _flat_dim(mcfg, grid_shape):
    mcfg.check_grid(grid_shape)
    p = 2 ** mcfg.n_pools
    last = [s for s in mcfg.conv_stack if s != "pool"][-1]
    return (grid_shape[0] // p) * (grid_shape[1] // p) * int(last)


def param_shapes(mcfg, grid_shape, n_channels=len(CHANNELS)):
    """Ordered ``{name: shape}``; a pure function of the config and grid."""
    shapes = {}
    for step in mcfg.plan(n_channels):
        if step[0] == "conv":
            _, name, c_in, c_out = step
            shapes[f"{name}.kernel"] = (c_out, c_in, 3, 3)
            shapes[f"{name}.bias"] = (c_out,)
            shapes[f"{name}.slope"] = (c_out,)
    d, u = mcfg.fc_dim, mcfg.lstm_units
    shapes["fc.W"] = (d, _flat_dim(mcfg, grid_shape))
    shapes["fc.b"] = (d,)
    for direction in ("lstm_fwd", "lstm_bwd"):
        shapes[f"{direction}.W"] = (4 * u, d)
        shapes[f"{direction}.U"] = (4 * u, u)
        shapes[f"{direction}.b"] = (4 * u,)
    shapes["head.W"] = (1, WINDOW * 2 * u)
    shapes["head.b"] = (1,)
    return shapes


def init_params(mcfg, grid_shape, n_channels=len(CHANNELS), seed=None):
    """Fresh parameters, already rounded to float32 precision.

    Conv and FC weights are uniform with He fan-in scaling; LSTM and head
    weights uniform in ``+-1/sqrt(fan_in)``; PReLU slopes 0.25; forget-gate
    biases 1.0; all other biases 0.
    """
    seed = mcfg.seed if seed is None else seed
    params = {}
    for k, (name, shape) in enumerate(param_shapes(mcfg, grid_shape, n_channels).items()):
        rng = seeding.stream(seed, "init", k)
        kind = name.rsplit(".", 1)[1]
        if name.endswith(".slope"):
            p = np.full(shape, PRELU_INIT)
        elif kind == "kernel" or name == "fc.W":
            fan_in = int(np.prod(shape[1:]))
            lim = np.sqrt(6.0 / fan_in)
            p = rng.uniform(-lim, lim, shape)
        elif kind in ("W", "U"):
            lim = 1.0 / np.sqrt(shape[1])
            p = rng.uniform(-lim, lim, shape)
        else:
            p = np.zeros(shape)
            if name.startswith("lstm") and kind == "b":
                p[: shape[0] // 4] = FORGET_BIAS
        params[name] = p.astype(np.float32).astype(np.float64)
    return params


def round_f32(params):
    return {k: v.astype(np.float32).astype(np.float64) for k, v in params.items()}


def _lstm(params, direction):
    return {k: params[f"{direction}.{k}"] for k in ("W", "U", "b")}


# --------------------------------------------------------------------------
# Encoder (channels-first batches of frames)


def encode_frames(x, params, mcfg, mode="eval", rng=None):
    """Encode channels-first frames ``x [C, F, H, W]`` into features ``[F, fc_dim]``.

    Returns ``(features, cache)``.  In train mode ``rng`` supplies the
    per-layer conv dropout masks, drawn in layer order.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    train = mode == "train" and mcfg.dropout_conv > 0
    caches = []
    plan = mcfg.plan(x.shape[0])
    for i, step in enumerate(plan):
        c, f, h, w = x.shape
        if step[0] == "pool":
            out, arg = K.maxpool2x2_forward(x.reshape(c * f, h, w))
            x = out.reshape(c, f, h // 2, w // 2)
            # The dropout of a conv directly before the pool acts on the pooled map.
            mask = None
            if train and i > 0 and plan[i - 1][0] == "conv":
                mask = dropout_mask(x.shape, mcfg.dropout_conv, rng)
                x *= mask
            caches.append(("pool", arg, mask))
            continue
        name = step[1]
        kern = params[f"{name}.kernel"]
        wk = kern.reshape(kern.shape[0], -1)
        a, cols = conv3x3_forward_cf(x, wk, params[f"{name}.bias"])
        x = K.prelu_forward(a.reshape(a.shape[0], -1), params[f"{name}.slope"]).reshape(a.shape)
        pooled = i + 1 < len(plan) and plan[i + 1][0] == "pool"
        mask = dropout_mask(x.shape, mcfg.dropout_conv, rng) if train and not pooled else None
        if mask is not None:
            x *= mask
        caches.append(("conv", name, cols, a, mask, wk))
    shape = x.shape
    flat = np.ascontiguousarray(x.transpose(1, 0, 2, 3)).reshape(shape[1], -1)
    feat = flat @ params["fc.W"].T + params["fc.b"]
    return feat, (caches, flat, shape)


def encode_backward(dfeat, cache, params, need_dx=False):
    """Gradients of the encoder parameters (and optionally of its input)."""
    caches, flat, shape = cache
    grads = {"fc.W": dfeat.T @ flat, "fc.b": dfeat.sum(axis=0)}
    c, f, h, w = shape
    dx = np.ascontiguousarray((dfeat @ params["fc.W"]).reshape(f, c, h, w).transpose(1, 0, 2, 3))
    first_conv = next(i for i, cc in enumerate(caches) if cc[0] == "conv")
    for i in range(len(caches) - 1, -1, -1):
        cc = caches[i]
        if cc[0] == "pool":
            if cc[2] is not None:
                dx = dx * cc[2]
            c, f, h, w = dx.shape
            dx = K.maxpool2x2_backward(dx.reshape(c * f, h, w), cc[1]).reshape(c, f, 2 * h, 2 * w)
            continue
        _, name, cols, a, mask, wk = cc
        if mask is not None:
            dx = dx * mask
        da, grads[f"{name}.slope"] = K.prelu_backward(dx.reshape(a.shape[0], -1), a.reshape(a.shape[0], -1),
                                                     params[f"{name}.slope"])
        dx, dwk, grads[f"{name}.bias"] = conv3x3_backward_cf(
            da.reshape(a.shape), cols, wk, need_dx=need_dx or i != first_conv)
        grads[f"{name}.kernel"] = dwk.reshape(params[f"{name}.kernel"].shape)
    return grads, dx


# --------------------------------------------------------------------------
# Sequence part


def sequence_forward(seq, params, mcfg, mode="eval", rng=None):
    """``seq [B, T, fc_dim]`` -> predictions ``[B]`` plus cache."""
    mask = None
    if mode == "train" and mcfg.dropout_fc > 0:
        mask = dropout_mask(seq.shape, mcfg.dropout_fc, rng)
        seq = seq * mask
    hs, bcache = bilstm_forward(seq, _lstm(params, "lstm_fwd"), _lstm(params, "lstm_bwd"), return_cache=True)
    hflat = hs.reshape(hs.shape[0], -1)
    pred = hflat @ params["head.W"][0] + params["head.b"][0]
    return pred, (mask, bcache, hflat, hs.shape)


def sequence_backward(dpred, cache, params):
    """Return ``(grads, dseq)``."""
    mask, bcache, hflat, hshape = cache
    grads = {"head.W": (dpred @ hflat)[None, :], "head.b": np.array([dpred.sum()])}
    dhs = np.outer(dpred, params["head.W"][0]).reshape(hshape)
    dseq, gf, gb = bilstm_backward(dhs, bcache, _lstm(params, "lstm_fwd"), _lstm(params, "lstm_bwd"))
    for k in ("W", "U", "b"):
        grads[f"lstm_fwd.{k}"] = gf[k]
        grads[f"lstm_bwd.{k}"] = gb[k]
    if mask is not None:
        dseq = dseq * mask
    return grads, dseq


def forward_batch(frames, index, params, mcfg, mode="eval", rng=None):
    """Predict windows built from shared frames.

    Parameters
    ----------
    frames : array ``[C, F, H, W]``
        Distinct frames used by the batch, channels first.
    index : int array ``[B, T]``
        Row ``b`` lists the frames of window ``b`` in time order.

    Returns
    -------
    (pred [B], cache)
    """
    feat, ecache = encode_frames(frames, params, mcfg, mode, rng)
    pred, scache = sequence_forward(feat[index], params, mcfg, mode, rng)
    return pred, (ecache, scache, index, feat.shape)


def backward_batch(dpred, cache, params):
    ecache, scache, index, fshape = cache
    grads, dseq = sequence_backward(dpred, scache, params)
    dfeat = np.zeros(fshape)
    np.add.at(dfeat, index.ravel(), dseq.reshape(-1, fshape[1]))
    egrads, _ = encode_backward(dfeat, ecache, params)
    grads.update(egrads)
    return {k: grads[k] for k in params}


def loss_and_grads(frames, index, targets, params, mcfg, mode="eval", rng=None):
    pred, cache = forward_batch(frames, index, params, mcfg, mode, rng)
    loss, dpred = mse_loss(pred, targets)
    return loss, backward_batch(dpred, cache, params)


def _cf(frames):
    """``[N, C, H, W]`` -> channels-first ``[C, N, H, W]``."""
    return np.ascontiguousarray(np.asarray(frames, dtype=np.float64).transpose(1, 0, 2, 3))


def encode_frame(frame, params, mcfg, mode="eval", rng=None):
    """Feature vector ``[fc_dim]`` of one ``[C, H, W]`` frame."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 3:
        raise DimensionError(f"frame must be [C, H, W], got {frame.shape}")
    mcfg.check_grid(frame.shape[1:])
    return encode_frames(_cf(frame[None]), params, mcfg, mode, rng)[0][0]


def forward(inputs, params, mcfg, mode="eval", rng=None):
    """Scalar prediction (normalized units) for one window ``[T, C, H, W]``."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 4 or inputs.shape[0] != WINDOW:
        raise DimensionError(f"window inputs must be [{WINDOW}, C, H, W], got {inputs.shape}")
    mcfg.check_grid(inputs.shape[2:])
    pred, _ = forward_batch(_cf(inputs), np.arange(WINDOW)[None], params, mcfg, mode, rng)
    return float(pred[0])


# --------------------------------------------------------------------------
# Dataset-level evaluation and training


def predict_frames(frames, index, params, mcfg):
    """Eval-mode predictions (normalized units) for windows over a frame store.

    Parameters
    ----------
    frames : array ``[N, C, H, W]``
    index : int array ``[B, T]``
        Frame indices of every window; each distinct frame is encoded once.
    """
    uniq, inv = np.unique(index, return_inverse=True)
    inv = inv.reshape(index.shape)
    feats = np.empty((uniq.size, mcfg.fc_dim))
    for s in range(0, uniq.size, EVAL_CHUNK):
        chunk = uniq[s:s + EVAL_CHUNK]
        feats[s:s + chunk.size] = encode_frames(_cf(frames[chunk]), params, mcfg, "eval")[0]
    out = np.empty(index.shape[0])
    for s in range(0, index.shape[0], EVAL_CHUNK):
        out[s:s + EVAL_CHUNK] = sequence_forward(feats[inv[s:s + EVAL_CHUNK]], params, mcfg, "eval")[0]
    return out


def predict_normalized(dataset, params, mcfg, frames=None):
    """Eval-mode predictions (normalized units) for every window of ``dataset``.

    ``frames`` optionally replaces ``dataset.frames`` (same shape).
    """
    return predict_frames(dataset.frames if frames is None else frames, dataset.frame_index, params, mcfg)


def predict(dataset, params, mcfg):
    """Eval-mode predictions in MW, clamped at 0, as a :class:`PowerSeries`."""
    if dataset.stats is None:
        raise ParameterError("predict needs a normalized dataset")
    if not all(np.all(np.isfinite(p)) for p in params.values()):
        raise NumericalError("parameters contain non-finite values")
    y = np.maximum(predict_normalized(dataset, params, mcfg) * dataset.stats.scale, 0.0)
    times = dataset.target_times
    dt = int(dataset.dt)
    if len(times) > 1 and np.any(np.diff(times).astype(np.int64) != dt):
        raise ParameterError("predict expects windows with consecutive target times")
    return PowerSeries(t0=times[0], dt=dt, values=y)


def epoch_batches(n, mcfg, epoch):
    """Window positions of every batch of one epoch.

    Positions are cut into runs of ``batch_run_length`` consecutive windows
    (with a random phase), runs are shuffled, and the concatenation is cut
    into batches of ``batch_size``.
    """
    rng = seeding.stream(mcfg.seed, "batches", epoch)
    L = mcfg.batch_run_length
    phase = int(rng.integers(L)) if L > 1 else 0
    starts = np.unique(np.concatenate([[0], np.arange(phase, n, L)]))
    runs = np.split(np.arange(n), starts[1:])
    order = rng.permutation(len(runs))
    flat = np.concatenate([runs[i] for i in order])
    return [flat[s:s + mcfg.batch_size] for s in range(0, n, mcfg.batch_size)]


@dataclass
class TrainResult:
    params: dict
    history: list  # (epoch, train_mse, val_mse)
    best_epoch: int
    adam: AdamState = None

    def log_text(self):
        return format_loss_log(self.history)


def format_loss_log(history):
    return "".join(f"{e} {tr:.9e} {va:.9e}\n" for e, tr, va in history)


def scheduled_lr(mcfg, step, total_steps):
    """Learning rate of Adam step ``step`` (1-based) out of ``total_steps``.

    A linear ramp over ``warmup_steps``, then ``lr`` held constant
    (``lr_decay = "none"``) or cosine-decayed towards 0 at the last step.

    Adam's first updates move every weight by about ``lr`` regardless of the
    gradient size; on wide layers that is enough to saturate the LSTM gates
    before the moment estimates settle.  The ramp avoids this.
    """
    warm = mcfg.warmup_steps
    if warm > 0 and step < warm:
        return mcfg.lr * step / warm
    if mcfg.lr_decay == "none" or total_steps <= warm:
        return mcfg.lr
    frac = min(step - warm, total_steps - warm) / (total_steps - warm)
    return mcfg.lr * 0.5 * (1.0 + np.cos(np.pi * frac))


def train(train_ds, val_ds, mcfg, params=None, progress=None):
    """Adam/MSE training; returns the best-validation parameters.

    Parameters
    ----------
    train_ds, val_ds : Dataset
        Normalized datasets (they may share one frame store).
    progress : callable, optional
        Called as ``progress(epoch, train_mse, val_mse)`` after each epoch.

    Raises
    ------
    NumericalError
        The training loss became non-finite.
    """
    if len(train_ds) == 0:
        raise ParameterError("training split is empty")
    if train_ds.stats is None:
        raise ParameterError("train expects normalized datasets")
    grid_shape = train_ds.frames.shape[2:]
    mcfg.check_grid(grid_shape)
    params = init_params(mcfg, grid_shape, train_ds.frames.shape[1]) if params is None else \
        {k: v.copy() for k, v in params.items()}
    adam = AdamState.for_params(params, lr=mcfg.lr)
    frames_cf = _cf(train_ds.frames)
    fidx = train_ds.frame_index
    targets = train_ds.targets
    val_targets = val_ds.targets if val_ds is not None and len(val_ds) else None

    total_steps = mcfg.epochs * -(-len(train_ds) // mcfg.batch_size)
    history = []
    best = (np.inf, None, 0)
    for epoch in range(1, mcfg.epochs + 1):
        total, count = 0.0, 0
        for b, pos in enumerate(epoch_batches(len(train_ds), mcfg, epoch)):
            uniq, inv = np.unique(fidx[pos], return_inverse=True)
            rng = seeding.stream(mcfg.seed, "dropout", epoch, b)
            loss, grads = loss_and_grads(frames_cf[:, uniq], inv.reshape(len(pos), WINDOW),
                                         targets[pos], params, mcfg, "train", rng)
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite training loss at epoch {epoch}, batch {b}")
            adam.lr = scheduled_lr(mcfg, adam.step_count + 1, total_steps)
            adam_update(params, grads, adam)
            total += loss * len(pos)
            count += len(pos)
        train_mse = total / count
        if val_targets is not None:
            val_mse = float(np.mean((predict_normalized(val_ds, params, mcfg) - val_targets) ** 2))
        else:
            val_mse = train_mse
        history.append((epoch, train_mse, val_mse))
        if progress is not None:
            progress(epoch, train_mse, val_mse)
        if val_mse < best[0]:
            best = (val_mse, {k: v.copy() for k, v in params.items()}, epoch)
    best_params = round_f32(best[1] if best[1] is not None else params)
    return TrainResult(params=best_params, history=history, best_epoch=best[2], adam=adam)


# --------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(path, params, config, stats, grid):
    """Write parameters plus the normalization and grid needed to use them."""
    from . import storage

    extra = {
        "channels": ",".join(CHANNELS),
        "grid": f"{grid.lat0!r} {grid.lon0!r} {grid.dlat!r} {grid.dlon!r} {grid.n_rows} {grid.n_cols}",
        "mean": " ".join(repr(float(v)) for v in stats.mean),
        "std": " ".join(repr(float(v)) for v in stats.std),
        "scale": repr(float(stats.scale)),
    }
    storage.write_checkpoint(path, params, config, extra)


def load_checkpoint(path):
    """Return ``(params, config, stats, grid)``."""
    from . import storage
    from .errors import FormatError
    from .features import Normalization
    from .series import GridSpec

    params, config, extra = storage.read_checkpoint(path)
    try:
        stats = Normalization(mean=np.array([float(v) for v in extra["mean"].split()]),
                              std=np.array([float(v) for v in extra["std"].split()]),
                              scale=float(extra["scale"]))
        g = extra["grid"].split()
        grid = GridSpec(float(g[0]), float(g[1]), float(g[2]), float(g[3]), int(g[4]), int(g[5]))
    except (KeyError, ValueError, IndexError) as exc:
        raise FormatError(f"{path}: missing or bad checkpoint metadata ({exc})") from None
    expected = param_shapes(PVNetConfig.from_config(config), grid.shape, len(stats.mean))
    got = {k: v.shape for k, v in params.items()}
    if got != expected:
        raise FormatError(f"{path}: parameter entries do not match the echoed config")
    return params, config, stats, grid
