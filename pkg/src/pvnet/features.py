"""Model inputs: channel stacking, sliding windows, normalization and split.

A window for target index ``k`` covers raster instants ``k-7 .. k``. Every
frame carries five channels ``(DSWRF, EACC, TMP, PSS, CSM)``:

* the three NWP channels from the raster,
* ``PSS``: the aggregate power 48 h before that frame's own instant,
  broadcast over the grid,
* ``CSM``: clear-sky irradiance per cell at that instant.

Because a frame depends on its instant only, a :class:`Dataset` stores one
frame per raster instant and describes windows by their target index.
Windows are materialized on demand.
"""
from dataclasses import dataclass, replace

import numpy as np

from . import pvphysics
from .errors import DimensionError, OutOfRangeError, ParameterError
from .series import CHANNELS_NWP, PowerSeries, iso, to_datetime64

WINDOW = 8
PERSISTENCE_LAG = 48 * 3600  # seconds
CHANNELS = CHANNELS_NWP + ("PSS", "CSM")
STD_FLOOR = 1e-6


def downsample_power(series, target_dt):
    """Keep the instantaneous sample at every ``target_dt`` (decimation)."""
    target_dt = int(target_dt)
    if target_dt <= 0 or target_dt % int(series.dt):
        raise ParameterError(f"target_dt={target_dt} s is not a multiple of the source step {series.dt} s")
    step = target_dt // int(series.dt)
    return PowerSeries(t0=series.t0, dt=target_dt, values=series.values[::step].copy())


def _lag_steps(dt):
    if PERSISTENCE_LAG % int(dt):
        raise ParameterError(f"the 48 h persistence lag is not a whole number of {dt} s steps")
    return PERSISTENCE_LAG // int(dt)


def persistence_channel(power, t, shape):
    """Plane of shape ``shape`` filled with ``power(t - 48 h)``."""
    lag_t = to_datetime64(t) - np.timedelta64(PERSISTENCE_LAG, "s")
    if lag_t < power.t0:
        raise OutOfRangeError(f"persistence lag instant {iso(lag_t)} precedes the series start {iso(power.t0)}")
    return np.full(shape, power.values[power.index_of(lag_t)])


def csm_channel(grid, t):
    """Clear-sky GHI plane (W/m^2) for instant ``t``."""
    cz = pvphysics.solar_cos_zenith(to_datetime64(t), grid.lats[:, None], grid.lons[None, :])
    return np.asarray(pvphysics.clearsky_ghi(cz), dtype=np.float64)


@dataclass
class FeatureWindow:
    inputs: np.ndarray  # [8, 5, H, W]
    target: float
    target_time: np.datetime64
    window_times: np.ndarray  # 8 instants, ending at target_time


def _check_aligned(raster, power):
    if raster.t0 != power.t0 or int(raster.dt) != int(power.dt) or len(raster) != len(power):
        raise ParameterError(
            f"raster ({iso(raster.t0)}, {raster.dt} s, n={len(raster)}) and power "
            f"({iso(power.t0)}, {power.dt} s, n={len(power)}) are not aligned")


def frame_store(raster, power):
    """Unnormalized frames ``[N, 5, H, W]``, one per raster instant.

    The persistence plane of instant ``k`` is ``power[k - lag]``; instants
    with ``k < lag`` use the first sample (only reachable from the earliest
    windows' older frames, and still at least 48 h in the past).
    """
    _check_aligned(raster, power)
    n = len(raster)
    lag = _lag_steps(raster.dt)
    src = np.maximum(np.arange(n) - lag, 0)
    times = raster.times
    grid = raster.grid
    cz = pvphysics.solar_cos_zenith(times[:, None, None], grid.lats[None, :, None], grid.lons[None, None, :])
    frames = np.empty((n, len(CHANNELS)) + grid.shape)
    for c, name in enumerate(CHANNELS_NWP):
        frames[:, c] = raster.channel(name)
    frames[:, 3] = power.values[src][:, None, None]
    frames[:, 4] = pvphysics.clearsky_ghi(cz)
    return frames


def first_target_index(dt):
    return max(WINDOW - 1, _lag_steps(dt))


def assemble_window(raster, power, target_time):
    """Materialize the window whose last instant is ``target_time``."""
    _check_aligned(raster, power)
    k = raster.index_of(target_time)
    lag = _lag_steps(raster.dt)
    if k < first_target_index(raster.dt):
        raise OutOfRangeError(
            f"target {iso(target_time)} needs {WINDOW - 1} earlier frames and a value {lag} steps back; "
            f"the earliest valid target index is {first_target_index(raster.dt)}")
    idx = np.arange(k - WINDOW + 1, k + 1)
    times = raster.times[idx]
    inputs = np.empty((WINDOW, len(CHANNELS)) + raster.grid.shape)
    inputs[:, :3] = raster.frames[idx]
    inputs[:, 3] = power.values[np.maximum(idx - lag, 0)][:, None, None]
    for j, t in enumerate(times):
        inputs[j, 4] = csm_channel(raster.grid, t)
    return FeatureWindow(inputs=inputs, target=float(power.values[k]), target_time=times[-1], window_times=times)


@dataclass(frozen=True)
class Normalization:
    """Per-channel z-score statistics plus the target scale (MW)."""

    mean: np.ndarray
    std: np.ndarray
    scale: float

    def apply(self, frames):
        return (frames - self.mean[:, None, None]) / self.std[:, None, None]

    def invert(self, frames):
        return frames * self.std[:, None, None] + self.mean[:, None, None]


@dataclass
class Dataset:
    """Windows over a shared frame store.

    Attributes
    ----------
    frames : ndarray ``[N, 5, H, W]``
        One frame per raster instant (normalized once ``stats`` is set).
    power : ndarray ``[N]``
        Aggregate power in MW, always unnormalized.
    target_index : ndarray of int
        Last-frame index of every window, strictly increasing.
    """

    frames: np.ndarray
    power: np.ndarray
    target_index: np.ndarray
    t0: np.datetime64
    dt: int
    grid: object
    channels: tuple = CHANNELS
    stats: Normalization = None

    def __len__(self):
        return self.target_index.size

    @property
    def times(self):
        return self.t0 + np.arange(self.frames.shape[0], dtype=np.int64) * np.timedelta64(int(self.dt), "s")

    @property
    def target_times(self):
        return self.times[self.target_index]

    @property
    def frame_index(self):
        """``[n_windows, 8]`` frame indices of every window."""
        return self.target_index[:, None] + np.arange(-WINDOW + 1, 1)[None, :]

    @property
    def targets(self):
        """Targets in model units (fraction of capacity once normalized, else MW)."""
        y = self.power[self.target_index]
        return y / self.stats.scale if self.stats is not None else y.copy()

    def window(self, i):
        idx = self.frame_index[i]
        return FeatureWindow(inputs=self.frames[idx].copy(), target=float(self.targets[i]),
                             target_time=self.times[idx[-1]], window_times=self.times[idx])

    def subset(self, positions):
        return replace(self, target_index=self.target_index[np.asarray(positions)])


def build_dataset(raster, power):
    """One window per valid target index ``16 .. N-1`` (3 h steps)."""
    _check_aligned(raster, power)
    start = first_target_index(raster.dt)
    n = len(raster)
    if n <= start:
        raise ParameterError(f"need at least {start + 1} time steps to form one window, got {n}")
    return Dataset(frames=frame_store(raster, power), power=power.values.copy(),
                   target_index=np.arange(start, n), t0=raster.t0, dt=int(raster.dt), grid=raster.grid)


def split_train_val(dataset, fraction=0.75):
    """Chronological split: the first ``floor(fraction * n)`` windows train."""
    n = len(dataset)
    if n == 0:
        raise ParameterError("cannot split an empty dataset")
    n_train = int(np.floor(fraction * n))
    if n_train < 1 or n_train >= n:
        raise ParameterError(f"fraction {fraction} of {n} windows leaves an empty side")
    return dataset.subset(np.arange(n_train)), dataset.subset(np.arange(n_train, n))


def frame_weights(dataset):
    """How many windows of ``dataset`` contain each frame."""
    return np.bincount(dataset.frame_index.ravel(), minlength=dataset.frames.shape[0]).astype(np.float64)


def fit_normalization(train, capacity):
    """Z-score statistics over all frames of the training windows.

    Frames are weighted by how many training windows use them, which makes
    the statistics exactly those of the materialized training inputs.
    """
    if len(train) == 0:
        raise ParameterError("training split is empty")
    if not capacity > 0:
        raise ParameterError(f"capacity must be > 0, got {capacity}")
    w = frame_weights(train)
    used = w > 0
    f = train.frames[used]
    wt = w[used][:, None]
    total = wt.sum() * f.shape[2] * f.shape[3]
    # Shift by one sample per channel so a constant channel gets an exact mean.
    ref = f[0, :, 0, 0].copy()
    sums = (f - ref[None, :, None, None]).sum(axis=(2, 3))
    mean = ref + (wt * sums).sum(axis=0) / total
    centered = f - mean[None, :, None, None]
    var = (wt * (centered * centered).sum(axis=(2, 3))).sum(axis=0) / total
    std = np.maximum(np.sqrt(var), STD_FLOOR)
    return Normalization(mean=mean, std=std, scale=float(capacity))


def normalize(dataset, stats):
    """Return a copy of ``dataset`` with normalized frames."""
    if dataset.stats is not None:
        raise ParameterError("dataset is already normalized")
    if stats.mean.shape != (dataset.frames.shape[1],):
        raise DimensionError(f"statistics cover {stats.mean.size} channels, frames have {dataset.frames.shape[1]}")
    return replace(dataset, frames=stats.apply(dataset.frames), stats=stats)


def denormalize(dataset):
    if dataset.stats is None:
        return dataset
    return replace(dataset, frames=dataset.stats.invert(dataset.frames), stats=None)


def prepare(raster, power, capacity, fraction=0.75):
    """Build, split and normalize in one go: returns ``(train, val, stats)``.

    Train and validation share one normalized frame store.
    """
    ds = build_dataset(raster, power)
    train, _ = split_train_val(ds, fraction)
    stats = fit_normalization(train, capacity)
    ds = normalize(ds, stats)
    train, val = split_train_val(ds, fraction)
    return train, val, stats
