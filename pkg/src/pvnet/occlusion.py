"""Occlusion sensitivity maps and the plant-capacity density map.

A 2x2 patch of one input channel is set to a fixed value in all 8 frames of
a window, and the absolute change of the prediction is recorded.  With
stride 1 every cell is covered by up to four patches; a cell's sensitivity
is the mean over the patches that cover it.

The default fill is 0 in normalized units, i.e. the training mean of the
channel.
"""
import os
from dataclasses import dataclass

import numpy as np
from scipy.stats import spearmanr

from . import seeding
from .errors import ParameterError
from .features import WINDOW
from .model import predict_frames
from .series import GridSpec, RasterSeries

PATCH = 2
DENSITY_CELL_DEG = 0.25


@dataclass
class SensitivityMap:
    channel: str
    grid: GridSpec
    values: np.ndarray  # [n_rows, n_cols], MW

    def to_raster(self, t0, dt):
        return RasterSeries(grid=self.grid, channels=(f"SENS_{self.channel}",), t0=t0, dt=dt,
                            frames=self.values[None, None])


@dataclass
class DensityMap:
    grid: GridSpec
    values: np.ndarray  # [n_rows, n_cols], MW

    @property
    def total(self):
        return float(self.values.sum())


def occlude_patch(inputs, channel, row, col, fill, patch=PATCH):
    """Copy of ``inputs [T, C, H, W]`` with a ``patch x patch`` block of one channel set to ``fill``.

    The block starts at ``(row, col)`` and is replaced in every frame.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    _, c, h, w = inputs.shape
    if not 0 <= channel < c:
        raise ParameterError(f"channel {channel} out of range for {c} channels")
    if not (0 <= row and row + patch <= h and 0 <= col and col + patch <= w):
        raise ParameterError(f"{patch}x{patch} patch at ({row}, {col}) does not fit a {h}x{w} grid")
    out = inputs.copy()
    out[:, channel, row:row + patch, col:col + patch] = fill
    return out


def sample_windows(dataset, n_samples, seed, run_length=WINDOW):
    """Seeded choice of ``n_samples`` window positions in runs of consecutive windows.

    Consecutive windows share frames, so runs keep the number of distinct
    frames to encode per occlusion small.  Returns sorted positions.
    """
    n = len(dataset)
    if n_samples < 1:
        raise ParameterError("need at least one sample window")
    n_samples = min(n_samples, n)
    n_blocks = n // run_length
    if n_blocks == 0 or n_samples >= n_blocks * run_length:
        return np.arange(n_samples)
    rng = seeding.stream(seed, "occlusion")
    n_runs = -(-n_samples // run_length)
    blocks = np.sort(rng.choice(n_blocks, size=n_runs, replace=False))
    pos = (blocks[:, None] * run_length + np.arange(run_length)[None, :]).ravel()
    return pos[:n_samples]


def _occlusion_setup(dataset, positions):
    index = dataset.frame_index[np.asarray(positions)]
    uniq, inv = np.unique(index, return_inverse=True)
    return dataset.frames[uniq].copy(), inv.reshape(index.shape)


def sensitivity_map(params, mcfg, dataset, channel, positions=None, fill=0.0, patch=PATCH):
    """Mean absolute prediction change (MW) when each 2x2 patch of ``channel`` is occluded.

    Parameters
    ----------
    dataset : Dataset
        Normalized windows (typically the validation split).
    channel : int or str
    positions : array of int, optional
        Window positions to average over (default: all).
    fill : float
        Value written into the patch, in normalized units.
    """
    if dataset.stats is None:
        raise ParameterError("sensitivity_map needs a normalized dataset")
    if isinstance(channel, str):
        channel = dataset.channels.index(channel)
    positions = np.arange(len(dataset)) if positions is None else np.asarray(positions)
    if positions.size == 0:
        raise ParameterError("need at least one window")
    frames, index = _occlusion_setup(dataset, positions)
    base = predict_frames(frames, index, params, mcfg)
    h, w = frames.shape[2:]
    acc = np.zeros((h, w))
    cover = np.zeros((h, w))
    for r in range(h - patch + 1):
        for c in range(w - patch + 1):
            saved = frames[:, channel, r:r + patch, c:c + patch].copy()
            frames[:, channel, r:r + patch, c:c + patch] = fill
            pred = predict_frames(frames, index, params, mcfg)
            frames[:, channel, r:r + patch, c:c + patch] = saved
            acc[r:r + patch, c:c + patch] += np.mean(np.abs(pred - base))
            cover[r:r + patch, c:c + patch] += 1.0
    values = acc / cover * dataset.stats.scale
    return SensitivityMap(channel=dataset.channels[channel], grid=dataset.grid, values=values)


def density_map(fleet, cell_deg=DENSITY_CELL_DEG):
    """Installed capacity per ``cell_deg`` cell over the fleet grid's extent.

    A plant on a cell boundary counts toward the north-west cell.
    """
    grid = fleet.grid.refined(cell_deg)
    rows, cols = grid.cell_index(fleet.lats, fleet.lons)
    values = np.zeros(grid.shape)
    np.add.at(values, (rows, cols), fleet.capacities)
    return DensityMap(grid=grid, values=values)


def block_sum(values, factor):
    """Sum ``factor x factor`` blocks (coarsen a density map to the model grid)."""
    h, w = values.shape
    if h % factor or w % factor:
        raise ParameterError(f"{h}x{w} map is not divisible into {factor}x{factor} blocks")
    return values.reshape(h // factor, factor, w // factor, factor).sum(axis=(1, 3))


def spatial_agreement(sens, density):
    """Spearman rank correlation between a sensitivity map and the coarsened density map."""
    factor = density.values.shape[0] // sens.values.shape[0]
    coarse = block_sum(density.values, factor)
    if coarse.shape != sens.values.shape:
        raise ParameterError(f"density {coarse.shape} and sensitivity {sens.values.shape} grids differ")
    if np.ptp(sens.values) == 0 or np.ptp(coarse) == 0:
        return float("nan")  # rank correlation is undefined for a constant map
    return float(spearmanr(sens.values.ravel(), coarse.ravel())[0])


def channel_ranking(maps, order=None):
    """Channel names by total sensitivity, descending; ties keep ``order``."""
    order = list(order) if order is not None else [m.channel for m in maps]
    totals = {m.channel: float(m.values.sum()) for m in maps}
    return sorted(order, key=lambda name: (-totals[name], order.index(name)))


def pgm_bytes(values):
    """8-bit binary PGM; darkest pixel = highest value, white = zero."""
    values = np.asarray(values, dtype=np.float64)
    top = values.max() if values.size else 0.0
    scaled = values / top if top > 0 else np.zeros_like(values)
    pixels = np.round(255.0 * (1.0 - np.clip(scaled, 0.0, 1.0))).astype(np.uint8)
    h, w = values.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def write_pgm(path, values):
    from .storage import atomic_write

    atomic_write(os.fspath(path), pgm_bytes(values))
