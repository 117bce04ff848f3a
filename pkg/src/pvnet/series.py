"""Data containers shared by the generator, feature pipeline and file formats."""
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, OutOfRangeError, ParameterError

CHANNELS_NWP = ("DSWRF", "EACC", "TMP")


def to_datetime64(t):
    """Parse an ISO-8601 UTC string (trailing ``Z`` allowed) or pass a datetime through."""
    if isinstance(t, str):
        t = t.strip()
        if t.endswith("Z"):
            t = t[:-1]
        elif t.endswith("+00:00"):
            t = t[:-6]
    return np.datetime64(t, "s")


def iso(t):
    return str(np.datetime64(t, "s")) + "Z"


@dataclass(frozen=True)
class GridSpec:
    """Regular lat/lon grid; row 0 is the northernmost row, column 0 the westernmost."""

    lat0: float = 54.5
    lon0: float = 5.5
    dlat: float = 0.5
    dlon: float = 0.5
    n_rows: int = 16
    n_cols: int = 16

    def __post_init__(self):
        if not (self.dlat > 0 and self.dlon > 0):
            raise ParameterError("dlat and dlon must be > 0")
        for name in ("n_rows", "n_cols"):
            v = getattr(self, name)
            if v < 4 or v % 2:
                raise ParameterError(f"{name} must be an even integer >= 4, got {v}")

    @classmethod
    def unchecked(cls, lat0, lon0, dlat, dlon, n_rows, n_cols):
        """Build a grid without the size rule (small rasters read back from disk)."""
        obj = object.__new__(cls)
        for name, v in zip(("lat0", "lon0", "dlat", "dlon", "n_rows", "n_cols"),
                           (lat0, lon0, dlat, dlon, int(n_rows), int(n_cols))):
            object.__setattr__(obj, name, v)
        return obj

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def lats(self):
        return self.lat0 - self.dlat * np.arange(self.n_rows)

    @property
    def lons(self):
        return self.lon0 + self.dlon * np.arange(self.n_cols)

    @property
    def north(self):
        return self.lat0 + 0.5 * self.dlat

    @property
    def south(self):
        return self.lat0 - (self.n_rows - 0.5) * self.dlat

    @property
    def west(self):
        return self.lon0 - 0.5 * self.dlon

    @property
    def east(self):
        return self.lon0 + (self.n_cols - 0.5) * self.dlon

    def contains(self, lat, lon):
        lat = np.asarray(lat)
        lon = np.asarray(lon)
        return (lat <= self.north) & (lat >= self.south) & (lon >= self.west) & (lon <= self.east)

    def cell_index(self, lat, lon):
        """Row/column of the cell holding each point.

        A point on a cell boundary belongs to the north-west neighbour.
        """
        lat = np.asarray(lat, dtype=np.float64)
        lon = np.asarray(lon, dtype=np.float64)
        rows = np.ceil((self.north - lat) / self.dlat).astype(np.int64) - 1
        cols = np.ceil((lon - self.west) / self.dlon).astype(np.int64) - 1
        return np.clip(rows, 0, self.n_rows - 1), np.clip(cols, 0, self.n_cols - 1)

    def refined(self, cell_deg):
        """Same extent at a finer resolution (used for the 0.25 degree density map)."""
        n_rows = int(round(self.n_rows * self.dlat / cell_deg))
        n_cols = int(round(self.n_cols * self.dlon / cell_deg))
        return GridSpec(
            lat0=self.north - 0.5 * cell_deg,
            lon0=self.west + 0.5 * cell_deg,
            dlat=cell_deg,
            dlon=cell_deg,
            n_rows=n_rows,
            n_cols=n_cols,
        )


class _TimeAxis:
    t0: np.datetime64
    dt: int

    def __len__(self):
        raise NotImplementedError

    @property
    def times(self):
        return self.t0 + np.arange(len(self), dtype=np.int64) * np.timedelta64(int(self.dt), "s")

    def index_of(self, t):
        """Integer index of instant ``t``; raises :class:`OutOfRangeError` if absent."""
        offset = (to_datetime64(t) - self.t0).astype(np.int64)
        k, rem = divmod(int(offset), int(self.dt))
        if rem or not 0 <= k < len(self):
            raise OutOfRangeError(f"instant {iso(t)} is not on this series (t0={iso(self.t0)}, n={len(self)})")
        return k


@dataclass
class RasterSeries(_TimeAxis):
    """Time-indexed multi-channel raster, frames shaped ``[T, C, n_rows, n_cols]``."""

    grid: GridSpec
    channels: tuple
    t0: np.datetime64
    dt: int
    frames: np.ndarray

    def __post_init__(self):
        self.t0 = to_datetime64(self.t0)
        self.channels = tuple(self.channels)
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 4:
            raise DimensionError(f"frames must be 4-D, got shape {self.frames.shape}")
        if self.frames.shape[1] != len(self.channels):
            raise DimensionError(f"{len(self.channels)} channel names for {self.frames.shape[1]} channels")
        if self.frames.shape[2:] != self.grid.shape:
            raise DimensionError(f"frame spatial shape {self.frames.shape[2:]} != grid {self.grid.shape}")

    def __len__(self):
        return self.frames.shape[0]

    def channel(self, name):
        return self.frames[:, self.channels.index(name)]


@dataclass
class PowerSeries(_TimeAxis):
    t0: np.datetime64
    dt: int
    values: np.ndarray

    def __post_init__(self):
        self.t0 = to_datetime64(self.t0)
        self.values = np.asarray(self.values, dtype=np.float64)

    def __len__(self):
        return self.values.shape[0]


@dataclass
class Fleet:
    lats: np.ndarray
    lons: np.ndarray
    capacities: np.ndarray
    grid: GridSpec = field(default_factory=GridSpec)

    def __post_init__(self):
        self.lats = np.asarray(self.lats, dtype=np.float64)
        self.lons = np.asarray(self.lons, dtype=np.float64)
        self.capacities = np.asarray(self.capacities, dtype=np.float64)
        if not (self.lats.shape == self.lons.shape == self.capacities.shape) or self.lats.ndim != 1:
            raise DimensionError("lats, lons and capacities must be 1-D arrays of equal length")
        if np.any(self.capacities <= 0):
            raise ParameterError("plant capacities must be > 0")
        if not np.all(self.grid.contains(self.lats, self.lons)):
            raise ParameterError("every plant must lie inside the grid bounds")

    def __len__(self):
        return self.lats.size

    @property
    def plants(self):
        return list(zip(self.lats.tolist(), self.lons.tolist(), self.capacities.tolist()))

    @property
    def total_capacity(self):
        return float(np.sum(self.capacities))
