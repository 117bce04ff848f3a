"""Synthetic NWP rasters, PV fleet and the aggregate power they imply.

The generator is the ground truth for every end-to-end test: power is a
smooth, deterministic function of the DSWRF and TMP channels at the plant
locations, so a model that sees the rasters can in principle recover it.

All randomness is drawn per time step from counter-keyed streams
(:func:`pvnet.seeding.stream`), so a frame never depends on how many
frames were generated before it.
"""
import os

import numpy as np
from scipy.ndimage import uniform_filter

from . import pvphysics, seeding
from .errors import DimensionError, ParameterError
from .series import CHANNELS_NWP, Fleet, GridSpec, PowerSeries, RasterSeries, to_datetime64

CLOUD_AR = 0.85
CLOUD_GAIN = 2.0
TEMP_BASE = 283.0
TEMP_SEASONAL = 10.0
TEMP_DIURNAL = 5.0
TEMP_ANOMALY_STD = 2.0
TEMP_ANOMALY_CLIP = 5.0
TEMP_ANOMALY_AR = 0.9
TEMP_PEAK_HOUR = 14.0
TEMP_PEAK_DOY = 196
WIND_PROXY = 2.0  # m/s
CAPACITY_RANGE = (1.0, 50.0)  # MW
CAPACITY_QUANTUM = 2.0 ** -16  # MW; keeps every capacity sum exact

RASTER_FILE = "raster.pvrs"
POWER_FILE = "power.csv"
FLEET_FILE = "fleet.csv"

# Three passes of a 3-wide box filter give the 1-D kernel [1,3,6,7,6,3,1]/27;
# in 2-D the variance of filtered unit white noise is (sum k^2)^2.
_SMOOTH_STD = 141.0 / 729.0


def _smoothed_noise(rng, shape):
    """Unit-variance white noise smoothed by three 3x3 box passes."""
    e = rng.standard_normal(shape)
    for _ in range(3):
        e = uniform_filter(e, size=3, mode="reflect")
    return e / _SMOOTH_STD


def _ar1_field(grid, n_steps, seed, label, phi):
    """Stationary AR(1) latent field with unit marginal variance."""
    innov = np.sqrt(1.0 - phi * phi)
    out = np.empty((n_steps, grid.n_rows, grid.n_cols))
    z = _smoothed_noise(seeding.stream(seed, label, 0), grid.shape)
    out[0] = z
    for k in range(1, n_steps):
        z = phi * z + innov * _smoothed_noise(seeding.stream(seed, label, k), grid.shape)
        out[k] = z
    return out


def gen_cloud_field(grid, n_steps, seed):
    """Cloud-cover fraction in [0, 1], shape ``[n_steps, n_rows, n_cols]``.

    A latent AR(1) field (coefficient 0.85, spatially box-smoothed
    innovations) passed through a logistic squash.
    """
    if n_steps < 1:
        raise ParameterError(f"n_steps must be >= 1, got {n_steps}")
    z = _ar1_field(grid, n_steps, seed, "cloud", CLOUD_AR)
    return 1.0 / (1.0 + np.exp(-CLOUD_GAIN * z))


def _time_axis(t0, dt, n_steps):
    return to_datetime64(t0) + np.arange(n_steps, dtype=np.int64) * np.timedelta64(int(dt), "s")


def gen_temperature_field(grid, n_steps, seed, t0="2014-01-01T00:00:00Z", dt=10800):
    """Air temperature in kelvin, shape ``[n_steps, n_rows, n_cols]``.

    Baseline 283 K plus an annual cycle (10 K, warmest mid-July), a
    diurnal cycle (5 K, warmest at 14:00 local solar time) and a smoothed
    AR(1) anomaly with 2 K standard deviation, clipped at 5 K.
    """
    if n_steps < 1:
        raise ParameterError(f"n_steps must be >= 1, got {n_steps}")
    times = _time_axis(t0, dt, n_steps)
    days = times.astype("datetime64[D]")
    doy = (days - times.astype("datetime64[Y]").astype("datetime64[D]")).astype(np.int64) + 1
    hours = (times - days).astype(np.int64) / 3600.0
    seasonal = TEMP_SEASONAL * np.cos(2.0 * np.pi * (doy - TEMP_PEAK_DOY) / 365.0)
    solar_hour = hours[:, None] + grid.lons[None, :] / 15.0
    diurnal = TEMP_DIURNAL * np.cos(2.0 * np.pi * (solar_hour - TEMP_PEAK_HOUR) / 24.0)
    anomaly = TEMP_ANOMALY_STD * _ar1_field(grid, n_steps, seed, "temperature", TEMP_ANOMALY_AR)
    anomaly = np.clip(anomaly, -TEMP_ANOMALY_CLIP, TEMP_ANOMALY_CLIP)
    return TEMP_BASE + seasonal[:, None, None] + diurnal[:, None, :] + anomaly


def clearsky_field(grid, t0, dt, n_steps):
    """Clear-sky GHI per cell and step, ``[n_steps, n_rows, n_cols]``."""
    times = _time_axis(t0, dt, n_steps)
    cz = pvphysics.solar_cos_zenith(times[:, None, None], grid.lats[None, :, None], grid.lons[None, None, :])
    return np.asarray(pvphysics.clearsky_ghi(cz))


def irradiance_from_cloud(clearsky, cloud):
    """Cloud-attenuated irradiance ``clearsky * (1 - 0.75 * cloud**3.4)``."""
    clearsky = np.asarray(clearsky, dtype=np.float64)
    cloud = np.asarray(cloud, dtype=np.float64)
    if clearsky.shape != cloud.shape:
        raise DimensionError(f"clear-sky shape {clearsky.shape} != cloud shape {cloud.shape}")
    return clearsky * (1.0 - 0.75 * cloud ** 3.4)


_CORNERS = {"nw": (False, False), "ne": (False, True), "sw": (True, False), "se": (True, True)}


def gen_fleet(grid, n_plants, seed, concentration=1.0, corner="se"):
    """Random plant fleet tilted toward one grid corner.

    Each coordinate, as a fraction ``u`` of the grid extent measured from
    the far edge, has density ``(1 + c) u**c``; ``c = 0`` is uniform.
    Capacities are log-uniform in [1, 50] MW.

    Parameters
    ----------
    concentration : float
        Tilt exponent ``c >= 0``.
    corner : {"nw", "ne", "sw", "se"}
        Corner the density leans toward.
    """
    if n_plants < 1:
        raise ParameterError(f"n_plants must be >= 1, got {n_plants}")
    if concentration < 0:
        raise ParameterError(f"concentration must be >= 0, got {concentration}")
    if corner not in _CORNERS:
        raise ParameterError(f"corner must be one of {sorted(_CORNERS)}, got {corner!r}")
    rng = seeding.stream(seed, "fleet")
    raw = rng.random((n_plants, 2))
    u = raw ** (1.0 / (1.0 + concentration))
    south, east = _CORNERS[corner]
    v_lat = u[:, 0] if south else 1.0 - u[:, 0]
    v_lon = u[:, 1] if east else 1.0 - u[:, 1]
    lats = grid.north - v_lat * (grid.north - grid.south)
    lons = grid.west + v_lon * (grid.east - grid.west)
    lo, hi = np.log(CAPACITY_RANGE[0]), np.log(CAPACITY_RANGE[1])
    caps = np.exp(lo + (hi - lo) * rng.random(n_plants))
    caps = np.clip(np.round(caps / CAPACITY_QUANTUM) * CAPACITY_QUANTUM, *CAPACITY_RANGE)
    return Fleet(lats=lats, lons=lons, capacities=caps, grid=grid)


def aggregate_pv_power(fleet, weather):
    """Sum of plant outputs (MW) at every step of ``weather``.

    Each plant reads DSWRF and TMP from its own cell and assumes a 2 m/s
    wind for the module-temperature model.
    """
    rows, cols = weather.grid.cell_index(fleet.lats, fleet.lons)
    irr = weather.channel("DSWRF")[:, rows, cols]
    amb = weather.channel("TMP")[:, rows, cols] - 273.15
    w = pvphysics.ModuleWeather(ambient_temp=amb, irradiance=irr, wind_speed=WIND_PROXY)
    per_plant = pvphysics.plant_power(fleet.capacities[None, :], w)
    return PowerSeries(t0=weather.t0, dt=weather.dt, values=per_plant.sum(axis=1))


def generate_weather(grid, n_steps, seed, t0, dt):
    cloud = gen_cloud_field(grid, n_steps, seed)
    temp = gen_temperature_field(grid, n_steps, seed, t0=t0, dt=dt)
    dswrf = irradiance_from_cloud(clearsky_field(grid, t0, dt, n_steps), cloud)
    frames = np.stack([dswrf, cloud, temp], axis=1)
    return RasterSeries(grid=grid, channels=CHANNELS_NWP, t0=t0, dt=dt, frames=frames)


def generate_dataset(config, out_dir=None):
    """Generate ``(raster, power, fleet)`` for ``config``; write them if ``out_dir`` is given.

    Rasters are rounded to float32 and power to nine significant digits
    before aggregation/return, so what is returned equals what a reader
    gets back from disk.
    """
    from . import storage

    grid = config.grid
    n_steps = config.days * (86400 // config.dt_seconds)
    raster = generate_weather(grid, n_steps, config.seed, config.start, config.dt_seconds)
    raster.frames = raster.frames.astype(np.float32).astype(np.float64)
    fleet = gen_fleet(grid, config.n_plants, config.seed, config.concentration, config.fleet_corner)
    power = aggregate_pv_power(fleet, raster)
    power.values = np.array([float(f"{v:.9g}") for v in power.values])
    if out_dir is not None:
        out_dir = os.fspath(out_dir)
        storage.write_raster(os.path.join(out_dir, RASTER_FILE), raster)
        storage.write_series(os.path.join(out_dir, POWER_FILE), power)
        storage.write_fleet(os.path.join(out_dir, FLEET_FILE), fleet)
    return raster, power, fleet


def load_dataset(data_dir):
    """Read the three files written by :func:`generate_dataset`."""
    from . import storage

    data_dir = os.fspath(data_dir)
    raster = storage.read_raster(os.path.join(data_dir, RASTER_FILE))
    power = storage.read_series(os.path.join(data_dir, POWER_FILE), default_dt=raster.dt)
    fleet = storage.read_fleet(os.path.join(data_dir, FLEET_FILE))
    return raster, power, fleet


__all__ = [
    "Fleet", "GridSpec", "PowerSeries", "RasterSeries", "aggregate_pv_power", "clearsky_field",
    "gen_cloud_field", "gen_fleet", "gen_temperature_field", "generate_dataset", "irradiance_from_cloud",
    "load_dataset",
]
