"""PV cell physics, module temperature, solar geometry and clear-sky irradiance.

Conventions: temperatures handed to the single-diode functions are in
kelvin; weather inputs (:class:`ModuleWeather`) use degrees Celsius.
"""
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericalError, ParameterError

BOLTZMANN = 1.380649e-23  # J/K
ELEMENTARY_CHARGE = 1.602176634e-19  # C
EXP_CLAMP = 500.0

GAMMA_POWER = -0.004  # relative power change per degC above 25 degC
STC_IRRADIANCE = 1000.0
STC_TEMPERATURE = 25.0

HAURWITZ_SCALE = 1098.0
HAURWITZ_EXTINCTION = 0.057


@dataclass(frozen=True)
class DiodeParams:
    """Single-diode equivalent circuit of one cell.

    ``A`` is the ideality factor of the implicit cell equation; ``n`` the
    one used by :func:`diode_current`.
    """

    I_0: float
    n: float
    T: float
    I_l: float
    R_s: float
    R_sh: float
    A: float = 1.0

    def __post_init__(self):
        if not self.I_0 > 0:
            raise DomainError(f"I_0 must be > 0, got {self.I_0}")
        if not self.T > 0:
            raise DomainError(f"T must be > 0 K, got {self.T}")
        if not self.R_sh > 0:
            raise DomainError(f"R_sh must be > 0, got {self.R_sh}")
        if self.R_s < 0:
            raise DomainError(f"R_s must be >= 0, got {self.R_s}")


@dataclass(frozen=True)
class ModuleWeather:
    ambient_temp: float  # degC
    irradiance: float  # W/m^2
    wind_speed: float  # m/s

    def __post_init__(self):
        if np.any(np.asarray(self.irradiance) < 0):
            raise DomainError("irradiance must be >= 0")
        if np.any(np.asarray(self.wind_speed) < 0):
            raise DomainError("wind_speed must be >= 0")


def thermal_voltage(T):
    """``kT/q`` in volts for a junction temperature in kelvin."""
    if not T > 0:
        raise DomainError(f"temperature must be > 0 K, got {T}")
    return BOLTZMANN * T / ELEMENTARY_CHARGE


def diode_current(V_j, p, return_flag=False):
    """Shockley diode current ``I_0 (exp(V_j / (n V_T)) - 1)``.

    The exponent is clamped at 500; with ``return_flag=True`` the result is
    ``(current, saturated)``.
    """
    arg = V_j / (p.n * thermal_voltage(p.T))
    saturated = arg > EXP_CLAMP
    current = p.I_0 * math.expm1(min(arg, EXP_CLAMP))
    if return_flag:
        return current, saturated
    return current


def _cell_residual(I, V, p, vt_a):
    vd = V + I * p.R_s
    return p.I_l - p.I_0 * math.expm1(min(vd / vt_a, EXP_CLAMP)) - vd / p.R_sh - I


def cell_current(V_pv, p, tol=1e-10, bracket=None):
    """Solve the implicit cell equation for the output current by bisection.

    Finds ``I`` with ``I_l - I_0 (exp(q (V + I R_s) / (A k T)) - 1)
    - (V + I R_s) / R_sh - I = 0`` on ``[-I_l, 2 I_l]``.  The residual is
    strictly decreasing in ``I``, so a sign change means a unique root.

    Raises
    ------
    NumericalError
        The residual has no sign change on the bracket.
    """
    vt_a = p.A * BOLTZMANN * p.T / ELEMENTARY_CHARGE
    lo, hi = bracket if bracket is not None else (-p.I_l, 2.0 * p.I_l)
    f_lo = _cell_residual(lo, V_pv, p, vt_a)
    f_hi = _cell_residual(hi, V_pv, p, vt_a)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if (f_lo > 0) == (f_hi > 0):
        raise NumericalError(
            f"cell equation has no sign change on [{lo}, {hi}] at V={V_pv}: "
            f"f(lo)={f_lo:.3e}, f(hi)={f_hi:.3e}")
    # Stop on bracket width AND residual: near open circuit with R_s > 0 the
    # residual slope is steep, so a tol-wide bracket alone is not enough.
    while True:
        mid = 0.5 * (lo + hi)
        f_mid = _cell_residual(mid, V_pv, p, vt_a)
        if f_mid == 0.0 or mid in (lo, hi) or (hi - lo <= tol and abs(f_mid) <= tol):
            return mid
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid


def cell_residual(I, V_pv, p):
    """Residual of the implicit cell equation (A); zero at the solution."""
    return _cell_residual(I, V_pv, p, p.A * BOLTZMANN * p.T / ELEMENTARY_CHARGE)


def cell_power(V_pv, p):
    """Output power ``V * I(V)`` in watts."""
    return V_pv * cell_current(V_pv, p)


def open_circuit_voltage(p):
    """Voltage where the output current reaches zero (bisection on V)."""
    if p.I_l <= 0:
        return 0.0
    vt_a = p.A * BOLTZMANN * p.T / ELEMENTARY_CHARGE
    # At I = 0: I_l - I_0 (exp(V/vt_a) - 1) - V/R_sh = 0, decreasing in V.
    def g(v):
        return p.I_l - p.I_0 * math.expm1(min(v / vt_a, EXP_CLAMP)) - v / p.R_sh

    lo, hi = 0.0, vt_a * math.log1p(p.I_l / p.I_0)
    while g(hi) > 0:
        hi *= 2.0
    while hi - lo > 1e-12 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def max_power_point(p, n_points=512):
    """Best ``(V, P)`` on an ``n_points`` voltage grid over ``[0, V_oc]``."""
    v_oc = open_circuit_voltage(p)
    if v_oc <= 0:
        return 0.0, 0.0
    volts = np.linspace(0.0, v_oc, n_points)
    powers = np.array([cell_power(v, p) for v in volts])
    k = int(np.argmax(powers))
    return float(volts[k]), float(powers[k])


def module_temperature(w):
    """Module temperature (degC) from ambient temperature, irradiance and wind."""
    return 0.94 * w.ambient_temp + 0.02 * w.irradiance - 1.5 * w.wind_speed + 0.35


def solar_cos_zenith(time, lat, lon):
    """Cosine of the solar zenith angle.

    Declination from the day-angle cosine approximation, hour angle from
    UTC plus the longitude offset (no equation of time, no refraction).

    Parameters
    ----------
    time : datetime, numpy.datetime64 or array of datetime64
        UTC instant(s).
    lat, lon : float or array
        Degrees north / east.  Broadcast against ``time``.
    """
    t = np.asarray(time, dtype="datetime64[s]")
    day_start = t.astype("datetime64[D]")
    doy = (day_start - t.astype("datetime64[Y]").astype("datetime64[D]")).astype(np.int64) + 1
    hours = (t - day_start).astype(np.int64) / 3600.0
    decl = np.deg2rad(-23.45) * np.cos(2.0 * np.pi * (doy + 10) / 365.0)
    hour_angle = np.deg2rad(15.0 * (hours + np.asarray(lon) / 15.0 - 12.0))
    phi = np.deg2rad(lat)
    cz = np.sin(phi) * np.sin(decl) + np.cos(phi) * np.cos(decl) * np.cos(hour_angle)
    return np.clip(cz, -1.0, 1.0)


def clearsky_ghi(cos_zenith):
    """Haurwitz clear-sky global horizontal irradiance (W/m^2); 0 below the horizon."""
    cz = np.asarray(cos_zenith, dtype=np.float64)
    safe = np.where(cz > 0, cz, 1.0)
    ghi = np.where(cz > 0, HAURWITZ_SCALE * cz * np.exp(-HAURWITZ_EXTINCTION / safe), 0.0)
    return ghi if ghi.ndim else float(ghi)


def power_fraction(irradiance, module_temp):
    """Fraction of nameplate output, clamped to [0, 1]."""
    frac = (np.asarray(irradiance) / STC_IRRADIANCE) * (1.0 + GAMMA_POWER * (np.asarray(module_temp) - STC_TEMPERATURE))
    return np.clip(frac, 0.0, 1.0)


def plant_power(capacity, w, module_temp=None):
    """Plant output (MW) from the linear temperature-coefficient model.

    ``module_temp`` overrides the temperature computed from ``w``.
    """
    if np.any(np.asarray(capacity) < 0):
        raise ParameterError("capacity must be >= 0")
    tm = module_temperature(w) if module_temp is None else module_temp
    out = np.asarray(capacity) * power_fraction(w.irradiance, tm)
    return out if out.ndim else float(out)
