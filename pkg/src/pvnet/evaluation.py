"""Forecast metrics, the 24 h persistence baseline and comparison reports."""
from dataclasses import dataclass

import numpy as np

from .errors import EmptyReportError, FormatError, ParameterError
from .series import PowerSeries, iso

BASELINE_HORIZON = 24 * 3600  # seconds
DAYLIGHT_RULES = {
    "measured": "measured > 0",
    "both": "measured > 0 and predicted > 0",
}


@dataclass(frozen=True)
class MetricsReport:
    rmse: float  # MW
    mae: float  # MW
    nrmse: float  # percent of capacity
    nmae: float  # percent of capacity
    n_points: int
    capacity: float  # MW
    filter_rule: str


@dataclass(frozen=True)
class Pairs:
    """Measured/predicted samples that passed the daylight filter."""

    measured: np.ndarray
    predicted: np.ndarray
    index: np.ndarray  # positions in the original series
    rule: str

    def __len__(self):
        return self.index.size


def _aligned(measured, predicted):
    if isinstance(measured, PowerSeries) and isinstance(predicted, PowerSeries):
        if measured.t0 != predicted.t0 or int(measured.dt) != int(predicted.dt) or len(measured) != len(predicted):
            raise ParameterError(
                f"series are not aligned: measured ({iso(measured.t0)}, {measured.dt} s, n={len(measured)}), "
                f"predicted ({iso(predicted.t0)}, {predicted.dt} s, n={len(predicted)})")
        return measured.values, predicted.values
    m = np.asarray(getattr(measured, "values", measured), dtype=np.float64)
    p = np.asarray(getattr(predicted, "values", predicted), dtype=np.float64)
    if m.shape != p.shape:
        raise ParameterError(f"series lengths differ: {m.shape} vs {p.shape}")
    return m, p


def daylight_filter(measured, predicted, rule="measured"):
    """Keep the samples where the measured power is positive.

    ``rule="both"`` additionally requires a positive prediction.  NaN
    predictions (unavailable baseline values) are always dropped.
    """
    if rule not in DAYLIGHT_RULES:
        raise ParameterError(f"unknown daylight rule {rule!r}; use one of {sorted(DAYLIGHT_RULES)}")
    m, p = _aligned(measured, predicted)
    keep = (m > 0) & np.isfinite(p)
    if rule == "both":
        keep &= p > 0
    idx = np.nonzero(keep)[0]
    return Pairs(measured=m[idx], predicted=p[idx], index=idx, rule=DAYLIGHT_RULES[rule])


def compute_metrics(pairs, capacity):
    """RMSE/MAE in MW and as a percentage of ``capacity``."""
    if not capacity > 0:
        raise ParameterError(f"capacity must be > 0, got {capacity}")
    if len(pairs) == 0:
        raise EmptyReportError("no samples passed the daylight filter; metrics are undefined")
    err = pairs.predicted - pairs.measured
    rmse = float(np.sqrt(np.mean(err * err)))
    mae = float(np.mean(np.abs(err)))
    return MetricsReport(rmse=rmse, mae=mae, nrmse=100.0 * rmse / capacity, nmae=100.0 * mae / capacity,
                         n_points=len(pairs), capacity=float(capacity), filter_rule=pairs.rule)


def persistence_baseline(power, horizon=BASELINE_HORIZON):
    """``prediction(t) = measured(t - horizon)``; the first steps are NaN (unavailable)."""
    if horizon % int(power.dt):
        raise ParameterError(f"horizon {horizon} s is not a multiple of the step {power.dt} s")
    lag = horizon // int(power.dt)
    if len(power) <= lag:
        raise ParameterError(f"series of {len(power)} steps is too short for a {horizon // 3600} h persistence")
    pred = np.full(len(power), np.nan)
    pred[lag:] = power.values[:-lag]
    return PowerSeries(t0=power.t0, dt=power.dt, values=pred)


def evaluate_pair(measured, model_pred, baseline_pred, capacity, rule="measured"):
    """Metrics for the model and the baseline over one shared index set.

    The filter is applied to the model pairing; the baseline is then scored
    on exactly those indices (the baseline must be available there).
    """
    m, p = _aligned(measured, model_pred)
    _, b = _aligned(measured, baseline_pred)
    pairs = daylight_filter(m, p, rule)
    if rule == "both":
        pairs = daylight_filter(m, np.where(np.isfinite(b), p, np.nan), rule)
    idx = pairs.index
    if np.any(~np.isfinite(b[idx])):
        raise ParameterError("the baseline is unavailable at some filtered indices")
    base_pairs = Pairs(measured=m[idx], predicted=b[idx], index=idx, rule=pairs.rule)
    return compute_metrics(pairs, capacity), compute_metrics(base_pairs, capacity), idx


_ROWS = (("rmse", "MW"), ("mae", "MW"), ("nrmse", "%"), ("nmae", "%"))


def compare_report(model, baseline, model_index=None, baseline_index=None, header=None):
    """Text table plus delimited ``name,value,unit`` lines.

    Improvement ratios are ``baseline / model`` (higher is better).

    Returns
    -------
    (text, delimited) : tuple of str
    """
    if model_index is not None and baseline_index is not None:
        if not np.array_equal(np.asarray(model_index), np.asarray(baseline_index)):
            raise ParameterError("model and baseline metrics were computed on different index sets")
    if model.n_points != baseline.n_points or model.capacity != baseline.capacity:
        raise ParameterError("model and baseline reports differ in n_points or capacity")

    def ratio(name):
        m = getattr(model, name)
        b = getattr(baseline, name)
        if m == 0:
            return 1.0 if b == 0 else float("inf")
        return b / m

    lines = []
    if header:
        lines.extend(f"# {h}" for h in header.splitlines())
    lines.append(f"{'method':<14}{'RMSE (MW)':>14}{'MAE (MW)':>14}{'nRMSE (%)':>12}{'nMAE (%)':>12}")
    for name, rep in (("Persistence", baseline), ("Pvnet", model)):
        lines.append(f"{name:<14}{rep.rmse:>14.6g}{rep.mae:>14.6g}{rep.nrmse:>12.6g}{rep.nmae:>12.6g}")
    lines.append(f"{'Lorenz et al':<14}{'(reference method not implemented)':>66}")
    lines.append(f"improvement (baseline/model): nRMSE x{ratio('nrmse'):.6g}, nMAE x{ratio('nmae'):.6g}")
    lines.append(f"n_points {model.n_points}, capacity {model.capacity:.6g} MW, filter: {model.filter_rule}")
    text = "\n".join(lines) + "\n"

    rows = ["name,value,unit"]
    for prefix, rep in (("model", model), ("baseline", baseline)):
        rows.extend(f"{prefix}_{name},{getattr(rep, name):.6g},{unit}" for name, unit in _ROWS)
    rows.append(f"ratio_nrmse,{ratio('nrmse'):.6g},1")
    rows.append(f"ratio_nmae,{ratio('nmae'):.6g},1")
    rows.append(f"n_points,{model.n_points},count")
    rows.append(f"capacity,{model.capacity:.6g},MW")
    return text, "\n".join(rows) + "\n"


def parse_report(text):
    """Read a delimited report back into ``{name: (value, unit)}``."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "name,value,unit":
        raise FormatError("report: missing 'name,value,unit' header")
    out = {}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 3:
            raise FormatError(f"report:{lineno}: expected 3 fields, got {line!r}")
        try:
            out[parts[0]] = (float(parts[1]), parts[2])
        except ValueError:
            raise FormatError(f"report:{lineno}: bad value {parts[1]!r}") from None
    return out
