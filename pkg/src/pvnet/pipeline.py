"""End-to-end steps shared by the command line and the acceptance suite."""
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .evaluation import compare_report, evaluate_pair, persistence_baseline
from .features import build_dataset, normalize, prepare, split_train_val
from .model import PVNetConfig, predict, train
from .series import PowerSeries


@dataclass
class Evaluation:
    model: object  # MetricsReport
    baseline: object  # MetricsReport
    index: np.ndarray  # filtered positions within the validation windows
    prediction: PowerSeries  # MW at the validation target times
    measured: PowerSeries

    @property
    def ratio_nrmse(self):
        return self.baseline.nrmse / self.model.nrmse if self.model.nrmse > 0 else float("inf")

    def report(self, header=None):
        return compare_report(self.model, self.baseline, self.index, self.index, header=header)


def check_grid(expected, actual, what):
    if expected != actual:
        raise ParameterError(
            f"{what} grid {expected.n_rows}x{expected.n_cols} at ({expected.lat0}, {expected.lon0}) step "
            f"({expected.dlat}, {expected.dlon}) does not match the data grid {actual.n_rows}x{actual.n_cols} "
            f"at ({actual.lat0}, {actual.lon0}) step ({actual.dlat}, {actual.dlon})")


def train_on_data(config, raster, power, fleet, progress=None):
    """Split, normalize and train.  Returns ``(result, train, val, stats)``."""
    check_grid(config.grid, raster.grid, "config")
    tr, va, stats = prepare(raster, power, fleet.total_capacity, config.train_fraction)
    result = train(tr, va, PVNetConfig.from_config(config), progress=progress)
    return result, tr, va, stats


def validation_split(config, raster, power, stats):
    """Validation windows normalized with previously fitted ``stats``."""
    ds = normalize(build_dataset(raster, power), stats)
    return split_train_val(ds, config.train_fraction)[1]


def evaluate_validation(val, power, params, config, capacity):
    """Score the model and the 24 h persistence baseline on the validation windows."""
    pred = predict(val, params, PVNetConfig.from_config(config))
    times = val.target_times
    measured = PowerSeries(t0=times[0], dt=val.dt, values=val.power[val.target_index])
    baseline = PowerSeries(t0=times[0], dt=val.dt, values=persistence_baseline(power).values[val.target_index])
    m, b, idx = evaluate_pair(measured, pred, baseline, capacity, config.daylight_rule)
    return Evaluation(model=m, baseline=b, index=idx, prediction=pred, measured=measured)
