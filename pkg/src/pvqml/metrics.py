"""Forecast evaluation metrics.

MAPE floors ``|y|`` at ``MAPE_EPS`` so night-time zeros stay finite; it is a
raw fraction (not percent, no extra scaling). VAF is in percent and uses
population variance. VAF and R^2 are NaN, with ``undefined`` set, when the
truth has zero variance or fewer than two points.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ShapeError

MAPE_EPS = 1e-8
METRIC_NAMES = ("mae", "mse", "rmse", "mape", "vaf", "r2")


@dataclass(frozen=True)
class MetricsReport:
    mae: float
    mse: float
    rmse: float
    mape: float
    vaf: float
    r2: float
    n: int = 0
    undefined: bool = False

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps({k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in self.to_dict().items()},
                          indent=2)

    def values(self):
        return np.array([getattr(self, k) for k in METRIC_NAMES])


def mse(pred, truth) -> float:
    x, y = _pair(pred, truth)
    return float(np.mean((x - y) ** 2))


def _pair(pred, truth):
    x = np.asarray(pred, dtype=np.float64).ravel()
    y = np.asarray(truth, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ShapeError(f"prediction length {x.size} != truth length {y.size}")
    if x.size == 0:
        raise ShapeError("empty prediction set")
    return x, y


def compute_metrics(pred, truth) -> MetricsReport:
    x, y = _pair(pred, truth)
    err = y - x
    mse_ = float(np.mean(err ** 2))
    mae = float(np.mean(np.abs(err)))
    mape = float(np.mean(np.abs(err) / np.maximum(np.abs(y), MAPE_EPS)))
    var_y = float(np.var(y))
    if np.array_equal(x, y):
        vaf, r2, undefined = 100.0, 1.0, False
    elif y.size < 2 or var_y == 0.0:
        vaf = r2 = float("nan")
        undefined = True
    else:
        vaf = (1.0 - float(np.var(err)) / var_y) * 100.0
        r2 = 1.0 - float(np.sum(err ** 2)) / float(np.sum((y - y.mean()) ** 2))
        undefined = False
    return MetricsReport(mae, mse_, math.sqrt(mse_), mape, vaf, r2, int(y.size), undefined)


def aggregate(reports) -> dict:
    """Mean and standard deviation (population) of every metric across reports."""
    arr = np.array([r.values() for r in reports])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN columns aggregate to NaN
        return {
            "mean": dict(zip(METRIC_NAMES, np.nanmean(arr, axis=0).tolist())),
            "std": dict(zip(METRIC_NAMES, np.nanstd(arr, axis=0).tolist())),
            "n_reports": len(reports),
        }
