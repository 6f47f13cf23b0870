"""Per-scenario resource-adequacy metrics and cross-scenario risk operators."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

Z95 = 1.96


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class RiskEstimate:
    """Mean of a scenario-aggregated metric with CLT statistics.

    `rse` is None (undefined) when the mean is not strictly positive: on a
    rare-event metric most scenarios are all-zero and the ratio is
    meaningless. Exact-weight pseudo-batches carry zero standard error.
    """

    mean: float
    std_error: float
    n: int
    exact: bool = False

    @property
    def rse(self) -> float | None:
        if self.mean > 0.0:
            return self.std_error / self.mean
        return None

    @property
    def ci95_halfwidth(self) -> float:
        return Z95 * self.std_error


def metric_ue(shortfall) -> float:
    """Unserved energy: total shortfall MWh over the horizon."""
    v = np.asarray(shortfall, dtype=np.float64)
    if (v < 0).any():
        raise MetricError("shortfall must be nonnegative")
    return float(v.sum())


def metric_lolh(shortfall) -> float:
    """Loss-of-load hours: count of hours with strictly positive shortfall."""
    v = np.asarray(shortfall, dtype=np.float64)
    if (v < 0).any():
        raise MetricError("shortfall must be nonnegative")
    return float((v > 0.0).sum())


def metric_lold(shortfall, hours_per_day: int) -> float:
    """Loss-of-load days: count of days whose worst hour is in shortage."""
    v = np.asarray(shortfall, dtype=np.float64)
    if v.size % hours_per_day != 0:
        raise MetricError(
            f"horizon {v.size} not divisible by hours_per_day {hours_per_day}"
        )
    days = v.reshape(-1, hours_per_day)
    return float((days.max(axis=1) > 0.0).sum())


def ue_rows(shortfall: np.ndarray) -> np.ndarray:
    return shortfall.sum(axis=1)


def lolh_rows(shortfall: np.ndarray) -> np.ndarray:
    return (shortfall > 0.0).sum(axis=1).astype(np.float64)


def lold_rows(shortfall: np.ndarray, hours_per_day: int) -> np.ndarray:
    n, horizon = shortfall.shape
    if horizon % hours_per_day != 0:
        raise MetricError(
            f"horizon {horizon} not divisible by hours_per_day {hours_per_day}"
        )
    days = shortfall.reshape(n, -1, hours_per_day)
    return (days.max(axis=2) > 0.0).sum(axis=1).astype(np.float64)


METRIC_ROWS = {"ue": ue_rows, "lolh": lolh_rows, "lold": lold_rows}


def per_scenario_metric(shortfall: np.ndarray, metric: str, hours_per_day: int) -> np.ndarray:
    if metric == "lold":
        return lold_rows(shortfall, hours_per_day)
    try:
        return METRIC_ROWS[metric](shortfall)
    except KeyError:
        raise MetricError(f"unknown metric {metric!r}") from None


def aggregate_expectation(values) -> RiskEstimate:
    """Sample mean with std_error = s/sqrt(n); requires n >= 2."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        raise MetricError("need at least 2 scenarios for CLT statistics")
    mean = float(v.mean())
    std_error = float(v.std(ddof=1) / math.sqrt(v.size))
    return RiskEstimate(mean=mean, std_error=std_error, n=int(v.size))


def aggregate_weighted(values, weights) -> RiskEstimate:
    """Exact expectation under enumeration weights (zero standard error)."""
    v = np.asarray(values, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    return RiskEstimate(mean=float(v @ w), std_error=0.0, n=int(v.size), exact=True)


def aggregate(values, weights=None) -> RiskEstimate:
    if weights is None:
        return aggregate_expectation(values)
    return aggregate_weighted(values, weights)


def aggregate_cvar(values, beta: float) -> RiskEstimate:
    """Upper-tail average of the worst ceil((1-beta)*n) scenario values."""
    if not 0.0 <= beta < 1.0:
        raise MetricError("beta must lie in [0, 1)")
    v = np.sort(np.asarray(values, dtype=np.float64))
    k = math.ceil((1.0 - beta) * v.size)
    if k < 1:
        raise MetricError("empty tail")
    tail = v[-k:]
    mean = float(tail.mean())
    std_error = float(tail.std(ddof=1) / math.sqrt(k)) if k >= 2 else 0.0
    return RiskEstimate(mean=mean, std_error=std_error, n=int(k))
