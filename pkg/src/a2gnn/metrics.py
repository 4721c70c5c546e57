"""Forecast evaluation metrics on de-normalized values.

Conventions:
  - rse is the ratio of squared residuals to squared deviation from the
    truth mean (no square root), so a mean predictor scores exactly 1
  - corr is computed per node over samples, then averaged over nodes whose
    truth varies; a node with constant predictions contributes 0
  - mape is reported in percent and skips entries with zero truth
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DataError


@dataclass
class Metrics:
    rse: float
    corr: float
    mae: float
    rmse: float
    mape: float

    def as_dict(self):
        return {"rse": self.rse, "corr": self.corr, "mae": self.mae,
                "rmse": self.rmse, "mape": self.mape}


@dataclass
class MetricReport:
    """Scores per forecast horizon step (1-based) plus the joint aggregate."""

    per_horizon: dict
    aggregate: Metrics


def rse(y, y_hat):
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    denom = np.sum((y - y.mean()) ** 2)
    if denom == 0.0:
        return float("inf")
    return float(np.sum((y - y_hat) ** 2) / denom)


def corr(y, y_hat):
    """Mean per-node correlation; expects (samples, nodes) arrays."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    dy = y - y.mean(axis=0)
    dp = y_hat - y_hat.mean(axis=0)
    sy = np.sqrt((dy ** 2).sum(axis=0))
    sp = np.sqrt((dp ** 2).sum(axis=0))
    valid = sy > 0.0
    if not valid.any():
        return float("nan")
    num = (dy * dp).sum(axis=0)
    denom = sy * sp
    per_node = np.zeros(y.shape[1])
    ok = valid & (sp > 0.0)
    per_node[ok] = num[ok] / denom[ok]
    return float(per_node[valid].mean())


def mae(y, y_hat):
    return float(np.mean(np.abs(np.asarray(y) - np.asarray(y_hat))))


def rmse(y, y_hat):
    diff = np.asarray(y, dtype=np.float64) - np.asarray(y_hat, dtype=np.float64)
    return float(np.sqrt(np.mean(diff ** 2)))


def mape(y, y_hat):
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    nonzero = y != 0.0
    if not nonzero.any():
        return float("nan")
    return float(100.0 * np.mean(np.abs((y[nonzero] - y_hat[nonzero]) / y[nonzero])))


def score(y, y_hat):
    """All five metrics for (samples, nodes) truth/prediction pairs."""
    return Metrics(rse=rse(y, y_hat), corr=corr(y, y_hat), mae=mae(y, y_hat),
                   rmse=rmse(y, y_hat), mape=mape(y, y_hat))


def score_windows(y, y_hat):
    """Per-horizon and aggregate metrics for (B, t_out, N) arrays.

    Per-node statistics at horizon j run over windows; the aggregate's
    per-node statistics run over all (window, horizon) pairs.
    """
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape or y.ndim != 3:
        raise DataError(f"expected matching (B, t_out, N) arrays, got {y.shape} vs {y_hat.shape}")
    b, t_out, n = y.shape
    per_horizon = {j + 1: score(y[:, j, :], y_hat[:, j, :]) for j in range(t_out)}
    aggregate = score(y.reshape(b * t_out, n), y_hat.reshape(b * t_out, n))
    return MetricReport(per_horizon=per_horizon, aggregate=aggregate)
