"""Combining rules for multiply imputed analyses and evaluation metrics.

Pooling follows the classical rules: the pooled point estimate averages the
per-imputation estimates, total variance adds the within-imputation average
to the between-imputation variance inflated by (1 + 1/m), and interval
endpoints use a t reference whose degrees of freedom collapse to infinity
when the estimates agree exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class PooledEstimate:
    """Pooled scalar estimate with its variance decomposition."""

    estimate: float
    within: float
    between: float
    total: float
    df: float
    ci_low: float
    ci_high: float
    level: float
    m: int

    def covers(self, truth: float) -> bool:
        return self.ci_low <= truth <= self.ci_high


def pool(
    estimates: Sequence[float],
    variances: Sequence[float],
    level: float = 0.95,
) -> PooledEstimate:
    """Combine per-imputation estimates and variances into one interval.

    Requires at least two imputations (the between-imputation variance is
    otherwise undefined) and non-negative variances.
    """
    q = np.asarray(estimates, dtype=float)
    u = np.asarray(variances, dtype=float)
    m = len(q)
    if m < 2:
        raise ValueError("pooling needs m >= 2 estimates")
    if len(u) != m:
        raise ValueError("need one variance per estimate")
    if (u < 0).any():
        raise ValueError("variances must be non-negative")
    if not (0.0 < level < 1.0):
        raise ValueError("confidence level must lie in (0, 1)")
    q_bar = float(q.mean())
    u_bar = float(u.mean())
    b = float(q.var(ddof=1))
    inflated = (1.0 + 1.0 / m) * b
    t = u_bar + inflated
    if b == 0.0:
        df = np.inf
    else:
        df = (m - 1) * (1.0 + u_bar / inflated) ** 2
    crit = float(stats.t.ppf(0.5 * (1.0 + level), df))
    half = crit * np.sqrt(t)
    return PooledEstimate(
        estimate=q_bar,
        within=u_bar,
        between=b,
        total=t,
        df=float(df),
        ci_low=q_bar - half,
        ci_high=q_bar + half,
        level=level,
        m=m,
    )


@dataclass(frozen=True)
class MetricsRecord:
    """Replicate-level evaluation of an estimand against its true value.

    ``mse`` decomposes exactly as ``bias_sq + variance`` because the
    variance is taken around the replicate mean (no small-sample
    correction).
    """

    estimand: str
    truth: float
    mean_estimate: float
    bias: float
    coverage: float
    mse: float
    bias_sq: float
    variance: float
    n_replicates: int


def replicate_metrics(
    pooled: Sequence[PooledEstimate], truth: float, estimand: str = ""
) -> MetricsRecord:
    """Bias, coverage and decomposed MSE over replicate pooled estimates."""
    if not pooled:
        raise ValueError("need at least one replicate")
    q = np.array([p.estimate for p in pooled])
    covered = np.array([p.covers(truth) for p in pooled])
    mean_estimate = float(q.mean())
    bias = mean_estimate - truth
    variance = float(np.mean((q - mean_estimate) ** 2))
    mse = float(np.mean((q - truth) ** 2))
    return MetricsRecord(
        estimand=estimand,
        truth=truth,
        mean_estimate=mean_estimate,
        bias=bias,
        coverage=float(covered.mean()),
        mse=mse,
        bias_sq=bias * bias,
        variance=variance,
        n_replicates=len(pooled),
    )


def predict_mse(predictions: np.ndarray, truth: np.ndarray) -> float:
    """MSE of the pooled (averaged) prediction against the true responses.

    ``predictions`` holds one row per imputation.
    """
    preds = np.asarray(predictions, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if preds.ndim == 1:
        preds = preds[None, :]
    if preds.shape[1] != truth.shape[0]:
        raise ValueError(
            f"predictions cover {preds.shape[1]} rows but truth has {truth.shape[0]}"
        )
    pooled = preds.mean(axis=0)
    return float(np.mean((pooled - truth) ** 2))


@dataclass(frozen=True)
class OlsFit:
    """Least squares fit with the usual coefficient covariance."""

    coef: np.ndarray
    cov: np.ndarray
    sigma2: float
    dof: int

    def predict(self, design: np.ndarray) -> np.ndarray:
        return np.asarray(design, dtype=float) @ self.coef


def ols_fit(y: np.ndarray, design: np.ndarray) -> OlsFit:
    """Ordinary least squares of ``y`` on ``design`` (intercept included
    by the caller)."""
    y = np.asarray(y, dtype=float)
    design = np.asarray(design, dtype=float)
    n, k = design.shape
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    dof = max(n - k, 1)
    sigma2 = float(resid @ resid) / dof
    xtx = design.T @ design
    if rank == k:
        cov = sigma2 * np.linalg.inv(xtx)
    else:
        cov = sigma2 * np.linalg.pinv(xtx)
    return OlsFit(coef=coef, cov=cov, sigma2=sigma2, dof=dof)


def metrics_csv_rows(records: Sequence[tuple[str, MetricsRecord]]) -> list[list[str]]:
    """Rows for the (scenario, estimand, ...) metrics table."""
    from .tabular import format_value as fv

    rows = [
        [
            "scenario",
            "estimand",
            "truth",
            "bias",
            "coverage",
            "mse",
            "bias_sq",
            "variance",
            "n_rep",
        ]
    ]
    for scenario, rec in records:
        rows.append(
            [
                scenario,
                rec.estimand,
                fv(rec.truth),
                fv(rec.bias),
                fv(rec.coverage),
                fv(rec.mse),
                fv(rec.bias_sq),
                fv(rec.variance),
                str(rec.n_replicates),
            ]
        )
    return rows
