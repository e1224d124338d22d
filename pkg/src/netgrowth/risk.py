"""Downward growth-fluctuation risk under the Gaussian moment approximation.

All closed forms reduce to the standardized quantile factor
``psi(q) = erfinv(2q - 1)``: the q-quantile of a Gaussian with mean ``m`` and
variance ``v`` is ``m + sqrt(2 v) * psi(q)``.  Conditioning firm ``i`` on
firm ``j`` sitting at its own value-at-risk shifts the mean by
``cov_ij * sqrt(2 / var_j) * psi(q)`` and shrinks the variance to
``var_i - cov_ij**2 / var_j``; the relative risk is that conditional
quantile's shortfall below the expected worth, as a fraction of it.

The covariance term enters SIGNED.  For nonnegative covariance (which this
model produces from a deterministic start) the signed form coincides with
the absolute-value expression; for negative covariance only the signed form
matches the Gaussian conditional law.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

from scipy.special import erfinv

from .errors import NumericError
from .model import ModelParams
from .moments import closed_form_moment_trajectory

__all__ = [
    "QuantileSpec",
    "RiskPoint",
    "RiskCurve",
    "psi_quantile",
    "value_at_risk",
    "conditional_value_at_risk",
    "relative_risk",
    "risk_curve",
    "write_risk_csv",
]


def psi_quantile(q: float) -> float:
    """Standardized quantile factor ``erfinv(2q - 1)``; absolute error below
    1e-9 over (0, 1)."""
    if not (0.0 < q < 1.0):
        raise ValueError(f"q must lie in (0, 1), got {q}")
    return float(erfinv(2.0 * q - 1.0))


@dataclass(frozen=True)
class QuantileSpec:
    """A probability level together with its derived quantile factor."""

    q: float
    psi: float = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "psi", psi_quantile(self.q))


def value_at_risk(mean_j: float, var_j: float, q: float) -> float:
    """q-quantile of the Gaussian marginal: ``mean + sqrt(2 var) psi(q)``."""
    if not (var_j >= 0):
        raise ValueError(f"variance must be nonnegative, got {var_j}")
    return mean_j + math.sqrt(2.0 * var_j) * psi_quantile(q)


def _conditional_variance(var_i: float, var_j: float, cov_ij: float) -> float:
    if not (var_j > 0):
        raise ValueError(f"conditioning variance must be positive, got {var_j}")
    if not (var_i >= 0):
        raise ValueError(f"variance must be nonnegative, got {var_i}")
    det = var_i * var_j - cov_ij * cov_ij
    if det < -1e-12 * max(var_i * var_j, 1.0):
        raise ValueError(
            f"covariance block [[{var_i}, {cov_ij}], [{cov_ij}, {var_j}]] is not PSD"
        )
    return max(var_i - cov_ij * cov_ij / var_j, 0.0)


def conditional_value_at_risk(
    mean_i: float, mean_j: float, var_i: float, var_j: float, cov_ij: float, q: float
) -> float:
    """q-quantile of firm ``i`` conditioned on firm ``j`` at its own q-VaR.

    The Gaussian conditional law has mean
    ``mean_i + (cov_ij / var_j) (VaR_j - mean_j)`` and variance
    ``var_i - cov_ij**2 / var_j``.  Asymmetric in (i, j).
    """
    cond_var = _conditional_variance(var_i, var_j, cov_ij)
    v_j = value_at_risk(mean_j, var_j, q)
    cond_mean = mean_i + (cov_ij / var_j) * (v_j - mean_j)
    return cond_mean + math.sqrt(2.0 * cond_var) * psi_quantile(q)


def relative_risk(mean_i: float, var_i: float, var_j: float, cov_ij: float, q: float) -> float:
    """Downward fluctuation of firm ``i`` relative to its expected worth given
    firm ``j``'s distress; identically ``(CVaR - mean_i) / mean_i``."""
    if not (mean_i > 0):
        raise ValueError(f"expected worth must be positive, got {mean_i}")
    cond_var = _conditional_variance(var_i, var_j, cov_ij)
    bracket = cov_ij * math.sqrt(2.0 / var_j) + math.sqrt(2.0 * cond_var)
    return bracket * psi_quantile(q) / mean_i


@dataclass(frozen=True)
class RiskPoint:
    t: float
    firm: int
    var: float  # firm's own marginal q-quantile
    cvar: float  # quantile conditional on the stressed firm
    risk: float  # (cvar - mean) / mean


@dataclass(frozen=True)
class RiskCurve:
    """Time series of (VaR, CVaR, relative risk) for every firm against one
    stressed firm at a fixed probability level."""

    source: int
    q: float
    points: list[RiskPoint]
    labels: list[str] | None = None

    def label(self, firm: int) -> str:
        if self.labels is not None:
            return self.labels[firm]
        return f"firm_{firm}"

    def at(self, t: float, firm: int) -> RiskPoint:
        for pt in self.points:
            if pt.firm == firm and abs(pt.t - t) <= 1e-9 * max(1.0, abs(t)):
                return pt
        raise KeyError(f"no point for firm {firm} at t={t}")


def risk_curve(
    params: ModelParams,
    a0,
    source: int,
    q: float,
    t_grid,
    labels: list[str] | None = None,
) -> RiskCurve:
    """Evaluate VaR/CVaR/relative risk for all firms against stressed firm
    ``source`` over ``t_grid`` (ascending from 0).

    Moments come from the closed-form solver.  While the stressed firm's
    variance is exactly zero (t = 0, or a firm with no dynamics) conditioning
    carries no information, so the conditional quantile degenerates to the
    marginal one and the risk at t = 0 is zero.
    """
    if not (0 <= source < params.n):
        raise ValueError(f"source index {source} out of range for n={params.n}")
    if labels is not None and len(labels) != params.n:
        raise ValueError("labels length does not match n")
    ts = [float(t) for t in t_grid]
    if not ts or ts[0] != 0.0:
        raise ValueError("t_grid must be ascending and start at 0")
    states = closed_form_moment_trajectory(params, a0, ts)
    points: list[RiskPoint] = []
    for st in states:
        var_j = max(float(st.cov[source, source]), 0.0)
        for i in range(params.n):
            mean_i = float(st.mean[i])
            var_i = max(float(st.cov[i, i]), 0.0)
            v = value_at_risk(mean_i, var_i, q)
            if var_j > 0.0:
                c = conditional_value_at_risk(
                    mean_i, float(st.mean[source]), var_i, var_j, float(st.cov[i, source]), q
                )
            else:
                c = v
            if c == mean_i:
                r = 0.0
            elif mean_i > 0:
                r = (c - mean_i) / mean_i
            else:
                raise NumericError(
                    f"relative risk undefined for firm {i} at t={st.t}: expected worth is 0"
                )
            points.append(RiskPoint(t=st.t, firm=i, var=v, cvar=c, risk=r))
    return RiskCurve(source=source, q=q, points=points, labels=labels)


def write_risk_csv(path, curve: RiskCurve) -> None:
    """CSV layout ``t,i,sector_label,V,C,R`` -- plot-ready for risk curves.
    Labels are quoted when needed (sector names may contain commas)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "i", "sector_label", "V", "C", "R"])
        for pt in curve.points:
            writer.writerow(
                [repr(pt.t), pt.firm, curve.label(pt.firm), repr(pt.var), repr(pt.cvar), repr(pt.risk)]
            )
