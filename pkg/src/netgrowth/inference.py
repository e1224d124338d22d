"""Gaussian snapshot likelihood and maximum-likelihood estimation.

Each observation is a full net-worth vector at some time, scored against the
multivariate normal with the closed-form mean and covariance propagated from
the known initial condition.  Observations enter as a plain sum of marginal
log-densities (independent snapshots, not a filtering recursion).  Selected
entries of (phi, lambda) are estimated by Nelder-Mead over log-transformed
values, which enforces nonnegativity without explicit bounds.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import NumericError
from .model import ModelParams, as_nonnegative_vector, require_valid
from .moments import closed_form_moment_trajectory

__all__ = [
    "ObservationSet",
    "FitSpec",
    "FitResult",
    "log_likelihood",
    "fit_mle",
    "read_observations_csv",
    "write_observations_csv",
]

# Diagonal jitter scale applied before factorizing each covariance; early
# times have near-singular covariance.
JITTER_SCALE = 1e-9

# Free parameters at exactly zero cannot be log-transformed; they start here.
_LOG_FLOOR = 1e-8

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class ObservationSet:
    """Net-worth snapshots ``values[d]`` at strictly ascending times
    ``times[d] > 0``, with the known initial condition ``a0``."""

    times: np.ndarray
    values: np.ndarray
    a0: np.ndarray

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        a0 = np.asarray(self.a0, dtype=float)
        if times.ndim != 1 or values.ndim != 2 or values.shape[0] != times.size:
            raise ValueError("need times (m,) and values (m, n)")
        if a0.shape != (values.shape[1],):
            raise ValueError("a0 length must match the observation width")
        if times.size == 0:
            raise ValueError("at least one observation is required")
        if times[0] <= 0 or np.any(np.diff(times) <= 0):
            raise ValueError("observation times must be strictly positive and ascending")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("observations must be finite and nonnegative")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "a0", a0)

    @property
    def n(self) -> int:
        return self.values.shape[1]


def log_likelihood(params: ModelParams, a0, obs: ObservationSet) -> float:
    """Sum of Gaussian log-densities of the observations under the model.

    Each covariance gets diagonal jitter ``JITTER_SCALE * trace / n`` before
    Cholesky factorization; a factorization failure raises
    :class:`NumericError` naming the observation.
    """
    require_valid(params)
    a0 = as_nonnegative_vector(a0, params.n)
    states = closed_form_moment_trajectory(params, a0, obs.times)
    n = params.n
    total = 0.0
    for d, st in enumerate(states):
        sigma = st.cov + np.eye(n) * (JITTER_SCALE * np.trace(st.cov) / n)
        try:
            chol = np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            raise NumericError(
                f"covariance not positive definite at observation {d} (t={st.t})"
            ) from None
        resid = obs.values[d] - st.mean
        z = scipy.linalg.solve_triangular(chol, resid, lower=True)
        total += -0.5 * (n * _LOG_2PI + z @ z) - float(np.sum(np.log(np.diag(chol))))
    return float(total)


@dataclass(frozen=True)
class FitSpec:
    """Which parameters to estimate, from where, and how hard to try.

    ``free_phi``/``free_lam`` are boolean masks over the phi matrix and the
    lambda vector; masked-out entries stay at their ``init`` values.
    """

    init: ModelParams
    free_phi: np.ndarray
    free_lam: np.ndarray
    max_iter: int = 2000
    tol: float = 1e-8

    def __post_init__(self) -> None:
        require_valid(self.init)
        n = self.init.n
        free_phi = np.asarray(self.free_phi, dtype=bool)
        free_lam = np.asarray(self.free_lam, dtype=bool)
        if free_phi.shape != (n, n) or free_lam.shape != (n,):
            raise ValueError("free masks must have shapes (n, n) and (n,)")
        if not (free_phi.any() or free_lam.any()):
            raise ValueError("at least one parameter must be free")
        object.__setattr__(self, "free_phi", free_phi)
        object.__setattr__(self, "free_lam", free_lam)


@dataclass(frozen=True)
class FitResult:
    params: ModelParams
    log_likelihood: float
    iterations: int
    converged: bool
    message: str = ""


def _unpack(spec: FitSpec, theta: np.ndarray) -> ModelParams:
    phi = spec.init.phi.copy()
    lam = spec.init.lam.copy()
    k = int(spec.free_phi.sum())
    phi[spec.free_phi] = np.exp(theta[:k])
    lam[spec.free_lam] = np.exp(theta[k:])
    return ModelParams(n=spec.init.n, phi=phi, lam=lam)


def fit_mle(spec: FitSpec, a0, obs: ObservationSet) -> FitResult:
    """Maximize the snapshot likelihood over the free parameters.

    Returns the best parameters found together with the achieved likelihood
    and a convergence flag; non-convergence is reported, not raised.
    """
    free_init = np.concatenate(
        [spec.init.phi[spec.free_phi], spec.init.lam[spec.free_lam]]
    )
    theta0 = np.log(np.maximum(free_init, _LOG_FLOOR))

    def objective(theta: np.ndarray) -> float:
        try:
            return -log_likelihood(_unpack(spec, theta), a0, obs)
        except NumericError:
            return 1e300

    res = scipy.optimize.minimize(
        objective,
        theta0,
        method="Nelder-Mead",
        options={
            "maxiter": spec.max_iter,
            "xatol": spec.tol,
            "fatol": spec.tol,
        },
    )
    return FitResult(
        params=_unpack(spec, res.x),
        log_likelihood=-float(res.fun),
        iterations=int(res.nit),
        converged=bool(res.success),
        message=str(res.message),
    )


# --- CSV interchange ---------------------------------------------------------
#
# Header: t,a_1..a_N; one row per observation.


def read_observations_csv(path, a0) -> ObservationSet:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty observations file")
    header = rows[0]
    n = len(header) - 1
    if n < 1 or header != ["t"] + [f"a_{i + 1}" for i in range(n)]:
        raise ValueError(f"{path}: line 1: expected header t,a_1..a_N, got {','.join(header)!r}")
    times = []
    values = []
    for i, row in enumerate(rows[1:]):
        if len(row) != n + 1:
            raise ValueError(f"{path}: line {i + 2}: expected {n + 1} fields, got {len(row)}")
        try:
            times.append(float(row[0]))
            values.append([float(v) for v in row[1:]])
        except ValueError:
            raise ValueError(f"{path}: line {i + 2}: non-numeric value") from None
    return ObservationSet(times=np.array(times), values=np.array(values), a0=np.asarray(a0, float))


def write_observations_csv(path, obs: ObservationSet) -> None:
    lines = [",".join(["t"] + [f"a_{i + 1}" for i in range(obs.n)])]
    for t, row in zip(obs.times, obs.values):
        lines.append(",".join([repr(float(t))] + [repr(float(v)) for v in row]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
