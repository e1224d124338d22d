"""Moment dynamics of the firm-growth model.

With linear drift ``A`` and state-linear diffusion ``b`` the moments close at
every order: the mean and the central covariance satisfy

    d mean/dt = A @ mean
    d cov/dt  = A @ cov + cov @ A.T + D(mean),   D[i, j] = sum_k b[i, j, k] mean[k]

and the m-th order raw moments, flattened to a vector of length ``n**m``,
satisfy a linear system whose drift is the Kronecker sum of ``A`` over index
positions and whose inhomogeneity contracts ``b`` over unordered pairs of
index positions.

Two independent solution routes are provided and cross-checked in the test
suite:

* closed form -- matrix exponentials of a block-augmented generator, which
  evaluates the variation-of-constants integral exactly (the top-right block
  of ``expm([[A2, B2], [0, A]] * t)`` is the integral of
  ``expm(A2 (t-s)) B2 expm(A s)``);
* classical fixed-step RK4 integration of the coupled mean/covariance ODEs.

RK4 uses a fixed step so repeated runs are bit-reproducible.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import NumericError
from .model import (
    ModelParams,
    as_nonnegative_vector,
    build_diffusion_tensor,
    build_drift_matrix,
    require_valid,
)

__all__ = [
    "DEFAULT_SIDE_CAP",
    "MomentState",
    "MomentSystem",
    "build_moment_system",
    "matrix_exponential",
    "solve_moments_closed_form",
    "closed_form_moment_trajectory",
    "solve_moments_ode",
    "solve_higher_moments",
    "write_moments_csv",
    "read_moments_csv",
]

# Largest admitted side of a moment-system matrix (n**m).
DEFAULT_SIDE_CAP = 10**6


@dataclass(frozen=True)
class MomentState:
    """Mean vector and central covariance of the net-worths at time ``t``."""

    t: float
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if mean.ndim != 1:
            raise ValueError("mean must be a vector")
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"cov shape {cov.shape} does not match mean length {mean.size}")
        if self.t < 0:
            raise ValueError("t must be nonnegative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def n(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class MomentSystem:
    """Linear system ``d mu_m/dt = drift @ mu_m + source @ mu_{m-1}`` for the
    flattened m-th order moments.

    Row/column multi-indices ``(i_1, ..., i_m)`` are encoded in base-n
    big-endian order (C-order raveling), so ``drift`` is ``n**m`` square and
    ``source`` is ``n**m x n**(m-1)``.
    """

    order: int
    drift: np.ndarray
    source: np.ndarray


def _kron_sum(a: np.ndarray, m: int) -> np.ndarray:
    """Kronecker sum of ``a`` over ``m`` index positions."""
    n = a.shape[0]
    out = np.zeros((n**m, n**m))
    for p in range(m):
        out += np.kron(np.kron(np.eye(n**p), a), np.eye(n ** (m - 1 - p)))
    return out


def _check_side(n: int, m: int, side_cap: int) -> None:
    side = n**m
    if side > side_cap:
        raise ValueError(f"moment system side n**m = {side} exceeds cap {side_cap}")


def build_moment_system(
    params: ModelParams, m: int, side_cap: int = DEFAULT_SIDE_CAP
) -> MomentSystem:
    """Assemble the order-``m`` moment system from the model coefficients.

    The drift is the Kronecker sum of the mean-dynamics generator over the
    ``m`` index positions.  The source term accumulates, for every unordered
    pair ``(p, r)`` of index positions and every supplier index ``k``, the
    coefficient ``b[i_p, i_r, k]`` into the column whose multi-index is the
    surviving ``m - 2`` indices (in their original order) with ``k`` appended
    as the last base-n digit.  For ``m = 1`` the source is the ``n x 1`` zero
    matrix; the ``m = 2`` system reproduces the covariance ODE entrywise.
    """
    if m < 1:
        raise ValueError("moment order m must be >= 1")
    require_valid(params)
    n = params.n
    _check_side(n, m, side_cap)
    atil = build_drift_matrix(params)
    drift = _kron_sum(atil, m)
    source = np.zeros((n**m, n ** (m - 1)))
    if m >= 2:
        btil = build_diffusion_tensor(params)
        for row, idx in enumerate(np.ndindex(*(n,) * m)):
            for p in range(m):
                for r in range(p + 1, m):
                    base = 0
                    for q in range(m):
                        if q != p and q != r:
                            base = base * n + idx[q]
                    col0 = base * n
                    source[row, col0 : col0 + n] += btil[idx[p], idx[r], :]
    return MomentSystem(order=m, drift=drift, source=source)


def matrix_exponential(m_mat, t: float = 1.0, side_cap: int = DEFAULT_SIDE_CAP) -> np.ndarray:
    """Return ``expm(m_mat * t)`` (scaling-and-squaring with Pade approximants).

    Rejects non-finite input; raises :class:`NumericError` if the result
    overflows.
    """
    arr = np.asarray(m_mat, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {arr.shape}")
    if arr.shape[0] > side_cap:
        raise ValueError(f"matrix side {arr.shape[0]} exceeds cap {side_cap}")
    if not np.all(np.isfinite(arr)) or not math.isfinite(t):
        raise ValueError("matrix exponential input must be finite")
    out = scipy.linalg.expm(arr * t)
    if not np.all(np.isfinite(out)):
        raise NumericError("overflow in matrix exponential")
    return out


def _van_loan_blocks(a_top: np.ndarray, b_top: np.ndarray, a_bot: np.ndarray, t: float):
    """Exponentiate the block triangular ``[[a_top, b_top], [0, a_bot]] * t``.

    Returns ``(expm(a_top t), integral, expm(a_bot t))`` where ``integral`` is
    ``int_0^t expm(a_top (t-s)) b_top expm(a_bot s) ds``.
    """
    k = a_top.shape[0]
    r = a_bot.shape[0]
    blk = np.zeros((k + r, k + r))
    blk[:k, :k] = a_top
    blk[:k, k:] = b_top
    blk[k:, k:] = a_bot
    f = matrix_exponential(blk, t, side_cap=max(DEFAULT_SIDE_CAP, k + r))
    return f[:k, :k], f[:k, k:], f[k:, k:]


def _symmetrized(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.T)


def solve_moments_closed_form(params: ModelParams, a0, t: float) -> MomentState:
    """Mean and central covariance at time ``t`` from a deterministic start.

    ``mean(t) = expm(A t) @ a0``; the covariance starts at zero and is the
    variation-of-constants integral of the source term, evaluated exactly via
    the block-augmented exponential.
    """
    require_valid(params)
    a0 = as_nonnegative_vector(a0, params.n)
    if t < 0:
        raise ValueError("t must be nonnegative")
    n = params.n
    atil = build_drift_matrix(params)
    sys2 = build_moment_system(params, 2)
    _, integral, e_bot = _van_loan_blocks(sys2.drift, sys2.source, atil, t)
    mean = e_bot @ a0
    cov = _symmetrized((integral @ a0).reshape(n, n))
    return MomentState(t=t, mean=mean, cov=cov)


def closed_form_moment_trajectory(params: ModelParams, a0, times) -> list[MomentState]:
    """Closed-form moments at each time in ascending ``times`` (all >= 0).

    Propagates gap by gap with cached per-gap exponentials, so uniform grids
    cost a single block exponential regardless of length.
    """
    require_valid(params)
    a0 = as_nonnegative_vector(a0, params.n)
    ts = [float(t) for t in times]
    if not ts:
        raise ValueError("times must be non-empty")
    if ts[0] < 0 or any(b < a for a, b in zip(ts, ts[1:])):
        raise ValueError("times must be ascending and nonnegative")
    n = params.n
    atil = build_drift_matrix(params)
    sys2 = build_moment_system(params, 2)

    ops: dict[float, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def gap_ops(gap: float):
        cached = ops.get(gap)
        if cached is None:
            e_top, integral, e_bot = _van_loan_blocks(sys2.drift, sys2.source, atil, gap)
            cached = ops[gap] = (e_bot, e_top, integral)
        return cached

    mean = a0.copy()
    vec_cov = np.zeros(n * n)
    t_cur = 0.0
    out = []
    for t in ts:
        gap = t - t_cur
        if gap > 0.0:
            e_a, e_a2, integral = gap_ops(gap)
            vec_cov = e_a2 @ vec_cov + integral @ mean
            mean = e_a @ mean
            t_cur = t
        out.append(MomentState(t=t, mean=mean.copy(), cov=_symmetrized(vec_cov.reshape(n, n))))
    return out


def solve_moments_ode(
    params: ModelParams, a0, t_grid, step: float | None = None
) -> list[MomentState]:
    """Integrate the coupled mean/covariance ODEs with classical RK4.

    ``t_grid`` must start at 0 and be strictly ascending; states are reported
    at each grid time.  The step defaults to ``min(0.01, spacing / 10)`` and
    is fixed within each grid segment, so runs are bit-reproducible.  The
    covariance is re-symmetrized after every step.
    """
    require_valid(params)
    a0 = as_nonnegative_vector(a0, params.n)
    ts = [float(t) for t in t_grid]
    if not ts:
        raise ValueError("t_grid must be non-empty")
    if ts[0] != 0.0:
        raise ValueError("t_grid must start at 0")
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValueError("t_grid must be strictly ascending")
    spacing = min((b - a for a, b in zip(ts, ts[1:])), default=math.inf)
    h = step if step is not None else min(0.01, spacing / 10.0)
    if not (h > 0):
        raise ValueError("step must be positive")

    atil = build_drift_matrix(params)
    btil = build_diffusion_tensor(params)

    def deriv(mean, cov):
        d_mean = atil @ mean
        d_cov = atil @ cov + cov @ atil.T + np.einsum("ijk,k->ij", btil, mean)
        return d_mean, d_cov

    mean = a0.copy()
    cov = np.zeros((params.n, params.n))
    out = [MomentState(t=0.0, mean=mean.copy(), cov=cov.copy())]
    for t_a, t_b in zip(ts, ts[1:]):
        span = t_b - t_a
        n_sub = max(1, math.ceil(span / h - 1e-12))
        hh = span / n_sub
        for _ in range(n_sub):
            k1 = deriv(mean, cov)
            k2 = deriv(mean + 0.5 * hh * k1[0], cov + 0.5 * hh * k1[1])
            k3 = deriv(mean + 0.5 * hh * k2[0], cov + 0.5 * hh * k2[1])
            k4 = deriv(mean + hh * k3[0], cov + hh * k3[1])
            mean = mean + (hh / 6.0) * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
            cov = _symmetrized(cov + (hh / 6.0) * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]))
        out.append(MomentState(t=t_b, mean=mean.copy(), cov=cov.copy()))
    return out


def solve_higher_moments(
    params: ModelParams, a0, m: int, t: float, side_cap: int = DEFAULT_SIDE_CAP
) -> np.ndarray:
    """Raw m-th order moment vector (length ``n**m``) at time ``t``.

    Stacks the moment systems of orders ``0..m`` (``mu_0 = 1``) into one block
    lower-bidiagonal generator and exponentiates it once; this is the
    variation-of-constants recursion evaluated in closed form.  Initial
    moments are the tensor powers of ``a0`` (deterministic start).
    """
    if m < 1:
        raise ValueError("moment order m must be >= 1")
    require_valid(params)
    a0 = as_nonnegative_vector(a0, params.n)
    if t < 0:
        raise ValueError("t must be nonnegative")
    n = params.n
    _check_side(n, m, side_cap)
    sizes = [n**k for k in range(m + 1)]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = offsets[-1]
    gen = np.zeros((total, total))
    for k in range(1, m + 1):
        sys_k = build_moment_system(params, k, side_cap=side_cap)
        r0, r1 = offsets[k], offsets[k + 1]
        gen[r0:r1, r0:r1] = sys_k.drift
        gen[r0:r1, offsets[k - 1] : r0] = sys_k.source
    init = np.empty(total)
    block = np.array([1.0])
    init[0] = 1.0
    for k in range(1, m + 1):
        block = np.kron(block, a0)
        init[offsets[k] : offsets[k + 1]] = block
    out = matrix_exponential(gen, t, side_cap=max(side_cap, total)) @ init
    return out[offsets[m] : offsets[m + 1]]


# --- CSV interchange -----------------------------------------------------------
#
# Header: t,mu1_1..mu1_N,mu2_11,mu2_12,...,mu2_NN (covariance row-major, full).


def _moment_header(n: int) -> list[str]:
    cols = ["t"]
    cols += [f"mu1_{i + 1}" for i in range(n)]
    cols += [f"mu2_{i + 1}{j + 1}" for i in range(n) for j in range(n)]
    return cols


def write_moments_csv(path, states: list[MomentState]) -> None:
    """Write a moment trajectory; floats use shortest round-trip formatting."""
    if not states:
        raise ValueError("no states to write")
    n = states[0].n
    lines = [",".join(_moment_header(n))]
    for st in states:
        row = [repr(float(st.t))]
        row += [repr(float(v)) for v in st.mean]
        row += [repr(float(v)) for v in st.cov.ravel()]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_moments_csv(path) -> list[MomentState]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty moments file")
    header = rows[0]
    n = sum(1 for c in header if c.startswith("mu1_"))
    if header != _moment_header(n):
        raise ValueError(f"{path}: unexpected moments header {header!r}")
    states = []
    for row in rows[1:]:
        vals = [float(v) for v in row]
        t = vals[0]
        mean = np.array(vals[1 : 1 + n])
        cov = np.array(vals[1 + n :]).reshape(n, n)
        states.append(MomentState(t=t, mean=mean, cov=cov))
    return states
