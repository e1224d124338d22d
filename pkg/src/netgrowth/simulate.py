"""Euler-Maruyama Monte Carlo simulation of the firm-growth dynamics.

The continuous dynamics for firm ``i`` are

    da_i = (sum_j phi[i,j] a_j - lam[i] a_i) dt
         + sum_j sqrt(phi[i,j] a_j) dW_inc_j - sqrt(lam[i] a_i) dW_exp_i

Income noise is indexed by the SOURCE firm ``j`` and shared by every
recipient of ``j``'s trade flow; this is what produces the
``sqrt(phi[i,k] phi[j,k])`` cross-covariance of the diffusion tensor
(independent per-(i,j) draws would kill it).  Expenditure noise is one
independent draw per firm.  States are clamped at zero after every step;
square-root arguments are nonnegative by construction.

Reproducibility: path ``p`` draws its noise from counter-based Philox
streams keyed by ``(seed, p, window)``, where windows cover the step axis in
a fixed layout, so its trajectory is a pure function of
``(seed, p, params, a0, dt)`` no matter how paths are chunked or how many
worker threads execute the chunks.  Paths are processed in fixed-size chunks
that worker threads pick up and write to disjoint slices of the output, so
two runs with the same seed are bitwise identical at any thread cap.
"""

from __future__ import annotations

import concurrent.futures
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import ModelParams, as_nonnegative_vector, require_valid
from .moments import MomentState

__all__ = [
    "SimConfig",
    "PathEnsemble",
    "em_step",
    "run_monte_carlo",
    "empirical_moments",
    "empirical_quantile",
    "write_ensemble_csv",
    "write_ensemble_binary",
    "read_ensemble_binary",
]

THREADS_ENV = "NETGROWTH_THREADS"

_CHUNK = 4096  # fixed so chunk boundaries never depend on the thread cap
_NOISE_ELEMENTS = 2048  # noise values materialized per path per window
_DEFAULT_MEMORY_CAP = 4 * 2**30


@dataclass(frozen=True)
class SimConfig:
    """Discretization and ensemble settings.

    ``boundary`` names the treatment at ``a_i <= 0``; the only supported
    policy clamps states at zero after each step.
    """

    dt: float
    t_end: float
    paths: int
    seed: int
    boundary: str = "clamp_zero"

    def __post_init__(self) -> None:
        if not (0 < self.dt <= self.t_end):
            raise ValueError(f"need 0 < dt <= t_end, got dt={self.dt}, t_end={self.t_end}")
        if self.paths < 1:
            raise ValueError("paths must be >= 1")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must fit in 64 bits")
        if self.boundary != "clamp_zero":
            raise ValueError(f"unsupported boundary policy {self.boundary!r}")


@dataclass(frozen=True)
class PathEnsemble:
    """Recorded sample paths: ``values[p, g, i]`` is firm ``i`` on path ``p``
    at ``times[g]``.  Seed and config are echoed for provenance."""

    times: np.ndarray
    values: np.ndarray
    seed: int
    config: SimConfig

    @property
    def n(self) -> int:
        return self.values.shape[2]

    def time_index(self, t: float) -> int:
        hits = np.nonzero(np.abs(self.times - t) <= 1e-9 * max(1.0, abs(t)))[0]
        if hits.size == 0:
            raise ValueError(f"time {t} was not recorded (grid: {self.times.tolist()})")
        return int(hits[0])


def _em_core(a, phi, sqrt_phi, lam, sqrt_lam, dt, sqrt_dt, w_inc, w_exp):
    # sqrt(phi_ij a_j) factorizes as sqrt(phi_ij) sqrt(a_j), so the shared
    # income noise contracts in a single einsum without a rank-3 temporary.
    sqrt_a = np.sqrt(a)
    drift = np.einsum("ij,...j->...i", phi, a) - lam * a
    diffusion = (
        np.einsum("ij,...j->...i", sqrt_phi, sqrt_a * w_inc) - sqrt_lam * sqrt_a * w_exp
    )
    return np.maximum(a + dt * drift + sqrt_dt * diffusion, 0.0)


def em_step(a, params: ModelParams, dt: float, noise_income, noise_expend) -> np.ndarray:
    """One Euler-Maruyama step; accepts a single state ``(n,)`` or a batch
    ``(..., n)``.

    The noise arguments are raw standard normal draws (the ``sqrt(dt)``
    scaling happens here).  ``noise_income[..., j]`` is the draw of source
    firm ``j``, shared across recipients; ``noise_expend[..., i]`` is firm
    ``i``'s own expenditure draw.  The result is clamped at zero.
    """
    require_valid(params)
    a = np.asarray(a, dtype=float)
    if a.shape[-1] != params.n:
        raise ValueError(f"state has {a.shape[-1]} firms, parameters have {params.n}")
    if np.any(a < 0):
        raise ValueError("net-worth state must be nonnegative")
    w_inc = np.asarray(noise_income, dtype=float)
    w_exp = np.asarray(noise_expend, dtype=float)
    if w_inc.shape != a.shape or w_exp.shape != a.shape:
        raise ValueError("noise vectors must match the state shape")
    return _em_core(
        a,
        params.phi,
        np.sqrt(params.phi),
        params.lam,
        np.sqrt(params.lam),
        dt,
        np.sqrt(dt),
        w_inc,
        w_exp,
    )


class _PathStreams:
    """Counter-based noise streams: subkey ``s`` reads the Philox stream with
    key ``(seed, s)`` from counter zero, so draws are a pure function of
    ``(seed, s)``.  Path ``p`` consumes the subkeys ``(p << 32) | window`` in
    window order.  One bit generator per instance, re-keyed per draw (cheap);
    each worker chunk owns its own instance."""

    def __init__(self, seed: int):
        self._bg = np.random.Philox(key=np.uint64(0))
        self._gen = np.random.Generator(self._bg)
        self._template = self._bg.state
        self._seed = np.uint64(seed)

    def draw(self, subkey: int, shape) -> np.ndarray:
        state = dict(self._template)
        state["state"] = {
            "counter": np.zeros(4, dtype=np.uint64),
            "key": np.array([self._seed, np.uint64(subkey)], dtype=np.uint64),
        }
        state["buffer_pos"] = 4
        state["has_uint32"] = 0
        state["uinteger"] = 0
        self._bg.state = state
        return self._gen.standard_normal(shape)


def _resolve_threads() -> int:
    threads = os.cpu_count() or 1
    cap = os.environ.get(THREADS_ENV)
    if cap is not None:
        try:
            cap_val = int(cap)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {cap!r}") from None
        if cap_val < 1:
            raise ValueError(f"{THREADS_ENV} must be >= 1")
        threads = min(threads, cap_val)
    return threads


def run_monte_carlo(
    params: ModelParams,
    a0,
    config: SimConfig,
    record_grid,
    memory_cap: int = _DEFAULT_MEMORY_CAP,
) -> PathEnsemble:
    """Simulate ``config.paths`` independent paths, recording at ``record_grid``.

    Every grid time must be a multiple of ``config.dt`` inside
    ``[0, config.t_end]``.  Output is deterministic given ``(seed, config,
    params, a0)`` regardless of scheduling; the ``NETGROWTH_THREADS``
    environment variable caps worker threads.
    """
    require_valid(params)
    a0 = as_nonnegative_vector(a0, params.n)
    n = params.n
    dt = config.dt

    grid = [float(g) for g in record_grid]
    if not grid:
        raise ValueError("record_grid must be non-empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("record_grid must be strictly ascending")
    record_steps = []
    for g in grid:
        k = round(g / dt)
        if abs(k * dt - g) > 1e-9 * max(1.0, abs(g)) or g < 0 or g > config.t_end + 1e-9:
            raise ValueError(f"record time {g} is not a multiple of dt={dt} within [0, t_end]")
        record_steps.append(int(k))

    need = config.paths * len(grid) * n * 8
    if need > memory_cap:
        raise MemoryError(
            f"ensemble needs {need} bytes (paths x grid x n doubles), cap is {memory_cap}"
        )
    if config.paths >= 2**32:
        raise ValueError("paths must be below 2**32")

    n_steps = max(record_steps)
    step_row = {s: i for i, s in enumerate(record_steps)}
    out = np.empty((config.paths, len(grid), n))

    sqrt_phi = np.sqrt(params.phi)
    sqrt_lam = np.sqrt(params.lam)
    sqrt_dt = np.sqrt(dt)
    # Steps of noise materialized per path at a time; a function of n only,
    # so the noise layout never depends on the grid or the thread cap.
    window_steps = max(1, _NOISE_ELEMENTS // (2 * n))

    def simulate_chunk(p_lo: int, p_hi: int) -> None:
        count = p_hi - p_lo
        streams = _PathStreams(config.seed)
        state = np.tile(a0, (count, 1))
        if 0 in step_row:
            out[p_lo:p_hi, step_row[0]] = state
        step = 0
        window = 0
        while step < n_steps:
            w_steps = min(window_steps, n_steps - step)
            noise = np.empty((count, w_steps, 2 * n))
            for i in range(count):
                subkey = ((p_lo + i) << 32) | window
                noise[i] = streams.draw(subkey, (w_steps, 2 * n))
            window += 1
            for w in range(w_steps):
                step += 1
                draws = noise[:, w, :]
                state = _em_core(
                    state, params.phi, sqrt_phi, params.lam, sqrt_lam,
                    dt, sqrt_dt, draws[:, :n], draws[:, n:],
                )
                row = step_row.get(step)
                if row is not None:
                    out[p_lo:p_hi, row] = state

    bounds = [(lo, min(lo + _CHUNK, config.paths)) for lo in range(0, config.paths, _CHUNK)]
    threads = _resolve_threads()
    if threads == 1 or len(bounds) == 1:
        for lo, hi in bounds:
            simulate_chunk(lo, hi)
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            for future in [pool.submit(simulate_chunk, lo, hi) for lo, hi in bounds]:
                future.result()

    return PathEnsemble(times=np.array(grid), values=out, seed=config.seed, config=config)


def empirical_moments(ensemble: PathEnsemble, t: float) -> MomentState:
    """Sample mean and sample covariance (denominator ``paths - 1``) at a
    recorded time."""
    idx = ensemble.time_index(t)
    snap = ensemble.values[:, idx, :]
    mean = snap.mean(axis=0)
    if snap.shape[0] < 2:
        cov = np.zeros((ensemble.n, ensemble.n))
    else:
        centered = snap - mean
        cov = centered.T @ centered / (snap.shape[0] - 1)
    return MomentState(t=float(t), mean=mean, cov=cov)


def empirical_quantile(ensemble: PathEnsemble, firm: int, t: float, q: float) -> float:
    """Order-statistic quantile (linear interpolation between ranks) of one
    firm's recorded values."""
    if not (0.0 < q < 1.0):
        raise ValueError("q must lie in (0, 1)")
    if not (0 <= firm < ensemble.n):
        raise ValueError(f"firm index {firm} out of range for n={ensemble.n}")
    idx = ensemble.time_index(t)
    return float(np.quantile(ensemble.values[:, idx, firm], q))


# --- Export formats --------------------------------------------------------
#
# CSV rows are path-major: path,t,a_1..a_N.  The binary layout is
#   b"NGSIM1" | <QQQQd: seed, paths, times, n, dt> | times (f8) | values (f8, C-order)
# with everything little-endian.

_MAGIC = b"NGSIM1"
_HEADER = struct.Struct("<QQQQd")


def write_ensemble_csv(path, ensemble: PathEnsemble) -> None:
    n = ensemble.n
    header = "path,t," + ",".join(f"a_{i + 1}" for i in range(n))
    lines = [header]
    times = ensemble.times
    for p in range(ensemble.values.shape[0]):
        for g, t in enumerate(times):
            vals = ensemble.values[p, g]
            lines.append(f"{p},{t!r}," + ",".join(repr(float(v)) for v in vals))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_ensemble_binary(path, ensemble: PathEnsemble) -> None:
    paths, n_times, n = ensemble.values.shape
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(_HEADER.pack(ensemble.seed, paths, n_times, n, ensemble.config.dt))
        fh.write(np.ascontiguousarray(ensemble.times, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ensemble.values, dtype="<f8").tobytes())


def read_ensemble_binary(path) -> PathEnsemble:
    raw = Path(path).read_bytes()
    if raw[: len(_MAGIC)] != _MAGIC:
        raise ValueError(f"{path}: not an ensemble file (bad magic)")
    off = len(_MAGIC)
    seed, paths, n_times, n, dt = _HEADER.unpack_from(raw, off)
    off += _HEADER.size
    times = np.frombuffer(raw, dtype="<f8", count=n_times, offset=off).astype(float)
    off += n_times * 8
    values = np.frombuffer(raw, dtype="<f8", count=paths * n_times * n, offset=off)
    values = values.astype(float).reshape(paths, n_times, n)
    t_end = float(times[-1]) if times[-1] > 0 else dt
    config = SimConfig(dt=dt, t_end=t_end, paths=int(paths), seed=int(seed))
    return PathEnsemble(times=times, values=values, seed=int(seed), config=config)
