"""Parameters and Fokker-Planck coefficients of the firm-growth model.

Each of the ``n`` firms carries a net-worth ``a_i(t)``.  Sales income raises
it at rate ``phi[i, j] * a_j`` (firm ``j``'s worth feeds firm ``i``'s income)
and expenditure lowers it at rate ``lam[i] * a_i``; both flows carry
square-root noise, so the joint density evolves under a linear drift matrix
and a state-linear diffusion tensor.  This module owns the parameter
container, the coefficient builders, and the JSON parameter document used by
the command-line tools.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "ModelParams",
    "NetWorthVector",
    "ParamsDocument",
    "build_drift_matrix",
    "build_diffusion_tensor",
    "validate_params",
    "require_valid",
    "as_nonnegative_vector",
    "load_params",
    "save_params",
]


def _frozen(values, shape=None) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    if shape is not None and arr.shape != shape:
        # kept as-is; validate_params reports the mismatch
        pass
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ModelParams:
    """Trade rates ``phi`` (n x n, 1/day) and expenditure rates ``lam`` (n, 1/day).

    ``phi[i, j]`` is the rate at which firm ``j``'s net-worth generates income
    for firm ``i``; ``lam[i]`` is firm ``i``'s proportional outflow rate.
    Instances are immutable (arrays are read-only) and safe to share across
    threads.  Construction does not validate; see :func:`validate_params`.
    """

    n: int
    phi: np.ndarray
    lam: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "phi", _frozen(self.phi))
        object.__setattr__(self, "lam", _frozen(self.lam))


@dataclass(frozen=True)
class NetWorthVector:
    """A snapshot of all net-worths (currency units) at time ``t`` (days)."""

    a: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "a", _frozen(self.a))


def validate_params(params: ModelParams) -> list[str]:
    """Return a list of invariant violations; empty iff ``params`` is valid.

    Checks shapes against ``n``, nonnegativity, and finiteness, naming each
    offending entry (e.g. ``"negative lambda[0]"``).
    """
    issues: list[str] = []
    n = params.n
    if not isinstance(n, (int, np.integer)) or n <= 0:
        issues.append(f"n must be a positive integer, got {n!r}")
        return issues
    phi, lam = params.phi, params.lam
    if phi.shape != (n, n):
        issues.append(f"phi shape {phi.shape} does not match n={n}")
    if lam.shape != (n,):
        issues.append(f"lambda shape {lam.shape} does not match n={n}")
    if issues:
        return issues
    for i in range(n):
        for j in range(n):
            v = phi[i, j]
            if not np.isfinite(v):
                issues.append(f"non-finite phi[{i},{j}]")
            elif v < 0:
                issues.append(f"negative phi[{i},{j}]")
    for i in range(n):
        v = lam[i]
        if not np.isfinite(v):
            issues.append(f"non-finite lambda[{i}]")
        elif v < 0:
            issues.append(f"negative lambda[{i}]")
    return issues


def require_valid(params: ModelParams) -> None:
    """Raise ``ValueError`` listing all violations if ``params`` is invalid."""
    issues = validate_params(params)
    if issues:
        raise ValueError("invalid model parameters: " + "; ".join(issues))


def as_nonnegative_vector(x, n: int, name: str = "a0") -> np.ndarray:
    """Coerce ``x`` to a finite nonnegative float vector of length ``n``."""
    arr = np.asarray(x, dtype=float)
    if arr.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    if np.any(arr < 0):
        raise ValueError(f"{name} contains negative entries")
    return arr.copy()


def build_drift_matrix(params: ModelParams) -> np.ndarray:
    """Drift matrix of the mean dynamics: ``phi - diag(lam)`` (units 1/day).

    Off-diagonal entries equal ``phi[i, j]`` and are nonnegative; the diagonal
    is ``phi[i, i] - lam[i]``.
    """
    require_valid(params)
    return params.phi - np.diag(params.lam)


def build_diffusion_tensor(params: ModelParams) -> np.ndarray:
    """State-linear diffusion coefficients ``b[i, j, k]`` (units 1/day).

    The instantaneous covariance rate of the noise is ``sum_k b[i, j, k] a_k``
    with

        b[i, i, k] = phi[i, k] + lam[i] * delta(i, k)
        b[i, j, k] = sqrt(phi[i, k] * phi[j, k])   for i != j

    The off-diagonal branch encodes income noise shared through a common
    supplier ``k``; the tensor is symmetric in its first two indices by
    construction.
    """
    require_valid(params)
    n = params.n
    s = np.sqrt(params.phi)
    b = np.einsum("ik,jk->ijk", s, s)
    idx = np.arange(n)
    b[idx, idx, :] = params.phi
    b[idx, idx, idx] += params.lam
    return b


# --- JSON parameter documents -------------------------------------------------
#
# Canonical layout:
#   {"n": int, "phi": [[row-major floats]], "lambda": [floats],
#    "a0": [floats] (optional), "labels": [...] (optional),
#    "calibration": {...} (optional), "fit_report": {...} (optional)}


@dataclass(frozen=True)
class ParamsDocument:
    """A parameter file: model parameters plus optional initial worths,
    sector labels, and provenance blocks."""

    params: ModelParams
    a0: np.ndarray | None = None
    labels: list[str] | None = None
    calibration: dict | None = None
    fit_report: dict | None = None


def params_to_dict(doc: ParamsDocument) -> dict:
    out: dict = {
        "n": int(doc.params.n),
        "phi": [[float(v) for v in row] for row in doc.params.phi],
        "lambda": [float(v) for v in doc.params.lam],
    }
    if doc.a0 is not None:
        out["a0"] = [float(v) for v in doc.a0]
    if doc.labels is not None:
        out["labels"] = list(doc.labels)
    if doc.calibration is not None:
        out["calibration"] = doc.calibration
    if doc.fit_report is not None:
        out["fit_report"] = doc.fit_report
    return out


def params_from_dict(data: dict) -> ParamsDocument:
    try:
        n = int(data["n"])
        phi = data["phi"]
        lam = data["lambda"]
    except KeyError as exc:
        raise ValueError(f"parameter document missing key {exc}") from None
    params = ModelParams(n=n, phi=np.asarray(phi, float), lam=np.asarray(lam, float))
    require_valid(params)
    a0 = None
    if data.get("a0") is not None:
        a0 = as_nonnegative_vector(data["a0"], n, name="a0")
    labels = list(data["labels"]) if data.get("labels") is not None else None
    if labels is not None and len(labels) != n:
        raise ValueError(f"labels length {len(labels)} does not match n={n}")
    return ParamsDocument(
        params=params,
        a0=a0,
        labels=labels,
        calibration=data.get("calibration"),
        fit_report=data.get("fit_report"),
    )


def load_params(path) -> ParamsDocument:
    """Read a parameter JSON document from ``path``."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a JSON object at top level")
    return params_from_dict(data)


def save_params(path, doc: ParamsDocument) -> None:
    """Write a parameter JSON document.  Output bytes are a pure function of
    the document contents (no timestamps), so identical inputs give identical
    files."""
    Path(path).write_text(json.dumps(params_to_dict(doc), indent=2) + "\n", encoding="utf-8")
