"""Input-output table ingestion and parameter calibration.

An annual inter-sector transaction table yields input coefficients
``c[i, j] = transactions[i, j] / output[j]`` (sector i's product per unit
output of sector j).  Dividing by the day count per year turns them into
daily trade rates.  Expenditure rates then follow from the growth balance at
t = 0: a sector growing at daily rate ``g_i`` from worth ``a0_i`` must spend
at ``lam_i = (sum_j phi_ij a0_j) / a0_i - g_i`` (clamped at zero).
Representative firms start at a fixed share of their sector's output, with
the rate parameters unchanged; linear drift scales with the mean while the
square-root noise does not, so relative fluctuations are larger at small
scale.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import ModelParams, ParamsDocument, _frozen

__all__ = [
    "IoTable",
    "CalibrationConfig",
    "leontief_coefficients",
    "calibrate_phi",
    "calibrate_lambda",
    "representative_firm_initials",
    "calibrate",
    "read_io_table_csv",
    "read_growth_csv",
]


@dataclass(frozen=True)
class IoTable:
    """Inter-sector transactions (currency/year; entry (i, j) is purchases of
    sector i's product by sector j) and total sector outputs."""

    labels: list[str]
    transactions: np.ndarray
    outputs: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "labels", list(self.labels))
        object.__setattr__(self, "transactions", _frozen(self.transactions))
        object.__setattr__(self, "outputs", _frozen(self.outputs))
        n = len(self.labels)
        if self.transactions.shape != (n, n):
            raise ValueError(
                f"transactions shape {self.transactions.shape} does not match {n} labels"
            )
        if self.outputs.shape != (n,):
            raise ValueError(f"outputs shape {self.outputs.shape} does not match {n} labels")
        if not np.all(np.isfinite(self.transactions)) or np.any(self.transactions < 0):
            raise ValueError("transactions must be finite and nonnegative")
        if not np.all(np.isfinite(self.outputs)) or np.any(self.outputs <= 0):
            raise ValueError("outputs must be finite and strictly positive")
        col_use = self.transactions.sum(axis=0)
        bad = np.nonzero(col_use > self.outputs * (1 + 1e-9))[0]
        if bad.size:
            j = int(bad[0])
            raise ValueError(
                f"intermediate use of sector {self.labels[j]!r} ({col_use[j]}) exceeds "
                f"its output ({self.outputs[j]})"
            )

    @property
    def n_sectors(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class CalibrationConfig:
    """Unit conversion and representative-firm settings.

    ``growth_rates`` are ANNUAL fractions per sector; they are divided by
    ``time_unit_days`` wherever a daily rate is needed.
    """

    time_unit_days: float = 365.0
    firm_share: float = 0.01
    growth_rates: np.ndarray | None = None

    def __post_init__(self) -> None:
        if not (self.time_unit_days > 0):
            raise ValueError("time_unit_days must be positive")
        if not (0 < self.firm_share <= 1):
            raise ValueError("firm_share must lie in (0, 1]")
        if self.growth_rates is not None:
            object.__setattr__(self, "growth_rates", _frozen(self.growth_rates))


def leontief_coefficients(table: IoTable) -> np.ndarray:
    """Input coefficients ``c[i, j] = transactions[i, j] / output[j]``, all in
    [0, 1]."""
    if np.any(table.outputs <= 0):
        raise ValueError("cannot form coefficients with a zero output column")
    return table.transactions / table.outputs[np.newaxis, :]


def calibrate_phi(coefficients: np.ndarray, config: CalibrationConfig) -> np.ndarray:
    """Daily trade rates: annual input coefficients divided by the day count,
    so one year of coupling reproduces the annual coefficient."""
    c = np.asarray(coefficients, dtype=float)
    if np.any(c < 0) or np.any(c > 1):
        raise ValueError("input coefficients must lie in [0, 1]")
    return c / config.time_unit_days


def calibrate_lambda(phi: np.ndarray, a0, growth_daily) -> np.ndarray:
    """Expenditure rates from the growth balance at t = 0.

    ``lam_i = (sum_j phi_ij a0_j) / a0_i - g_i``; negative results are clamped
    to zero with a per-sector warning (the model cannot represent a sector
    whose required growth exceeds its income).
    """
    phi = np.asarray(phi, dtype=float)
    a0 = np.asarray(a0, dtype=float)
    g = np.asarray(growth_daily, dtype=float)
    if np.any(a0 <= 0):
        raise ValueError("initial worths must be strictly positive")
    lam = (phi @ a0) / a0 - g
    for i in np.nonzero(lam < 0)[0]:
        warnings.warn(
            f"sector {i}: balance gives negative expenditure rate {lam[i]:.3g}, clamping to 0",
            stacklevel=2,
        )
    return np.maximum(lam, 0.0)


def representative_firm_initials(outputs, config: CalibrationConfig) -> np.ndarray:
    """Initial worth of a representative firm holding ``firm_share`` of its
    sector's production."""
    out = np.asarray(outputs, dtype=float)
    if np.any(out <= 0):
        raise ValueError("outputs must be strictly positive")
    return config.firm_share * out


def calibrate(table: IoTable, config: CalibrationConfig) -> ParamsDocument:
    """Full pipeline: coefficients -> phi -> representative initials -> lambda.

    Requires ``config.growth_rates`` (annual); the returned document carries
    the calibrated parameters, the initial worths, the sector labels, and a
    provenance block.
    """
    if config.growth_rates is None:
        raise ValueError("calibration requires growth_rates in the config")
    g_annual = np.asarray(config.growth_rates, dtype=float)
    if g_annual.shape != (table.n_sectors,):
        raise ValueError(
            f"growth_rates shape {g_annual.shape} does not match {table.n_sectors} sectors"
        )
    coeff = leontief_coefficients(table)
    phi = calibrate_phi(coeff, config)
    a0 = representative_firm_initials(table.outputs, config)
    lam = calibrate_lambda(phi, a0, g_annual / config.time_unit_days)
    params = ModelParams(n=table.n_sectors, phi=phi, lam=lam)
    provenance = {
        "firm_share": config.firm_share,
        "time_unit_days": config.time_unit_days,
        "growth_rates_annual": [float(v) for v in g_annual],
    }
    return ParamsDocument(
        params=params, a0=a0, labels=list(table.labels), calibration=provenance
    )


# --- CSV inputs ------------------------------------------------------------
#
# Canonical transaction-table layout (one row per selling sector):
#   label,x_1,...,x_N,output
# Growth-rate files: label,annual_growth.


def read_io_table_csv(path) -> IoTable:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = rows[0]
    if header and header[0] == "sector" and header[-1] == "total_output":
        raise ValueError(
            f"{path}: line 1: wide 'sector,...,total_output' layout is not supported; "
            "use the canonical header label,x_1..x_N,output"
        )
    n = len(header) - 2
    expected = ["label"] + [f"x_{j + 1}" for j in range(n)] + ["output"]
    if n < 1 or header != expected:
        raise ValueError(
            f"{path}: line 1: expected header label,x_1..x_N,output, got {','.join(header)!r}"
        )
    if len(rows) - 1 != n:
        raise ValueError(f"{path}: expected {n} sector rows to match header, got {len(rows) - 1}")
    labels: list[str] = []
    trans = np.zeros((n, n))
    outputs = np.zeros(n)
    for i, row in enumerate(rows[1:]):
        line_no = i + 2
        if len(row) != n + 2:
            raise ValueError(f"{path}: line {line_no}: expected {n + 2} fields, got {len(row)}")
        labels.append(row[0])
        try:
            trans[i] = [float(v) for v in row[1:-1]]
            outputs[i] = float(row[-1])
        except ValueError:
            raise ValueError(f"{path}: line {line_no}: non-numeric value") from None
    if len(set(labels)) != n:
        raise ValueError(f"{path}: sector labels must be unique")
    return IoTable(labels=labels, transactions=trans, outputs=outputs)


def read_growth_csv(path, labels: list[str]) -> np.ndarray:
    """Annual growth rates aligned to ``labels``; every sector must appear."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["label", "annual_growth"]:
        got = ",".join(rows[0]) if rows else "<empty>"
        raise ValueError(f"{path}: line 1: expected header label,annual_growth, got {got!r}")
    rates: dict[str, float] = {}
    for i, row in enumerate(rows[1:]):
        line_no = i + 2
        if len(row) != 2:
            raise ValueError(f"{path}: line {line_no}: expected 2 fields, got {len(row)}")
        label = row[0]
        if label in rates:
            raise ValueError(f"{path}: line {line_no}: duplicate label {label!r}")
        try:
            rates[label] = float(row[1])
        except ValueError:
            raise ValueError(f"{path}: line {line_no}: non-numeric growth rate") from None
    missing = [lb for lb in labels if lb not in rates]
    if missing:
        raise ValueError(f"{path}: missing growth rates for sectors {missing}")
    extra = [lb for lb in rates if lb not in labels]
    if extra:
        raise ValueError(f"{path}: growth rates for unknown sectors {extra}")
    return np.array([rates[lb] for lb in labels])
