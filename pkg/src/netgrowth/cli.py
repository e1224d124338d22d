"""Command-line front end: file-in/file-out runs of calibration, moments,
simulation, risk curves, and fitting.

Every command is a pure function of its input files, flags, and seed, so
repeated runs produce byte-identical payloads; run metadata (digests, seed,
version, duration) goes into a ``<output>.manifest.json`` sidecar whose
timestamp fields are the only non-reproducible bytes.

Exit codes: 0 success, 2 usage/parse/validation failure, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from dataclasses import dataclass, asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import CalibrationConfig, calibrate, read_growth_csv, read_io_table_csv
from .errors import NumericError
from .inference import FitSpec, fit_mle, read_observations_csv
from .model import ParamsDocument, load_params, save_params
from .moments import closed_form_moment_trajectory, write_moments_csv
from .risk import risk_curve, write_risk_csv
from .simulate import (
    SimConfig,
    empirical_moments,
    run_monte_carlo,
    write_ensemble_binary,
    write_ensemble_csv,
)

__all__ = ["main", "run"]


@dataclass
class RunManifest:
    command: str
    options: dict
    inputs: dict
    output: str
    output_sha256: str
    seed: int | None
    version: str
    duration_s: float
    created_utc: str


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_manifests(command, options, input_paths, outputs, seed, started):
    duration = time.monotonic() - started
    inputs = {str(p): _sha256(p) for p in input_paths}
    stamp = datetime.now(timezone.utc).isoformat()
    for out in outputs:
        manifest = RunManifest(
            command=command,
            options=options,
            inputs=inputs,
            output=str(out),
            output_sha256=_sha256(out),
            seed=seed,
            version=__version__,
            duration_s=duration,
            created_utc=stamp,
        )
        Path(str(out) + ".manifest.json").write_text(
            json.dumps(asdict(manifest), indent=2) + "\n", encoding="utf-8"
        )


def _time_grid(t_max: float, step: float) -> list[float]:
    if t_max < 0 or step <= 0:
        raise ValueError("need t_max >= 0 and step > 0")
    count = int(round(t_max / step)) if t_max > 0 else 0
    if abs(count * step - t_max) > 1e-9 * max(1.0, t_max):
        count = int(t_max / step + 1e-12)
    return [i * step for i in range(count + 1)]


def _load_doc_with_a0(path) -> ParamsDocument:
    doc = load_params(path)
    if doc.a0 is None:
        raise ValueError(f"{path}: parameter document lacks the initial worths 'a0'")
    return doc


def _resolve_sector(token: str, doc: ParamsDocument) -> int:
    n = doc.params.n
    try:
        idx = int(token)
    except ValueError:
        idx = None
    if idx is not None:
        if not (0 <= idx < n):
            raise ValueError(f"sector index {idx} out of range 0..{n - 1}")
        return idx
    if doc.labels is not None and token in doc.labels:
        return doc.labels.index(token)
    valid = doc.labels if doc.labels is not None else [str(i) for i in range(n)]
    raise ValueError(f"unknown sector {token!r}; valid sectors: {valid}")


def cmd_calibrate(args) -> int:
    started = time.monotonic()
    table = read_io_table_csv(args.io_table)
    growth = read_growth_csv(args.growth, table.labels)
    config = CalibrationConfig(
        time_unit_days=args.time_unit, firm_share=args.share, growth_rates=growth
    )
    doc = calibrate(table, config)
    provenance = dict(doc.calibration or {})
    provenance["source_files"] = {
        "io_table": str(args.io_table),
        "growth": str(args.growth),
    }
    doc = ParamsDocument(
        params=doc.params, a0=doc.a0, labels=doc.labels, calibration=provenance
    )
    save_params(args.output, doc)
    _write_manifests(
        "calibrate",
        {"io_table": str(args.io_table), "growth": str(args.growth),
         "share": args.share, "time_unit": args.time_unit, "output": str(args.output)},
        [args.io_table, args.growth],
        [args.output],
        None,
        started,
    )
    return 0


def cmd_moments(args) -> int:
    started = time.monotonic()
    doc = _load_doc_with_a0(args.params)
    grid = _time_grid(args.t_max, args.step)
    states = closed_form_moment_trajectory(doc.params, doc.a0, grid)
    write_moments_csv(args.output, states)
    _write_manifests(
        "moments",
        {"params": str(args.params), "t_max": args.t_max, "step": args.step,
         "output": str(args.output)},
        [args.params],
        [args.output],
        None,
        started,
    )
    return 0


def cmd_simulate(args) -> int:
    started = time.monotonic()
    doc = _load_doc_with_a0(args.params)
    config = SimConfig(dt=args.dt, t_end=args.t_max, paths=args.paths, seed=args.seed)
    grid = _time_grid(args.t_max, args.record_step)
    ensemble = run_monte_carlo(doc.params, doc.a0, config, grid)
    if args.binary:
        write_ensemble_binary(args.output, ensemble)
    else:
        write_ensemble_csv(args.output, ensemble)
    moments_path = args.moments_out or str(Path(args.output).with_suffix("")) + ".moments.csv"
    write_moments_csv(moments_path, [empirical_moments(ensemble, t) for t in grid])
    _write_manifests(
        "simulate",
        {"params": str(args.params), "paths": args.paths, "dt": args.dt,
         "t_max": args.t_max, "record_step": args.record_step, "seed": args.seed,
         "binary": bool(args.binary), "output": str(args.output),
         "moments_out": moments_path},
        [args.params],
        [args.output, moments_path],
        args.seed,
        started,
    )
    return 0


def cmd_risk(args) -> int:
    started = time.monotonic()
    doc = _load_doc_with_a0(args.params)
    source = _resolve_sector(args.source, doc)
    grid = _time_grid(args.t_max, args.step)
    curve = risk_curve(doc.params, doc.a0, source, args.q, grid, labels=doc.labels)
    write_risk_csv(args.output, curve)
    outputs = [args.output]
    if args.ranking:
        t_last = grid[-1]
        final = sorted(
            (curve.at(t_last, i) for i in range(doc.params.n)),
            key=lambda pt: abs(pt.risk),
            reverse=True,
        )
        with open(args.ranking, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["rank", "i", "sector_label", "R"])
            for rank, pt in enumerate(final, start=1):
                writer.writerow([rank, pt.firm, curve.label(pt.firm), repr(pt.risk)])
        outputs.append(args.ranking)
    _write_manifests(
        "risk",
        {"params": str(args.params), "source": args.source, "q": args.q,
         "t_max": args.t_max, "step": args.step, "output": str(args.output),
         "ranking": str(args.ranking) if args.ranking else None},
        [args.params],
        outputs,
        None,
        started,
    )
    return 0


def cmd_fit(args) -> int:
    started = time.monotonic()
    doc = _load_doc_with_a0(args.params_init)
    n = doc.params.n
    free_phi = np.zeros((n, n), dtype=bool)
    free_lam = np.zeros(n, dtype=bool)
    if args.free in ("phi", "both"):
        free_phi[:] = True
    if args.free in ("lambda", "both"):
        free_lam[:] = True
    spec = FitSpec(init=doc.params, free_phi=free_phi, free_lam=free_lam,
                   max_iter=args.max_iter)
    obs = read_observations_csv(args.data, doc.a0)
    result = fit_mle(spec, doc.a0, obs)
    fitted = ParamsDocument(
        params=result.params,
        a0=doc.a0,
        labels=doc.labels,
        fit_report={
            "log_likelihood": result.log_likelihood,
            "iterations": result.iterations,
            "converged": result.converged,
            "free": args.free,
        },
    )
    save_params(args.output, fitted)
    _write_manifests(
        "fit",
        {"params_init": str(args.params_init), "data": str(args.data),
         "free": args.free, "max_iter": args.max_iter, "output": str(args.output)},
        [args.params_init, args.data],
        [args.output],
        None,
        started,
    )
    if not result.converged:
        print(f"warning: optimizer did not converge ({result.message})", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netgrowth",
        description="Interdependent firm-growth model: calibration, moments, "
        "Monte Carlo, risk curves, and fitting.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="derive (phi, lambda, a0) from an input-output table")
    p.add_argument("--io-table", required=True, help="transaction table CSV (label,x_1..x_N,output)")
    p.add_argument("--growth", required=True, help="growth-rate CSV (label,annual_growth)")
    p.add_argument("--share", type=float, default=0.01, help="representative-firm production share")
    p.add_argument("--time-unit", type=float, default=365.0, help="days per table period")
    p.add_argument("-o", "--output", required=True, help="parameter JSON to write")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("moments", help="closed-form moment trajectory to CSV")
    p.add_argument("--params", required=True, help="parameter JSON (must include a0)")
    p.add_argument("--t-max", type=float, required=True, help="horizon, days")
    p.add_argument("--step", type=float, default=1.0, help="grid step, days")
    p.add_argument("-o", "--output", required=True, help="moments CSV to write")
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("simulate", help="Monte Carlo ensemble plus empirical moments")
    p.add_argument("--params", required=True, help="parameter JSON (must include a0)")
    p.add_argument("--paths", type=int, default=100_000, help="number of sample paths")
    p.add_argument("--dt", type=float, default=0.01, help="integration step, days")
    p.add_argument("--t-max", type=float, required=True, help="horizon, days")
    p.add_argument("--record-step", type=float, default=1.0, help="recording interval, days")
    p.add_argument("--seed", type=int, default=42, help="master seed")
    p.add_argument("--binary", action="store_true", help="write the compact binary layout")
    p.add_argument("--moments-out", default=None, help="empirical-moments CSV path")
    p.add_argument("-o", "--output", required=True, help="ensemble file to write")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("risk", help="VaR/CVaR/relative-risk curves against a stressed sector")
    p.add_argument("--params", required=True, help="parameter JSON (must include a0)")
    p.add_argument("--source", required=True, help="stressed sector: 0-based index or exact label")
    p.add_argument("--q", type=float, default=0.01, help="probability level in (0, 1)")
    p.add_argument("--t-max", type=float, required=True, help="horizon, days")
    p.add_argument("--step", type=float, default=1.0, help="grid step, days")
    p.add_argument("--ranking", default=None, help="also write sectors ranked by |R| at t-max")
    p.add_argument("-o", "--output", required=True, help="risk CSV to write")
    p.set_defaults(func=cmd_risk)

    p = sub.add_parser("fit", help="maximum-likelihood fit of selected parameters")
    p.add_argument("--params-init", required=True, help="starting parameter JSON (must include a0)")
    p.add_argument("--data", required=True, help="observations CSV (t,a_1..a_N)")
    p.add_argument("--free", choices=["lambda", "phi", "both"], default="lambda",
                   help="which parameter block to estimate")
    p.add_argument("--max-iter", type=int, default=2000, help="optimizer iteration cap")
    p.add_argument("-o", "--output", required=True, help="fitted parameter JSON to write")
    p.set_defaults(func=cmd_fit)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MemoryError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (NumericError, np.linalg.LinAlgError, FloatingPointError, OverflowError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


def run() -> None:
    raise SystemExit(main())
