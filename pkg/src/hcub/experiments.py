"""Benchmark sweeps: accuracy vs tolerance, worker scaling, idle breakdown.

Each sweep produces CSV rows (UTF-8, header row, comma separator, ``.``
decimal point) in which every row carries the full configuration, plus a
JSON manifest echoing the sweep definition, the engine version and an
ISO-8601 timestamp.  On the deterministic backend identical sweeps produce
byte-identical CSV files; timing columns then hold virtual units rather
than wall seconds.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .distributed import BACKENDS, RedistributionConfig, run_distributed
from .driver import DriverConfig
from .integrands import FUNCTION_IDS, make_integrand
from .regions import HyperRect
from .rules import UnsupportedDimensionError

__all__ = [
    "SpecError",
    "ExperimentSpec",
    "ACCURACY_COLUMNS",
    "SCALING_COLUMNS",
    "IDLE_COLUMNS",
    "run_accuracy_sweep",
    "run_scaling_sweep",
    "run_idle_breakdown",
    "write_rows",
    "write_manifest",
]


class SpecError(ValueError):
    """The sweep definition itself is unusable."""


@dataclass(frozen=True)
class ExperimentSpec:
    """Definition of one sweep: the axes plus fixed engine configuration.

    ``seed`` is echoed into the manifest for forward compatibility; no
    randomized tie-breaking exists today.
    """

    functions: tuple[str, ...]
    dims: tuple[int, ...]
    tolerances: tuple[float, ...]
    workers: tuple[int, ...] = (1,)
    rule: str = "gm"
    backend: str = "deterministic_sim"
    repetitions: int = 1
    seed: int = 0
    output_path: str = "results.csv"
    cap: int = 512
    init_per_rank: int = 8
    max_iterations: int = 1000

    def __post_init__(self):
        if not self.functions or not self.dims or not self.tolerances or not self.workers:
            raise SpecError("every sweep axis needs at least one entry")
        unknown = [f for f in self.functions if f not in FUNCTION_IDS]
        if unknown:
            raise SpecError(f"unknown functions {unknown}; valid ids are {list(FUNCTION_IDS)}")
        if any(d < 1 for d in self.dims):
            raise SpecError("dimensions must be >= 1")
        if any(not t > 0 for t in self.tolerances):
            raise SpecError("tolerances must be positive")
        if any(w < 1 for w in self.workers):
            raise SpecError("worker counts must be >= 1")
        if self.repetitions < 1:
            raise SpecError("repetitions must be >= 1")
        if self.backend not in BACKENDS:
            raise SpecError(f"unknown backend {self.backend!r}; expected one of {BACKENDS}")
        if self.rule not in ("gm", "gk-tensor"):
            raise SpecError(f"unknown rule {self.rule!r}")


_CONFIG_COLUMNS = ["workers", "rule", "backend", "cap", "init_per_rank", "repetition", "seed"]
ACCURACY_COLUMNS = [
    "function",
    "d",
    "tau_rel",
    "I",
    "eps",
    "rel_error_vs_exact",
    "iterations",
    "f_evals",
    "wall_or_virtual_time",
    "termination_reason",
] + _CONFIG_COLUMNS
SCALING_COLUMNS = [
    "function",
    "d",
    "tau_rel",
    "P",
    "time",
    "iterations",
    "regions_transferred",
    "messages",
    "termination_reason",
] + ["rule", "backend", "cap", "init_per_rank", "repetition", "seed"]
IDLE_COLUMNS = [
    "function",
    "d",
    "tau_rel",
    "P",
    "rank",
    "compute_fraction",
    "idle_fraction",
] + ["rule", "backend", "cap", "init_per_rank", "repetition", "seed"]


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _engine_configs(spec: ExperimentSpec, tau: float) -> tuple[DriverConfig, RedistributionConfig]:
    cfg = DriverConfig(tau_rel=tau, rule=spec.rule, max_iterations=spec.max_iterations)
    rcfg = RedistributionConfig(cap=spec.cap, initial_subdomains_per_rank=spec.init_per_rank)
    return cfg, rcfg


def _run_one(spec: ExperimentSpec, fid: str, d: int, tau: float, workers: int):
    integrand = make_integrand(fid, d)
    cfg, rcfg = _engine_configs(spec, tau)
    run = run_distributed(
        integrand.evaluate,
        HyperRect.unit_cube(d),
        cfg,
        rcfg,
        workers=workers,
        backend=spec.backend,
    )
    return integrand, run


def _time_of(run) -> float:
    # virtual units on the simulator, wall seconds on the concurrent backend
    return max((t.compute_seconds + t.idle_seconds for t in run.timings), default=0.0)


def run_accuracy_sweep(spec: ExperimentSpec) -> list[dict]:
    """One row per (function, d, tau_rel, workers, repetition).

    Infeasible combinations (the tensor Gauss-Kronrod rule beyond its
    dimension cap) produce a row with termination_reason ``unsupported``
    and empty estimate fields instead of aborting the sweep.
    """
    rows = []
    for fid in spec.functions:
        for d in spec.dims:
            for tau in spec.tolerances:
                for workers in spec.workers:
                    for rep in range(spec.repetitions):
                        base = {
                            "function": fid,
                            "d": d,
                            "tau_rel": tau,
                            "workers": workers,
                            "rule": spec.rule,
                            "backend": spec.backend,
                            "cap": spec.cap,
                            "init_per_rank": spec.init_per_rank,
                            "repetition": rep,
                            "seed": spec.seed,
                        }
                        try:
                            integrand, run = _run_one(spec, fid, d, tau, workers)
                        except UnsupportedDimensionError:
                            rows.append(
                                base
                                | {
                                    "I": "",
                                    "eps": "",
                                    "rel_error_vs_exact": "",
                                    "iterations": "",
                                    "f_evals": "",
                                    "wall_or_virtual_time": "",
                                    "termination_reason": "unsupported",
                                }
                            )
                            continue
                        res = run.result
                        exact = integrand.reference_value
                        rows.append(
                            base
                            | {
                                "I": res.integral,
                                "eps": res.error,
                                "rel_error_vs_exact": abs(res.integral - exact) / abs(exact),
                                "iterations": res.iterations,
                                "f_evals": res.total_f_evals,
                                "wall_or_virtual_time": _time_of(run),
                                "termination_reason": res.termination_reason.value,
                            }
                        )
    return rows


def run_scaling_sweep(spec: ExperimentSpec) -> list[dict]:
    """One row per (function, d, tau_rel, P, repetition) with transfer counters."""
    rows = []
    for fid in spec.functions:
        for d in spec.dims:
            for tau in spec.tolerances:
                for workers in spec.workers:
                    for rep in range(spec.repetitions):
                        base = {
                            "function": fid,
                            "d": d,
                            "tau_rel": tau,
                            "P": workers,
                            "rule": spec.rule,
                            "backend": spec.backend,
                            "cap": spec.cap,
                            "init_per_rank": spec.init_per_rank,
                            "repetition": rep,
                            "seed": spec.seed,
                        }
                        try:
                            _, run = _run_one(spec, fid, d, tau, workers)
                        except UnsupportedDimensionError:
                            rows.append(
                                base
                                | {
                                    "time": "",
                                    "iterations": "",
                                    "regions_transferred": "",
                                    "messages": "",
                                    "termination_reason": "unsupported",
                                }
                            )
                            continue
                        rows.append(
                            base
                            | {
                                "time": _time_of(run),
                                "iterations": run.result.iterations,
                                "regions_transferred": run.regions_transferred_total,
                                "messages": run.messages_total,
                                "termination_reason": run.result.termination_reason.value,
                            }
                        )
    return rows


def run_idle_breakdown(spec: ExperimentSpec) -> list[dict]:
    """Per-rank compute/idle fractions of the accounted time."""
    rows = []
    for fid in spec.functions:
        for d in spec.dims:
            for tau in spec.tolerances:
                for workers in spec.workers:
                    for rep in range(spec.repetitions):
                        _, run = _run_one(spec, fid, d, tau, workers)
                        total = max(
                            (t.compute_seconds + t.idle_seconds for t in run.timings),
                            default=0.0,
                        )
                        for t in run.timings:
                            denom = total if total > 0 else 1.0
                            rows.append(
                                {
                                    "function": fid,
                                    "d": d,
                                    "tau_rel": tau,
                                    "P": workers,
                                    "rank": t.rank,
                                    "compute_fraction": t.compute_seconds / denom,
                                    "idle_fraction": t.idle_seconds / denom,
                                    "rule": spec.rule,
                                    "backend": spec.backend,
                                    "cap": spec.cap,
                                    "init_per_rank": spec.init_per_rank,
                                    "repetition": rep,
                                    "seed": spec.seed,
                                }
                            )
    return rows


def write_rows(rows: list[dict], columns: list[str], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])
    return path


def write_manifest(spec: ExperimentSpec, path: str | Path) -> Path:
    path = Path(path)
    manifest_path = path.with_suffix(path.suffix + ".manifest.json")
    payload = {
        "spec": dataclasses.asdict(spec),
        "engine_version": __version__,
        "backend": spec.backend,
        "created": datetime.now(timezone.utc).isoformat(),
    }
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    manifest_path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return manifest_path
