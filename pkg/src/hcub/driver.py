"""Single-worker batch adaptive integration loop.

Unlike classic adaptivity, which refines one worst region at a time from a
priority queue, every region still contributing noticeably to the global
error is refined each iteration:

    evaluate all regions -> global convergence check -> one fused pass that
    finalizes negligible regions and splits the rest along their assigned
    axes -> repeat.

Global reductions use exact (compensated) summation, so results do not
depend on summation order and runs are bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .regions import HyperRect, RegionStore, uniform_partition, volume
from .rules import Integrand, RuleTable, apply_rule_batch, get_rule

__all__ = [
    "TerminationReason",
    "DriverConfig",
    "VolumeBudgetClassifier",
    "GlobalEstimate",
    "IntegrationResult",
    "IterationTrace",
    "ClassifyOutcome",
    "evaluate_batch",
    "check_convergence",
    "classify_filter_split",
    "integrate",
    "exact_sum",
]


def exact_sum(values) -> float:
    """Order-independent, exactly rounded float sum (error-free accumulation)."""
    return math.fsum(np.asarray(values, dtype=np.float64).tolist())


def exact_sum_with(carry: float, values) -> float:
    """Exactly rounded ``carry + sum(values)`` in a single accumulation."""
    return math.fsum([carry, *np.asarray(values, dtype=np.float64).tolist()])


class TerminationReason(str, Enum):
    TOLERANCE = "tolerance"
    MAX_ITERATIONS = "max_iterations"
    MAX_REGIONS = "max_regions"
    WIDTH_GUARD_EXHAUSTED = "width_guard_exhausted"


@dataclass(frozen=True)
class VolumeBudgetClassifier:
    """Negligibility policy: volume-proportional share of the global budget.

    A region is finalized once its error fits within its volume's share of
    the global tolerance budget, scaled by a safety factor below one that
    leaves headroom for estimator noise.  Swappable so alternative
    classifiers can be tested against the same driver.
    """

    safety: float = 0.5

    def thresholds(
        self, estimate: "GlobalEstimate", cfg: "DriverConfig", volumes: np.ndarray, domain_volume: float
    ) -> np.ndarray:
        budget = max(cfg.abs_floor, abs(estimate.integral) * cfg.tau_rel)
        return budget * self.safety * (volumes / domain_volume)


@dataclass(frozen=True)
class DriverConfig:
    """Tolerances and guards for the adaptive loop.

    Convergence is declared once the global error estimate drops to
    ``max(abs_floor, |I| * tau_rel)``.  The remaining knobs are guards:
    iteration and region-count caps, and a width guard that finalizes
    regions whose split axis has shrunk to floating-point resolution.
    """

    tau_rel: float
    abs_floor: float = 1e-16
    max_iterations: int = 1000
    max_regions: int = 1 << 24
    min_width_ulp_factor: float = 8.0
    rule: str = "gm"
    classifier: VolumeBudgetClassifier = field(default_factory=VolumeBudgetClassifier)

    def __post_init__(self):
        if not self.tau_rel > 0:
            raise ValueError("tau_rel must be positive")
        if self.max_regions < 1 or self.max_iterations < 1:
            raise ValueError("max_regions and max_iterations must be >= 1")


@dataclass
class GlobalEstimate:
    """Running global totals: active contributions plus finalized carry."""

    integral: float
    error: float
    finalized_integral: float
    finalized_error: float
    active_regions: int


@dataclass
class IntegrationResult:
    integral: float
    error: float
    converged: bool
    iterations: int
    total_f_evals: int
    peak_regions: int
    termination_reason: TerminationReason


@dataclass(frozen=True)
class IterationTrace:
    """One progress record per iteration, emitted to a caller-supplied sink."""

    iteration: int
    active_regions: int
    integral: float
    error: float
    f_evals: int  # cumulative


@dataclass
class ClassifyOutcome:
    store: RegionStore
    finalized_integral: float
    finalized_error: float
    width_guard_hits: int
    finalized_count: int
    split_count: int


def evaluate_batch(
    store: RegionStore,
    table: RuleTable,
    f: Integrand,
    finalized: tuple[float, float] = (0.0, 0.0),
) -> GlobalEstimate:
    """Fill local estimates for every region in ``store`` and reduce them.

    Regions get integral/error/split_axis columns updated in place; the
    returned estimate adds the finalized carry to the exact sum of the
    active contributions.
    """
    fin_i, fin_e = finalized
    if len(store) > 0:
        integral, error, scores, _ = apply_rule_batch(table, store.lo, store.hi, f)
        store.integral = integral
        store.error = error
        store.split_axis = np.argmax(scores, axis=1).astype(np.int64)
    return GlobalEstimate(
        integral=exact_sum_with(fin_i, store.integral),
        error=exact_sum_with(fin_e, store.error),
        finalized_integral=fin_i,
        finalized_error=fin_e,
        active_regions=len(store),
    )


def check_convergence(estimate: GlobalEstimate, cfg: DriverConfig) -> bool:
    return estimate.error <= max(cfg.abs_floor, abs(estimate.integral) * cfg.tau_rel)


def classify_filter_split(
    store: RegionStore, estimate: GlobalEstimate, cfg: DriverConfig, domain: HyperRect
) -> ClassifyOutcome:
    """Fused filter + split pass over an evaluated store.

    In one sweep: regions with negligible error are finalized into the
    carry totals; regions whose split axis has reached the width guard are
    finalized regardless of error; every other region is replaced by its
    two children bisected at the midpoint of its assigned axis.  Children
    inherit half the parent's estimates as provisional values (used only
    for transfer ordering before their first evaluation).
    """
    n = len(store)
    d = store.d
    thresholds = cfg.classifier.thresholds(estimate, cfg, store.volumes(), volume(domain))
    negligible = store.error <= thresholds

    axes = store.split_axis
    rows = np.arange(n)
    axis_extent = (store.hi - store.lo)[rows, axes]
    guard = cfg.min_width_ulp_factor * np.finfo(np.float64).eps * domain.extents[axes]
    at_width_floor = axis_extent <= guard

    finalize = negligible | at_width_floor
    split_mask = ~finalize
    fin_i = exact_sum_with(estimate.finalized_integral, store.integral[finalize])
    fin_e = exact_sum_with(estimate.finalized_error, store.error[finalize])

    p_lo = store.lo[split_mask]
    p_hi = store.hi[split_mask]
    p_axes = axes[split_mask]
    m = p_lo.shape[0]
    rows_m = np.arange(m)
    mid = p_lo[rows_m, p_axes] + 0.5 * (p_hi[rows_m, p_axes] - p_lo[rows_m, p_axes])

    child_lo = np.empty((2 * m, d))
    child_hi = np.empty((2 * m, d))
    child_lo[0::2] = p_lo
    child_hi[0::2] = p_hi
    child_hi[0::2][rows_m, p_axes] = mid
    child_lo[1::2] = p_lo
    child_lo[1::2][rows_m, p_axes] = mid
    child_hi[1::2] = p_hi

    out = RegionStore(d)
    if m:
        half_i = np.repeat(0.5 * store.integral[split_mask], 2)
        half_e = np.repeat(0.5 * store.error[split_mask], 2)
        out.append_batch(child_lo, child_hi, integral=half_i, error=half_e)
    return ClassifyOutcome(
        store=out,
        finalized_integral=fin_i,
        finalized_error=fin_e,
        width_guard_hits=int(at_width_floor.sum()),
        finalized_count=int(finalize.sum()),
        split_count=m,
    )


def integrate(
    f: Integrand,
    domain: HyperRect,
    cfg: DriverConfig,
    trace: Callable[[IterationTrace], None] | None = None,
    initial_regions: int | None = None,
) -> IntegrationResult:
    """Adaptively integrate ``f`` over ``domain`` to the configured tolerance.

    Starts from a uniform partition (2d regions by default, so the first
    iteration sees axis-diverse information), then iterates the batch loop
    until the stopping rule or a guard fires.
    """
    table = get_rule(cfg.rule, domain.dim)
    k = initial_regions if initial_regions is not None else 2 * domain.dim
    store = RegionStore.from_rects(uniform_partition(domain, k))
    fin = (0.0, 0.0)
    total_evals = 0
    peak = len(store)
    width_hits = 0

    iteration = 0
    while True:
        iteration += 1
        estimate = evaluate_batch(store, table, f, finalized=fin)
        total_evals += len(store) * table.node_count
        peak = max(peak, len(store))
        if trace is not None:
            trace(
                IterationTrace(
                    iteration=iteration,
                    active_regions=len(store),
                    integral=estimate.integral,
                    error=estimate.error,
                    f_evals=total_evals,
                )
            )
        if check_convergence(estimate, cfg):
            return IntegrationResult(
                integral=estimate.integral,
                error=estimate.error,
                converged=True,
                iterations=iteration,
                total_f_evals=total_evals,
                peak_regions=peak,
                termination_reason=TerminationReason.TOLERANCE,
            )
        if iteration >= cfg.max_iterations:
            return IntegrationResult(
                integral=estimate.integral,
                error=estimate.error,
                converged=False,
                iterations=iteration,
                total_f_evals=total_evals,
                peak_regions=peak,
                termination_reason=TerminationReason.MAX_ITERATIONS,
            )
        outcome = classify_filter_split(store, estimate, cfg, domain)
        fin = (outcome.finalized_integral, outcome.finalized_error)
        width_hits += outcome.width_guard_hits
        if len(outcome.store) == 0:
            # nothing refinable remains: either the finalized totals meet
            # the tolerance or resolution is exhausted
            final = GlobalEstimate(fin[0], fin[1], fin[0], fin[1], 0)
            converged = check_convergence(final, cfg)
            return IntegrationResult(
                integral=final.integral,
                error=final.error,
                converged=converged,
                iterations=iteration,
                total_f_evals=total_evals,
                peak_regions=peak,
                termination_reason=(
                    TerminationReason.TOLERANCE if converged else TerminationReason.WIDTH_GUARD_EXHAUSTED
                ),
            )
        if len(outcome.store) > cfg.max_regions:
            return IntegrationResult(
                integral=estimate.integral,
                error=estimate.error,
                converged=False,
                iterations=iteration,
                total_f_evals=total_evals,
                peak_regions=peak,
                termination_reason=TerminationReason.MAX_REGIONS,
            )
        store = outcome.store
