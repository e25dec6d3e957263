"""Benchmark integrands f1..f7 on the unit hypercube, with reference values.

The family covers oscillatory (f1), peaked (f2, f4), steep (f3, f5),
discontinuous (f6) and polynomial (f7) behaviour.  Each integrand carries
the exact value of its integral over [0, 1]^d: closed forms where the
function separates, exact combinatorial sums for f3 and f7 (marked as
oracle-derived since they are computed, not quoted).

All evaluators follow the vectorized contract: (m, d) points in, (m,)
values out.  They are pure and freely shareable.
"""

from __future__ import annotations

import cmath
import functools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

__all__ = [
    "FUNCTION_IDS",
    "BenchmarkIntegrand",
    "make_integrand",
    "reference_integral",
    "make_product_peak",
]

FUNCTION_IDS = ("f1", "f2", "f3", "f4", "f5", "f6", "f7")


@dataclass(frozen=True)
class BenchmarkIntegrand:
    """One benchmark function instantiated at a fixed dimension."""

    id: str
    d: int
    evaluate: Callable[[np.ndarray], np.ndarray]
    reference_value: float
    reference_provenance: str  # "closed_form" | "oracle"

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return self.evaluate(pts)


def _coeffs(d: int) -> np.ndarray:
    return np.arange(1, d + 1, dtype=np.float64)


def _f1(d):
    c = _coeffs(d)
    return lambda pts: np.cos(pts @ c)


def _f2(d):
    return lambda pts: np.prod(1.0 / (50.0**-2 + (pts - 0.5) ** 2), axis=1)


def _f3(d):
    c = _coeffs(d)
    return lambda pts: (1.0 + pts @ c) ** (-(d + 1))


def _f4(d):
    return lambda pts: np.exp(-(25.0**2) * ((pts - 0.5) ** 2).sum(axis=1))


def _f5(d):
    return lambda pts: np.exp(-10.0 * np.abs(pts - 0.5).sum(axis=1))


def _f6_thresholds(d: int) -> np.ndarray:
    return np.array([(3.0 + i) / 10.0 for i in range(1, d + 1)])


def _f6(d):
    t = _f6_thresholds(d)
    c = np.arange(1, d + 1, dtype=np.float64) + 4.0

    def evaluate(pts: np.ndarray) -> np.ndarray:
        out = np.exp(pts @ c)
        out[(pts > t).any(axis=1)] = 0.0
        return out

    return evaluate


def _f7(d):
    return lambda pts: ((pts**2).sum(axis=1)) ** 11


_EVALUATORS = {"f1": _f1, "f2": _f2, "f3": _f3, "f4": _f4, "f5": _f5, "f6": _f6, "f7": _f7}


# ---------------------------------------------------------------------------
# reference values


def _f1_reference(d: int) -> float:
    # Re prod_i (e^{j i} - 1) / (j i): the complex product keeps the
    # trigonometric cancellations stable for every d of interest
    prod = complex(1.0, 0.0)
    for i in range(1, d + 1):
        prod *= (cmath.exp(1j * i) - 1.0) / (1j * i)
    return prod.real


def _f3_reference(d: int) -> float:
    # integrating axes one at a time leaves an alternating sum over the
    # cube's corners; evaluated in exact rational arithmetic
    total = Fraction(0)
    for mask in range(1 << d):
        s = sum(i + 1 for i in range(d) if (mask >> i) & 1)
        total += Fraction((-1) ** int(bin(mask).count("1")), 1 + s)
    return float(total / Fraction(math.factorial(d)) ** 2)


def _f7_reference(d: int) -> float:
    # multinomial expansion of (sum x_i^2)^11 with exact monomial moments
    def partitions(n: int, max_part: int, max_len: int):
        if n == 0:
            yield ()
            return
        if max_len == 0:
            return
        for p in range(min(n, max_part), 0, -1):
            for rest in partitions(n - p, p, max_len - 1):
                yield (p,) + rest

    total = Fraction(0)
    fact11 = math.factorial(11)
    for part in partitions(11, 11, d):
        parts = list(part) + [0] * (d - len(part))
        coef = Fraction(fact11)
        for k in parts:
            coef /= math.factorial(k)
            coef /= 2 * k + 1
        counts: dict[int, int] = {}
        for k in parts:
            counts[k] = counts.get(k, 0) + 1
        arrangements = Fraction(math.factorial(d))
        for c in counts.values():
            arrangements /= math.factorial(c)
        total += coef * arrangements
    return float(total)


def _separable_reference(one_dim: float, d: int) -> float:
    return one_dim**d


@functools.lru_cache(maxsize=None)
def reference_integral(id: str, d: int) -> tuple[float, str]:
    """Exact integral of ``id`` over [0, 1]^d and its provenance tag."""
    if id not in FUNCTION_IDS:
        raise ValueError(f"unknown integrand {id!r}")
    if d < 1:
        raise ValueError("dimension must be at least 1")
    if id == "f1":
        return _f1_reference(d), "closed_form"
    if id == "f2":
        return _separable_reference(100.0 * math.atan(25.0), d), "closed_form"
    if id == "f3":
        return _f3_reference(d), "oracle"
    if id == "f4":
        return _separable_reference(math.sqrt(math.pi) / 25.0 * math.erf(12.5), d), "closed_form"
    if id == "f5":
        return _separable_reference((1.0 - math.exp(-5.0)) / 5.0, d), "closed_form"
    if id == "f6":
        value = 1.0
        for i in range(1, d + 1):
            t = min(1.0, (3.0 + i) / 10.0)
            value *= (math.exp((i + 4.0) * t) - 1.0) / (i + 4.0)
        return value, "closed_form"
    return _f7_reference(d), "oracle"


@functools.lru_cache(maxsize=None)
def make_integrand(id: str, d: int) -> BenchmarkIntegrand:
    """Instantiate benchmark integrand ``id`` in dimension ``d``."""
    value, provenance = reference_integral(id, d)
    return BenchmarkIntegrand(
        id=id,
        d=d,
        evaluate=_EVALUATORS[id](d),
        reference_value=value,
        reference_provenance=provenance,
    )


def make_product_peak(d: int, center: float | np.ndarray = 0.5, sharpness: float = 50.0):
    """Product-peak integrand like f2 but with a movable peak location.

    Useful for constructing deliberately imbalanced workloads (peak pushed
    into one corner) when studying redistribution behaviour.  Returns the
    evaluator together with its exact integral over [0, 1]^d.
    """
    c = np.broadcast_to(np.asarray(center, dtype=np.float64), (d,)).copy()
    a = 1.0 / sharpness**2

    def evaluate(pts: np.ndarray) -> np.ndarray:
        return np.prod(1.0 / (a + (pts - c) ** 2), axis=1)

    exact = 1.0
    for ci in c:
        exact *= sharpness * (math.atan(sharpness * (1.0 - ci)) - math.atan(sharpness * (0.0 - ci)))
    return evaluate, exact
