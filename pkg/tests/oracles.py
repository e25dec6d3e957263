"""Independent reference computations used by the tests.

Everything here deliberately avoids the library's own evaluation paths:
tensor Gauss-Legendre quadrature for integral values, brute-force
enumeration and multinomial counting for orbit sizes, and a classic
priority-queue refinement loop as an alternative adaptive strategy.
"""

from __future__ import annotations

import functools
import heapq
import itertools
import math
from collections import Counter

import numpy as np


def tensor_gauss_legendre(f, lo, hi, n, breakpoints=None) -> float:
    """Tensor-product Gauss-Legendre integral with optional per-axis cuts.

    ``breakpoints[a]`` lists interior points of axis ``a`` where the
    integrand is non-smooth; each axis segment gets its own n-point rule,
    so piecewise-smooth integrands are still resolved to near machine
    precision.
    """
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    d = lo.size
    x, w = np.polynomial.legendre.leggauss(n)
    axes = []
    for a in range(d):
        cuts = [lo[a]]
        if breakpoints is not None:
            cuts += sorted(b for b in breakpoints[a] if lo[a] < b < hi[a])
        cuts.append(hi[a])
        xs, ws = [], []
        for i in range(len(cuts) - 1):
            mid = 0.5 * (cuts[i] + cuts[i + 1])
            half = 0.5 * (cuts[i + 1] - cuts[i])
            xs.append(mid + half * x)
            ws.append(half * w)
        axes.append((np.concatenate(xs), np.concatenate(ws)))
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wts = functools.reduce(np.kron, [a[1] for a in axes])
    return float(wts @ np.asarray(f(pts), dtype=np.float64))


def orbit_size_by_counting(generator) -> int:
    """Distinct permutations of the magnitudes times sign choices.

    Pure combinatorics: d! over the factorials of the magnitude
    multiplicities, times 2 per nonzero coordinate.
    """
    mags = [abs(float(g)) for g in generator]
    size = math.factorial(len(mags))
    for c in Counter(mags).values():
        size //= math.factorial(c)
    return size * 2 ** sum(1 for m in mags if m != 0.0)


def orbit_points_bruteforce(generator) -> set[tuple[float, ...]]:
    """Exhaustive permutation x sign enumeration (small d only)."""
    mags = [abs(float(g)) for g in generator]
    pts = set()
    for perm in itertools.permutations(mags):
        for signs in itertools.product((1.0, -1.0), repeat=len(mags)):
            pts.add(tuple(s * v + 0.0 for s, v in zip(signs, perm)))
    return pts


def priority_queue_integrate(f, lo, hi, tau_rel, table, max_steps=20000):
    """Classic one-region-at-a-time adaptive refinement.

    Keeps a heap ordered by local error, always splits the worst region
    along its suggested axis, and stops on the same relative criterion the
    batch driver uses.  Serves as an independent cross-check of the batch
    strategy, not of the rule itself.
    """
    from hcub.regions import HyperRect, split
    from hcub.rules import apply_rule, select_axis

    counter = itertools.count()
    heap = []

    def push(rect):
        ev = apply_rule(table, rect, f)
        heapq.heappush(heap, (-ev.error, next(counter), rect, ev.integral, ev.error, select_axis(ev)))

    push(HyperRect(np.asarray(lo, dtype=np.float64), np.asarray(hi, dtype=np.float64)))
    for _ in range(max_steps):
        integral = math.fsum(item[3] for item in heap)
        error = math.fsum(item[4] for item in heap)
        if error <= max(1e-16, abs(integral) * tau_rel):
            return integral, error
        _, _, rect, _, _, axis = heapq.heappop(heap)
        a, b = split(rect, axis)
        push(a)
        push(b)
    raise RuntimeError("priority-queue oracle did not converge")
