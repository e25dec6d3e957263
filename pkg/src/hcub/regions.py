"""Hyper-rectangle geometry and columnar storage for region batches.

Subregions of the integration domain are axis-aligned hyper-rectangles.
Batches of them live in a :class:`RegionStore`, which keeps one flat numpy
array per scalar field (structure-of-arrays) so that per-iteration passes
over tens of thousands of regions stay vectorized and no per-region Python
objects are materialized on the hot path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "HyperRect",
    "RegionRecord",
    "RegionStore",
    "volume",
    "split",
    "uniform_partition",
]


@dataclass(frozen=True)
class HyperRect:
    """Axis-aligned box with strictly positive extent on every axis."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=np.float64))
        if lo.ndim != 1 or hi.ndim != 1 or lo.shape != hi.shape:
            raise ValueError("lo and hi must be 1-D arrays of equal length")
        if lo.size < 1:
            raise ValueError("dimension must be at least 1")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ValueError("bounds must be finite")
        if not (lo < hi).all():
            raise ValueError("every axis needs lo < hi")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def extents(self) -> np.ndarray:
        return self.hi - self.lo

    @classmethod
    def unit_cube(cls, d: int) -> "HyperRect":
        return cls(np.zeros(d), np.ones(d))


@dataclass(frozen=True)
class RegionRecord:
    """One region's geometry plus its current local estimates."""

    rect: HyperRect
    integral: float
    error: float
    split_axis: int  # -1 while unset


def volume(rect: HyperRect) -> float:
    """Product of the extents; positive by construction."""
    return float(np.prod(rect.hi - rect.lo))


def split(rect: HyperRect, axis: int) -> tuple[HyperRect, HyperRect]:
    """Bisect ``rect`` at the midpoint of ``axis``; other bounds unchanged."""
    if not 0 <= axis < rect.dim:
        raise ValueError(f"axis {axis} out of range for dimension {rect.dim}")
    # lo + 0.5*(hi-lo) avoids overflow and loses less to cancellation than
    # 0.5*(lo+hi) for bounds of mixed magnitude
    mid = rect.lo[axis] + 0.5 * (rect.hi[axis] - rect.lo[axis])
    lo_hi = rect.hi.copy()
    lo_hi[axis] = mid
    hi_lo = rect.lo.copy()
    hi_lo[axis] = mid
    return HyperRect(rect.lo, lo_hi), HyperRect(hi_lo, rect.hi)


def uniform_partition(domain: HyperRect, k: int) -> list[HyperRect]:
    """Partition ``domain`` into exactly ``k`` disjoint boxes.

    Greedy refinement: repeatedly bisect the currently largest region along
    its longest axis until ``k`` regions exist.  Ties (equal volumes, equal
    extents) are broken by the lowest list index / lowest axis index, and
    children replace their parent in place, so the result is deterministic.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    parts = [domain]
    vols = [volume(domain)]
    while len(parts) < k:
        i = int(np.argmax(vols))
        axis = int(np.argmax(parts[i].extents))
        a, b = split(parts[i], axis)
        parts[i : i + 1] = [a, b]
        v = volume(a)
        vols[i : i + 1] = [v, volume(b)]
    return parts


class RegionStore:
    """Columnar batch of regions with local integral/error estimates.

    Columns (all of equal length): per-axis lower and upper bounds,
    integral, error, split_axis (-1 = unset) and an active flag.  A store
    is single-owner: one worker mutates it at a time, and batches move
    between stores via :meth:`extract` / :meth:`append_batch`.
    """

    __slots__ = ("d", "lo", "hi", "integral", "error", "split_axis", "active")

    def __init__(self, d: int):
        if d < 1:
            raise ValueError("dimension must be at least 1")
        self.d = d
        self.lo = np.empty((0, d))
        self.hi = np.empty((0, d))
        self.integral = np.empty(0)
        self.error = np.empty(0)
        self.split_axis = np.empty(0, dtype=np.int64)
        self.active = np.empty(0, dtype=bool)

    # -- construction ------------------------------------------------------

    @classmethod
    def from_rects(cls, rects: Sequence[HyperRect] | Iterable[HyperRect]) -> "RegionStore":
        rects = list(rects)
        if not rects:
            raise ValueError("need at least one rect")
        store = cls(rects[0].dim)
        store.append_batch(
            np.array([r.lo for r in rects]), np.array([r.hi for r in rects])
        )
        return store

    @classmethod
    def from_arrays(
        cls,
        lo: np.ndarray,
        hi: np.ndarray,
        integral: np.ndarray | None = None,
        error: np.ndarray | None = None,
        split_axis: np.ndarray | None = None,
    ) -> "RegionStore":
        lo = np.atleast_2d(np.asarray(lo, dtype=np.float64))
        store = cls(lo.shape[1])
        store.append_batch(lo, hi, integral, error, split_axis)
        return store

    # -- basic queries -----------------------------------------------------

    def __len__(self) -> int:
        return self.lo.shape[0]

    @property
    def n_regions(self) -> int:
        return len(self)

    def extents(self) -> np.ndarray:
        return self.hi - self.lo

    def volumes(self) -> np.ndarray:
        return np.prod(self.hi - self.lo, axis=1)

    def centers(self) -> np.ndarray:
        return self.lo + 0.5 * (self.hi - self.lo)

    def record(self, i: int) -> RegionRecord:
        return RegionRecord(
            rect=HyperRect(self.lo[i].copy(), self.hi[i].copy()),
            integral=float(self.integral[i]),
            error=float(self.error[i]),
            split_axis=int(self.split_axis[i]),
        )

    def records(self) -> list[RegionRecord]:
        return [self.record(i) for i in range(len(self))]

    # -- batch mutation ----------------------------------------------------

    def append_batch(
        self,
        lo: np.ndarray,
        hi: np.ndarray,
        integral: np.ndarray | None = None,
        error: np.ndarray | None = None,
        split_axis: np.ndarray | None = None,
    ) -> None:
        lo = np.atleast_2d(np.asarray(lo, dtype=np.float64))
        hi = np.atleast_2d(np.asarray(hi, dtype=np.float64))
        if lo.shape != hi.shape or lo.shape[1] != self.d:
            raise ValueError("bounds shape mismatch")
        if not (lo < hi).all():
            raise ValueError("every appended region needs lo < hi on all axes")
        m = lo.shape[0]
        self.lo = np.concatenate([self.lo, lo])
        self.hi = np.concatenate([self.hi, hi])
        self.integral = np.concatenate(
            [self.integral, np.zeros(m) if integral is None else np.asarray(integral, dtype=np.float64)]
        )
        self.error = np.concatenate(
            [self.error, np.zeros(m) if error is None else np.asarray(error, dtype=np.float64)]
        )
        self.split_axis = np.concatenate(
            [
                self.split_axis,
                np.full(m, -1, dtype=np.int64)
                if split_axis is None
                else np.asarray(split_axis, dtype=np.int64),
            ]
        )
        self.active = np.concatenate([self.active, np.ones(m, dtype=bool)])

    def _select(self, mask: np.ndarray) -> "RegionStore":
        out = RegionStore(self.d)
        out.lo = self.lo[mask].copy()
        out.hi = self.hi[mask].copy()
        out.integral = self.integral[mask].copy()
        out.error = self.error[mask].copy()
        out.split_axis = self.split_axis[mask].copy()
        out.active = self.active[mask].copy()
        return out

    def take(self, indices: np.ndarray) -> "RegionStore":
        """Copy the given rows, in the given order, into a new store."""
        idx = np.asarray(indices, dtype=np.int64)
        out = RegionStore(self.d)
        out.lo = self.lo[idx].copy()
        out.hi = self.hi[idx].copy()
        out.integral = self.integral[idx].copy()
        out.error = self.error[idx].copy()
        out.split_axis = self.split_axis[idx].copy()
        out.active = self.active[idx].copy()
        return out

    def drop(self, indices: np.ndarray) -> None:
        mask = np.ones(len(self), dtype=bool)
        mask[np.asarray(indices, dtype=np.int64)] = False
        kept = self._select(mask)
        self.lo, self.hi = kept.lo, kept.hi
        self.integral, self.error = kept.integral, kept.error
        self.split_axis, self.active = kept.split_axis, kept.active

    def extract(self, indices: np.ndarray) -> "RegionStore":
        """Move the given rows out into a new store (removing them here)."""
        batch = self.take(indices)
        self.drop(indices)
        return batch

    def compact(self) -> None:
        """Drop rows whose active flag is cleared."""
        if not self.active.all():
            kept = self._select(self.active)
            self.lo, self.hi = kept.lo, kept.hi
            self.integral, self.error = kept.integral, kept.error
            self.split_axis, self.active = kept.split_axis, kept.active
