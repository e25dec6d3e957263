"""Cubature rules on hyper-rectangles.

Two rule families are provided:

* a fully symmetric rule of Genz & Malik (1980): degree 7 with an embedded
  degree-5 companion, node count ``2^d + 2d^2 + 2d + 1``.  The rule is
  specified compactly by generator orbits (a representative point whose
  coordinate permutations and sign flips share one weight), so alternative
  tables from the same family can be loaded from plain text without code
  changes.
* a tensor product of the 7-point Gauss / 15-point Kronrod pair, practical
  only in low dimension (node count ``15^d``; hard cap at d = 6).

Every rule application returns the local integral estimate, an error
estimate from embedded-rule differences, and per-axis fourth-difference
magnitudes used to pick the most profitable split direction.

Integrands are vectorized callables: given an ``(m, d)`` array of points
they return an ``(m,)`` array of values.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .regions import HyperRect

__all__ = [
    "UnsupportedDimensionError",
    "Orbit",
    "RuleTable",
    "RuleEvaluation",
    "build_gm_rule",
    "build_gk_tensor_rule",
    "get_rule",
    "load_rule_table",
    "parse_rule_table",
    "expand_orbit",
    "apply_rule",
    "apply_rule_batch",
    "select_axis",
    "estimate_error",
    "as_vectorized",
    "NONFINITE_ERROR_SCALE",
]

Integrand = Callable[[np.ndarray], np.ndarray]

GM_MIN_DIM = 2
GM_MAX_DIM = 13
GK_MAX_DIM = 6

# error assigned to a region where the integrand returned NaN/Inf at a node,
# scaled by region volume so the signal shrinks as the region is refined
NONFINITE_ERROR_SCALE = 1e30

# region rows evaluated per chunk are capped so point buffers stay bounded
_ROWS_PER_CHUNK = 1 << 21


class UnsupportedDimensionError(ValueError):
    """Requested rule does not exist for this dimension."""


@dataclass(frozen=True)
class Orbit:
    """Fully symmetric orbit: generator point, per-node weights, orbit size."""

    generator: tuple[float, ...]
    weight: float
    embedded_weight: float
    size: int


@dataclass
class RuleEvaluation:
    """Result of applying a rule to one region."""

    integral: float
    error: float
    axis_scores: np.ndarray
    f_evals: int


@dataclass
class RuleTable:
    """Nodes and weights of a cubature rule on the reference cube [-1,1]^d.

    Per-node weights satisfy ``sum(weights) == 2^d`` (degree-0 exactness on
    the reference cube); applying the rule to a general box scales by
    ``volume(box) / 2^d``.

    For fully symmetric tables the on-axis node bookkeeping
    (``center_index``, ``axis_pairs``, ``fourth_diff_ratio``) drives the
    fourth-difference axis scores, and the degree-3/1 companion weights
    (``null_center_weight``, ``null_axis_weight``) feed the error
    estimator's difference cascade.  Tables without that bookkeeping fall
    back to the plain |main - embedded| estimate.
    """

    d: int
    name: str
    kind: str  # "symmetric" | "tensor_gk"
    node_count: int
    degree: int
    embedded_degree: int
    points: np.ndarray | None = None  # (K, d), symmetric kind
    weights: np.ndarray | None = None  # (K,)
    embedded_weights: np.ndarray | None = None  # (K,)
    orbits: list[Orbit] | None = None
    center_index: int | None = None
    axis_pairs: np.ndarray | None = None  # (d, 2, 2): [axis, inner/outer, +/-]
    fourth_diff_ratio: float | None = None
    null_center_weight: float | None = None
    null_axis_weight: float | None = None
    # tensor_gk kind: 1-D node/weight data, expanded lazily per evaluation
    nodes_1d: np.ndarray | None = None
    weights_1d: np.ndarray | None = None
    embedded_weights_1d: np.ndarray | None = None

    @property
    def has_null_cascade(self) -> bool:
        return self.null_center_weight is not None


# ---------------------------------------------------------------------------
# orbit expansion


def _distinct_permutations(values: Sequence[float]):
    """Yield the distinct permutations of ``values`` in lexicographic order."""
    seq = sorted(values)
    n = len(seq)
    while True:
        yield tuple(seq)
        i = n - 2
        while i >= 0 and seq[i] >= seq[i + 1]:
            i -= 1
        if i < 0:
            return
        j = n - 1
        while seq[j] <= seq[i]:
            j -= 1
        seq[i], seq[j] = seq[j], seq[i]
        seq[i + 1 :] = reversed(seq[i + 1 :])


def expand_orbit(generator: Sequence[float]) -> np.ndarray:
    """All distinct coordinate permutations and sign flips of ``generator``.

    Points are emitted in a fixed order: permutations of the magnitudes in
    lexicographic order, then for each permutation the sign patterns of the
    nonzero entries in binary counting order (all-plus first).
    """
    gen = np.asarray(generator, dtype=np.float64)
    if gen.ndim != 1 or gen.size < 1:
        raise ValueError("generator must be a 1-D point")
    if (gen < 0).any():
        raise ValueError("generator coordinates must be non-negative magnitudes")
    pts: list[list[float]] = []
    for perm in _distinct_permutations(np.abs(gen).tolist()):
        nz = [i for i, v in enumerate(perm) if v != 0.0]
        for mask in range(1 << len(nz)):
            p = list(perm)
            for b, i in enumerate(nz):
                if (mask >> b) & 1:
                    p[i] = -p[i]
            pts.append(p)
    return np.asarray(pts, dtype=np.float64).reshape(len(pts), gen.size)


def _assemble_symmetric(
    d: int, name: str, degree: int, embedded_degree: int, gens: list[tuple[Sequence[float], float, float]]
) -> RuleTable:
    """Expand generator orbits into a flat node table plus axis bookkeeping."""
    blocks, weights, embedded, orbits = [], [], [], []
    for gen, w, we in gens:
        pts = expand_orbit(gen)
        blocks.append(pts)
        weights.append(np.full(len(pts), w))
        embedded.append(np.full(len(pts), we))
        orbits.append(Orbit(tuple(float(g) for g in gen), w, we, len(pts)))
    points = np.vstack(blocks)
    table = RuleTable(
        d=d,
        name=name,
        kind="symmetric",
        node_count=len(points),
        degree=degree,
        embedded_degree=embedded_degree,
        points=points,
        weights=np.concatenate(weights),
        embedded_weights=np.concatenate(embedded),
        orbits=orbits,
    )
    _attach_axis_bookkeeping(table)
    return table


def _attach_axis_bookkeeping(table: RuleTable) -> None:
    """Locate the center node and two on-axis orbits, derive companions.

    On-axis orbits are those whose generator has exactly one nonzero
    coordinate.  The two smallest distinct magnitudes feed the fourth
    difference; the outer one also defines a degree-3 companion rule used
    by the error estimator.  Tables lacking either structure keep ``None``
    markers and evaluation falls back to plain embedded differences.
    """
    pts, d = table.points, table.d
    center = np.flatnonzero((pts == 0.0).all(axis=1))
    if center.size != 1:
        return
    table.center_index = int(center[0])
    lambdas = sorted(
        {
            float(np.abs(o.generator).max())
            for o in table.orbits or []
            if sum(1 for g in o.generator if g != 0.0) == 1
        }
    )
    if len(lambdas) < 2:
        return
    lam_in, lam_out = lambdas[0], lambdas[1]
    pairs = np.empty((d, 2, 2), dtype=np.int64)
    for axis in range(d):
        for j, lam in enumerate((lam_in, lam_out)):
            on_axis = np.flatnonzero(
                (np.abs(np.abs(pts[:, axis]) - lam) < 1e-14)
                & (np.delete(pts, axis, axis=1) == 0.0).all(axis=1)
            )
            plus = on_axis[pts[on_axis, axis] > 0]
            minus = on_axis[pts[on_axis, axis] < 0]
            if plus.size != 1 or minus.size != 1:
                return
            pairs[axis, j, 0] = plus[0]
            pairs[axis, j, 1] = minus[0]
    table.axis_pairs = pairs
    table.fourth_diff_ratio = (lam_in / lam_out) ** 2
    # degree-3 companion on {center} + outer on-axis orbit:
    #   2*lam^2 * w_axis = 2^d / 3  and  w_center + 2d*w_axis = 2^d
    twod = 2.0**d
    w_axis = twod / (6.0 * lam_out**2)
    table.null_axis_weight = w_axis
    table.null_center_weight = twod - 2 * d * w_axis


# ---------------------------------------------------------------------------
# rule construction


@functools.lru_cache(maxsize=None)
def build_gm_rule(d: int) -> RuleTable:
    """Degree-7 fully symmetric rule with embedded degree-5 companion.

    Generator magnitudes and weights follow Genz & Malik (1980).  Node
    count is ``2^d + 2d^2 + 2d + 1``, i.e. O(2^d).  Valid for
    2 <= d <= 13; one-dimensional problems use the Gauss-Kronrod rule
    instead (see :func:`get_rule`).
    """
    if not GM_MIN_DIM <= d <= GM_MAX_DIM:
        raise UnsupportedDimensionError(
            f"fully symmetric rule supports {GM_MIN_DIM} <= d <= {GM_MAX_DIM}, got {d}"
        )
    lam2 = math.sqrt(9.0 / 70.0)
    lam3 = math.sqrt(9.0 / 10.0)
    lam4 = lam3
    lam5 = math.sqrt(9.0 / 19.0)
    twod = 2.0**d
    gens: list[tuple[Sequence[float], float, float]] = [
        ([0.0] * d, twod * (12824 - 9120 * d + 400 * d * d) / 19683.0, twod * (729 - 950 * d + 50 * d * d) / 729.0),
        ([lam2] + [0.0] * (d - 1), twod * 980 / 6561.0, twod * 245 / 486.0),
        ([lam3] + [0.0] * (d - 1), twod * (1820 - 400 * d) / 19683.0, twod * (265 - 100 * d) / 1458.0),
        ([lam4, lam4] + [0.0] * (d - 2), twod * 200 / 19683.0, twod * 25 / 729.0),
        ([lam5] * d, 6859 / 19683.0, 0.0),
    ]
    return _assemble_symmetric(d, "gm", 7, 5, gens)


# 15-point Kronrod extension of the 7-point Gauss rule (abscissae/weights on
# [-1, 1], node-symmetric; Gauss weights are zero at Kronrod-only nodes)
_GK_NODES_HALF = np.array(
    [
        0.991455371120812639206854697526329,
        0.949107912342758524526189684047851,
        0.864864423359769072789712788640926,
        0.741531185599394439863864773280788,
        0.586087235467691130294144838258730,
        0.405845151377397166906606412076961,
        0.207784955007898467600689403773245,
        0.0,
    ]
)
_GK_WEIGHTS_HALF = np.array(
    [
        0.022935322010529224963732008058970,
        0.063092092629978553290700663189204,
        0.104790010322250183839876322541518,
        0.140653259715525918745189590510238,
        0.169004726639267902826583426598550,
        0.190350578064785409913256402421014,
        0.204432940075298892414161999234649,
        0.209482141084727828012999174891714,
    ]
)
_G7_WEIGHTS_HALF = np.array(
    [
        0.0,
        0.129484966168869693270611432679082,
        0.0,
        0.279705391489276667901467771423780,
        0.0,
        0.381830050505118944950369775488975,
        0.0,
        0.417959183673469387755102040816327,
    ]
)


def _gk_1d() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    nodes = np.concatenate([-_GK_NODES_HALF[:-1], _GK_NODES_HALF[::-1]])
    wk = np.concatenate([_GK_WEIGHTS_HALF[:-1], _GK_WEIGHTS_HALF[::-1]])
    wg = np.concatenate([_G7_WEIGHTS_HALF[:-1], _G7_WEIGHTS_HALF[::-1]])
    return nodes, wk, wg


@functools.lru_cache(maxsize=None)
def build_gk_tensor_rule(d: int) -> RuleTable:
    """Tensor product of the 7-point Gauss / 15-point Kronrod pair.

    Node count is ``15^d``, which grows too fast to be useful beyond a few
    dimensions; the constructor refuses d > 6.
    """
    if d < 1:
        raise UnsupportedDimensionError("dimension must be at least 1")
    if d > GK_MAX_DIM:
        raise UnsupportedDimensionError(
            f"tensor Gauss-Kronrod rule is capped at d <= {GK_MAX_DIM} "
            f"(15^d nodes are impractical beyond that), got {d}"
        )
    nodes, wk, wg = _gk_1d()
    return RuleTable(
        d=d,
        name="gk-tensor",
        kind="tensor_gk",
        node_count=15**d,
        degree=22,
        embedded_degree=13,
        nodes_1d=nodes,
        weights_1d=wk,
        embedded_weights_1d=wg,
    )


def get_rule(name: str, d: int) -> RuleTable:
    """Resolve a rule identifier for dimension ``d``.

    ``gm`` delegates to the Gauss-Kronrod rule at d = 1, where the fully
    symmetric construction does not apply.
    """
    if name == "gm":
        return build_gk_tensor_rule(1) if d == 1 else build_gm_rule(d)
    if name in ("gk-tensor", "gk_tensor", "gk"):
        return build_gk_tensor_rule(d)
    raise ValueError(f"unknown rule {name!r}; expected 'gm' or 'gk-tensor'")


# ---------------------------------------------------------------------------
# plain-text table format


def parse_rule_table(text: str, name: str = "custom", degree: int = -1, embedded_degree: int = -1) -> RuleTable:
    """Build a fully symmetric table from its plain-text description.

    One orbit per line: ``g_1 ... g_d weight embedded_weight`` separated by
    whitespace (commas tolerated); ``#`` starts a comment.  Generator
    coordinates are magnitudes on the reference cube [-1, 1]^d.
    """
    rows: list[list[float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip().replace(",", " ")
        if not line:
            continue
        try:
            rows.append([float(tok) for tok in line.split()])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    if not rows:
        raise ValueError("no orbits found in rule table text")
    width = len(rows[0])
    if width < 3 or any(len(r) != width for r in rows):
        raise ValueError("every orbit line needs d coordinates plus two weights")
    d = width - 2
    gens = [(r[:d], r[d], r[d + 1]) for r in rows]
    return _assemble_symmetric(d, name, degree, embedded_degree, gens)


def load_rule_table(path: str | Path, name: str | None = None) -> RuleTable:
    path = Path(path)
    return parse_rule_table(path.read_text(), name=name or path.stem)


# ---------------------------------------------------------------------------
# evaluation


def as_vectorized(f: Callable[..., float], d: int) -> Integrand:
    """Adapt a scalar ``f(x_1, ..., x_d)`` or ``f(point)`` to the array contract."""

    def wrapped(pts: np.ndarray) -> np.ndarray:
        out = np.empty(pts.shape[0])
        try:
            for i, p in enumerate(pts):
                out[i] = f(*p)
        except TypeError:
            for i, p in enumerate(pts):
                out[i] = f(p)
        return out

    return wrapped


def estimate_error(
    main: np.ndarray,
    embedded: np.ndarray,
    low: np.ndarray | None = None,
    lowest: np.ndarray | None = None,
) -> np.ndarray:
    """Error estimate from a cascade of embedded-rule differences.

    The first difference |main - embedded| is the base estimate.  When the
    degree-3/1 companion estimates are available the decay of successive
    differences decides how much to trust it: non-decaying differences get
    a 10x safety factor, strongly decaying ones are scaled down toward the
    observed decay ratio (never below 5%).  Without companion data (custom
    tables) the base difference is returned unchanged.
    """
    e1 = np.abs(main - embedded)
    if low is None or lowest is None:
        return e1
    e2 = np.abs(embedded - low)
    e3 = np.abs(low - lowest)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.maximum(e1 / e2, e2 / e3)
    scale = np.where(r >= 1.0, 10.0, np.clip(4.0 * r, 0.05, 1.0))
    return np.where((e2 > 0.0) & (e3 > 0.0), scale * e1, e1)


def select_axis(evaluation: RuleEvaluation) -> int:
    """Axis with the largest fourth-difference score; ties pick the lowest."""
    return int(np.argmax(evaluation.axis_scores))


def apply_rule_batch(
    table: RuleTable, lo: np.ndarray, hi: np.ndarray, f: Integrand
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Apply ``table`` to a batch of boxes given as (n, d) bound arrays.

    Returns per-region integrals, error estimates and (n, d) axis scores,
    plus the total number of integrand evaluations.  Regions where the
    integrand produced a non-finite value are not propagated: they come
    back with integral 0 and a large volume-scaled error so the driver
    refines them instead of accepting garbage.
    """
    lo = np.atleast_2d(np.asarray(lo, dtype=np.float64))
    hi = np.atleast_2d(np.asarray(hi, dtype=np.float64))
    n, d = lo.shape
    if d != table.d:
        raise UnsupportedDimensionError(f"table is for d={table.d}, regions have d={d}")
    if table.kind == "symmetric":
        return _apply_symmetric_batch(table, lo, hi, f)
    return _apply_tensor_gk_batch(table, lo, hi, f)


def _guard_nonfinite(
    bad: np.ndarray,
    volumes: np.ndarray,
    extents: np.ndarray,
    integral: np.ndarray,
    error: np.ndarray,
    scores: np.ndarray,
) -> None:
    if bad.any():
        integral[bad] = 0.0
        error[bad] = NONFINITE_ERROR_SCALE * volumes[bad]
        # widest axis first, so guarded regions shrink in every direction
        scores[bad] = extents[bad]


def _apply_symmetric_batch(table, lo, hi, f):
    n, d = lo.shape
    half = 0.5 * (hi - lo)
    centers = lo + half
    volumes = np.prod(hi - lo, axis=1)
    scale = volumes / 2.0**d

    K = table.node_count
    pts_ref = table.points
    integral = np.empty(n)
    error = np.empty(n)
    scores = np.empty((n, d))

    ci = table.center_index
    pairs = table.axis_pairs
    chunk = max(1, _ROWS_PER_CHUNK // K)
    for s in range(0, n, chunk):
        e = min(n, s + chunk)
        pts = centers[s:e, None, :] + half[s:e, None, :] * pts_ref[None, :, :]
        vals = np.asarray(f(pts.reshape(-1, d)), dtype=np.float64).reshape(e - s, K)
        main = (vals @ table.weights) * scale[s:e]
        emb = (vals @ table.embedded_weights) * scale[s:e]

        if pairs is not None:
            fc = vals[:, ci]
            v_in = vals[:, pairs[:, 0, 0]] + vals[:, pairs[:, 0, 1]]  # (m, d)
            v_out = vals[:, pairs[:, 1, 0]] + vals[:, pairs[:, 1, 1]]
            d2_in = v_in - 2.0 * fc[:, None]
            d2_out = v_out - 2.0 * fc[:, None]
            scores[s:e] = np.abs(d2_in - table.fourth_diff_ratio * d2_out)
            low = (table.null_center_weight * fc + table.null_axis_weight * v_out.sum(axis=1)) * scale[s:e]
            lowest = (2.0**d * fc) * scale[s:e]
            err = estimate_error(main, emb, low, lowest)
        else:
            scores[s:e] = (hi[s:e] - lo[s:e])  # no on-axis data: widest axis
            err = estimate_error(main, emb)

        integral[s:e] = main
        error[s:e] = err
        bad = ~np.isfinite(vals).all(axis=1)
        _guard_nonfinite(bad, volumes[s:e], hi[s:e] - lo[s:e], integral[s:e], error[s:e], scores[s:e])
    return integral, error, scores, n * K


def _tensor_values(nodes_1d: np.ndarray, d: int, center: np.ndarray, half: np.ndarray, f) -> np.ndarray:
    """Evaluate f on the full tensor grid of one region, shape (15,)*d.

    For d >= 6 the grid is streamed one axis-0 slab at a time to keep point
    buffers bounded.
    """
    q = nodes_1d.size
    if d < 6:
        grids = np.meshgrid(*(center[a] + half[a] * nodes_1d for a in range(d)), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        return np.asarray(f(pts), dtype=np.float64).reshape((q,) * d)
    vals = np.empty((q,) * d)
    rest = np.meshgrid(*(center[a] + half[a] * nodes_1d for a in range(1, d)), indexing="ij")
    rest_pts = np.stack([g.ravel() for g in rest], axis=1)
    block = np.empty((rest_pts.shape[0], d))
    block[:, 1:] = rest_pts
    for i0 in range(q):
        block[:, 0] = center[0] + half[0] * nodes_1d[i0]
        vals[i0] = np.asarray(f(block.copy()), dtype=np.float64).reshape((q,) * (d - 1))
    return vals


def _contract_axes(vals: np.ndarray, vecs: list[np.ndarray]) -> float:
    out = vals
    for v in vecs:
        out = np.tensordot(out, v, axes=([0], [0]))
    return float(out)


@functools.lru_cache(maxsize=None)
def _tensor_gk_expanded(d: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Materialized tensor grid and weight vectors for small d.

    Returns reference-cube points (K, d), main weights (K,), embedded
    weights (K,) and the d per-axis mixed weight vectors (d, K) in which
    one axis uses the embedded 1-D weights.
    """
    nodes, wk, wg = _gk_1d()
    grids = np.meshgrid(*([nodes] * d), indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=1)
    w_main = functools.reduce(np.kron, [wk] * d)
    w_emb = functools.reduce(np.kron, [wg] * d)
    w_axis = np.stack(
        [functools.reduce(np.kron, [wg if a == i else wk for a in range(d)]) for i in range(d)]
    )
    return points, w_main, w_emb, w_axis


def _apply_tensor_gk_batch(table, lo, hi, f):
    n, d = lo.shape
    half = 0.5 * (hi - lo)
    centers = lo + half
    volumes = np.prod(hi - lo, axis=1)
    scale = volumes / 2.0**d
    K = table.node_count

    integral = np.empty(n)
    error = np.empty(n)
    scores = np.empty((n, d))
    if d <= 5:
        points, w_main, w_emb, w_axis = _tensor_gk_expanded(d)
        chunk = max(1, _ROWS_PER_CHUNK // K)
        for s in range(0, n, chunk):
            e = min(n, s + chunk)
            pts = centers[s:e, None, :] + half[s:e, None, :] * points[None, :, :]
            vals = np.asarray(f(pts.reshape(-1, d)), dtype=np.float64).reshape(e - s, K)
            main = (vals @ w_main) * scale[s:e]
            emb = (vals @ w_emb) * scale[s:e]
            integral[s:e] = main
            error[s:e] = np.abs(main - emb)
            scores[s:e] = np.abs((vals @ w_axis.T) * scale[s:e, None] - main[:, None])
            bad = ~np.isfinite(vals).all(axis=1)
            _guard_nonfinite(
                bad, volumes[s:e], hi[s:e] - lo[s:e], integral[s:e], error[s:e], scores[s:e]
            )
        return integral, error, scores, n * K

    # d == 6: the materialized grid would be ~0.5 GB, stream slabs instead
    wk, wg = table.weights_1d, table.embedded_weights_1d
    for i in range(n):
        vals = _tensor_values(table.nodes_1d, d, centers[i], half[i], f)
        finite = np.isfinite(vals).all()
        main = _contract_axes(vals, [wk] * d) * scale[i]
        emb = _contract_axes(vals, [wg] * d) * scale[i]
        integral[i] = main
        error[i] = abs(main - emb)
        for axis in range(d):
            vecs = [wg if a == axis else wk for a in range(d)]
            scores[i, axis] = abs(_contract_axes(vals, vecs) * scale[i] - main)
        if not finite:
            bad = np.array([True])
            _guard_nonfinite(
                bad, volumes[i : i + 1], (hi - lo)[i : i + 1], integral[i : i + 1], error[i : i + 1], scores[i : i + 1]
            )
    return integral, error, scores, n * K


def apply_rule(table: RuleTable, rect: HyperRect, f: Integrand) -> RuleEvaluation:
    """Apply ``table`` to one region; see :func:`apply_rule_batch`."""
    integral, error, scores, evals = apply_rule_batch(
        table, rect.lo[None, :], rect.hi[None, :], f
    )
    return RuleEvaluation(
        integral=float(integral[0]),
        error=float(error[0]),
        axis_scores=scores[0],
        f_evals=evals,
    )
