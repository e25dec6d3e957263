import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hcub.regions import HyperRect, RegionStore, split, uniform_partition, volume


def test_volume_unit_cube():
    assert volume(HyperRect.unit_cube(3)) == 1.0


def test_volume_product_of_extents():
    assert volume(HyperRect([0.0, 0.0], [1.0, 0.5])) == 0.5


def test_volume_quarter_box_4d():
    # 0.5^4 by hand
    r = HyperRect([0.25] * 4, [0.75] * 4)
    assert volume(r) == pytest.approx(0.0625, rel=0, abs=0)


def test_invalid_rects_rejected():
    with pytest.raises(ValueError):
        HyperRect([0.0, 1.0], [1.0, 1.0])  # empty extent
    with pytest.raises(ValueError):
        HyperRect([0.0], [np.inf])
    with pytest.raises(ValueError):
        HyperRect(np.empty(0), np.empty(0))


def test_split_unit_square_axis0():
    a, b = split(HyperRect.unit_cube(2), 0)
    np.testing.assert_array_equal(a.lo, [0, 0])
    np.testing.assert_array_equal(a.hi, [0.5, 1])
    np.testing.assert_array_equal(b.lo, [0.5, 0])
    np.testing.assert_array_equal(b.hi, [1, 1])


def test_split_interval():
    a, b = split(HyperRect([0.0], [1.0]), 0)
    assert (a.lo[0], a.hi[0], b.lo[0], b.hi[0]) == (0.0, 0.5, 0.5, 1.0)


def test_split_offset_box():
    # midpoint of [0.2, 0.6] is 0.4
    a, b = split(HyperRect([0.2, 0.0], [0.6, 1.0]), 0)
    assert a.hi[0] == pytest.approx(0.4, abs=1e-16)
    assert b.lo[0] == a.hi[0]
    np.testing.assert_array_equal(a.lo, [0.2, 0.0])
    np.testing.assert_array_equal(b.hi, [0.6, 1.0])


def test_split_axis_out_of_range():
    with pytest.raises(ValueError):
        split(HyperRect.unit_cube(2), 2)


@settings(max_examples=200, deadline=None)
@given(
    st.integers(1, 6),
    st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=6, max_size=6),
    st.lists(st.floats(1e-3, 1e3), min_size=6, max_size=6),
    st.integers(0, 5),
)
def test_split_conserves_volume(d, los, widths, axis_seed):
    lo = np.array(los[:d])
    hi = lo + np.array(widths[:d])
    rect = HyperRect(lo, hi)
    axis = axis_seed % d
    a, b = split(rect, axis)
    parent, children = volume(rect), volume(a) + volume(b)
    assert children == pytest.approx(parent, rel=1e-12)


def test_uniform_partition_identity():
    square = HyperRect.unit_cube(2)
    parts = uniform_partition(square, 1)
    assert len(parts) == 1
    np.testing.assert_array_equal(parts[0].lo, square.lo)


def test_uniform_partition_two_halves():
    parts = uniform_partition(HyperRect.unit_cube(2), 2)
    assert len(parts) == 2
    # tie between axes broken toward axis 0
    assert parts[0].hi[0] == 0.5 and parts[1].lo[0] == 0.5
    assert parts[0].hi[1] == 1.0


def test_uniform_partition_octants():
    parts = uniform_partition(HyperRect.unit_cube(3), 8)
    assert len(parts) == 8
    vols = [volume(p) for p in parts]
    assert all(v == pytest.approx(0.125, rel=0, abs=0) for v in vols)
    corners = {tuple(p.lo) for p in parts}
    assert corners == {(x, y, z) for x in (0, 0.5) for y in (0, 0.5) for z in (0, 0.5)}


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(1, 40))
def test_uniform_partition_covers_domain(d, k):
    domain = HyperRect(np.full(d, -1.3), np.full(d, 2.7))
    parts = uniform_partition(domain, k)
    assert len(parts) == k
    total = sum(volume(p) for p in parts)
    assert total == pytest.approx(volume(domain), rel=1e-12)
    # pairwise disjoint interiors: sample midpoints, count containment
    for p in parts:
        mid = p.lo + 0.5 * (p.hi - p.lo)
        inside = sum(1 for q in parts if (mid > q.lo).all() and (mid < q.hi).all())
        assert inside == 1


def test_store_round_trip():
    store = RegionStore(2)
    lo = np.array([[0.0, 0.0], [0.5, 0.0], [0.0, 0.5]])
    hi = np.array([[0.5, 0.5], [1.0, 1.0], [0.5, 1.0]])
    store.append_batch(lo, hi, integral=[1.0, 2.0, 3.0], error=[0.1, 0.2, 0.3], split_axis=[0, 1, -1])
    assert len(store) == 3
    recs = store.records()
    np.testing.assert_array_equal(recs[1].rect.lo, [0.5, 0.0])
    assert recs[1].integral == 2.0
    assert recs[2].split_axis == -1
    np.testing.assert_array_equal(store.volumes(), [0.25, 0.5, 0.25])


def test_store_extract_preserves_order_and_removes():
    store = RegionStore(1)
    store.append_batch(np.arange(5.0)[:, None], np.arange(5.0)[:, None] + 1.0, error=np.arange(5.0))
    batch = store.extract(np.array([3, 1]))
    np.testing.assert_array_equal(batch.error, [3.0, 1.0])
    np.testing.assert_array_equal(store.error, [0.0, 2.0, 4.0])
    assert len(store) == 3


def test_store_compact_drops_inactive():
    store = RegionStore(1)
    store.append_batch(np.zeros((4, 1)), np.ones((4, 1)), integral=[1, 2, 3, 4])
    store.active[1] = False
    store.compact()
    np.testing.assert_array_equal(store.integral, [1.0, 3.0, 4.0])


def test_store_rejects_mismatched_bounds():
    store = RegionStore(2)
    with pytest.raises(ValueError):
        store.append_batch(np.zeros((1, 2)), np.zeros((1, 2)))  # lo == hi
