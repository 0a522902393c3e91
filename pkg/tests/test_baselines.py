import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nsadm.baselines import mt_enhance, passthrough
from nsadm.geometry import DistanceMatrix
from nsadm.rng import stream


def _random_dm(seed, shape=(10, 10), frac=0.5):
    rng = stream(17, seed)
    values = rng.uniform(5.0, 80.0, size=shape)
    valid = rng.uniform(size=shape) < frac
    return DistanceMatrix(np.where(valid, values, 0.0), valid)


def test_passthrough_is_independent_copy():
    dm = _random_dm(0)
    out = passthrough(dm)
    assert np.array_equal(out.values, dm.values)
    assert np.array_equal(out.valid, dm.valid)
    out.values[0, 0] = -123.0
    assert dm.values[0, 0] != -123.0


def test_mt_fills_single_hole_with_neighbor_median():
    values = np.arange(1.0, 10.0).reshape(3, 3)
    valid = np.ones((3, 3), dtype=bool)
    valid[1, 1] = False
    values[1, 1] = 0.0
    out = mt_enhance(DistanceMatrix(values, valid))
    neighbors = [1, 2, 3, 4, 6, 7, 8, 9]
    assert out.values[1, 1] == pytest.approx(np.median(neighbors))
    assert out.valid.all()
    # all originally valid cells untouched
    mask = valid
    assert np.array_equal(out.values[mask], values[mask])


def test_mt_propagates_into_large_hole():
    values = np.full((9, 9), 30.0)
    valid = np.zeros((9, 9), dtype=bool)
    valid[0, :] = True   # only the first row observed
    dm = DistanceMatrix(np.where(valid, values, 0.0), valid)
    out = mt_enhance(dm)
    assert out.valid.all()
    assert np.allclose(out.values, 30.0)


def test_mt_no_valid_cells_stays_empty():
    dm = DistanceMatrix(np.zeros((5, 5)), np.zeros((5, 5), dtype=bool))
    out = mt_enhance(dm)
    assert not out.valid.any()
    assert np.all(out.values == 0.0)


def test_mt_iteration_cap_limits_growth():
    values = np.zeros((1, 8))
    valid = np.zeros((1, 8), dtype=bool)
    valid[0, 0] = True
    values[0, 0] = 12.0
    out = mt_enhance(DistanceMatrix(values, valid), max_iters=2)
    # each sweep advances the frontier one cell
    assert np.array_equal(out.valid[0], [True, True, True, False, False,
                                         False, False, False])
    assert np.allclose(out.values[0, :3], 12.0)


@given(st.integers(0, 200), st.floats(0.05, 0.95))
def test_mt_never_modifies_valid_cells_and_only_grows(seed, frac):
    dm = _random_dm(seed, shape=(8, 8), frac=frac)
    out = mt_enhance(dm)
    assert np.all(dm.valid <= out.valid)
    assert np.array_equal(out.values[dm.valid], dm.values[dm.valid])
    assert np.all(out.values[out.valid] >= 0.0)
    assert np.all(out.values[~out.valid] == 0.0)
    # filled values interpolate: they stay inside the observed range
    filled = out.valid & ~dm.valid
    if filled.any() and dm.valid.any():
        lo, hi = dm.values[dm.valid].min(), dm.values[dm.valid].max()
        assert np.all(out.values[filled] >= lo - 1e-12)
        assert np.all(out.values[filled] <= hi + 1e-12)


def test_mt_deterministic():
    dm = _random_dm(3)
    a = mt_enhance(dm)
    b = mt_enhance(dm)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.valid, b.valid)
