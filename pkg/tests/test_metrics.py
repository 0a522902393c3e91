import numpy as np
import pytest

from nsadm.errors import UndefinedMetric
from nsadm.geometry import AngleGrid, DistanceMatrix
from nsadm.metrics import chamfer, coverage, evaluate_pair, rmse
from nsadm.rng import stream
from oracles import chamfer_bruteforce


def _dm(values, valid=None):
    values = np.asarray(values, dtype=float)
    if valid is None:
        valid = np.ones(values.shape, dtype=bool)
    return DistanceMatrix(np.where(valid, values, 0.0), valid)


def test_rmse_known_fixture():
    """Errors 1, 2, 3, 4 on four cells: RMSE = sqrt(30/4) = sqrt(7.5)."""
    gt = _dm([[10.0, 10.0], [10.0, 10.0]])
    pred = _dm([[11.0, 12.0], [13.0, 14.0]])
    assert rmse(pred, gt) == pytest.approx(np.sqrt(7.5), rel=1e-12)


def test_rmse_exclude_ignores_uncovered_cells():
    gt = _dm([[10.0, 20.0], [30.0, 40.0]])
    pred_valid = np.array([[True, False], [True, False]])
    pred = _dm([[15.0, 0.0], [30.0, 0.0]], pred_valid)
    # errors on the covered cells: 5 and 0
    assert rmse(pred, gt) == pytest.approx(np.sqrt(12.5), rel=1e-12)
    assert coverage(pred, gt) == pytest.approx(0.5)


def test_rmse_penalize_mode():
    gt = _dm([[10.0, 20.0], [30.0, 40.0]])
    pred_valid = np.array([[True, False], [True, False]])
    pred = _dm([[15.0, 0.0], [30.0, 0.0]], pred_valid)
    val = rmse(pred, gt, mode="penalize", penalty=10.0)
    assert val == pytest.approx(np.sqrt((25.0 + 100.0 + 0.0 + 100.0) / 4), rel=1e-12)
    with pytest.raises(ValueError):
        rmse(pred, gt, mode="clip")


def test_rmse_only_gt_valid_cells_count():
    gt_valid = np.array([[True, False], [True, True]])
    gt = _dm([[10.0, 99.0], [30.0, 40.0]], gt_valid)
    pred = _dm([[12.0, 0.0], [30.0, 43.0]])
    assert rmse(pred, gt) == pytest.approx(np.sqrt((4.0 + 0.0 + 9.0) / 3), rel=1e-12)


def test_rmse_undefined_cases():
    gt = _dm([[1.0]], np.array([[False]]))
    pred = _dm([[1.0]])
    with pytest.raises(UndefinedMetric):
        rmse(pred, gt)
    gt2 = _dm([[1.0]])
    pred2 = _dm([[0.0]], np.array([[False]]))
    with pytest.raises(UndefinedMetric):
        rmse(pred2, gt2)
    with pytest.raises(UndefinedMetric):
        coverage(pred, gt)
    with pytest.raises(ValueError):
        rmse(_dm(np.ones((2, 2))), _dm(np.ones((3, 3))))


def test_coverage_counts():
    gt = _dm(np.ones((4, 4)))
    pred_valid = np.zeros((4, 4), dtype=bool)
    pred_valid[:2] = True
    pred = _dm(np.ones((4, 4)), pred_valid)
    assert coverage(pred, gt) == 0.5
    assert coverage(gt, gt) == 1.0


def test_chamfer_known_fixture():
    """Two single-point clouds 5 m apart in x and 5 m in y: CD = 25 + 25."""
    a = np.array([[0.0, 0.0, 0.0]])
    b = np.array([[3.0, 4.0, 0.0]])
    assert chamfer(a, b) == pytest.approx(50.0, rel=1e-12)
    assert chamfer(a, a) == 0.0


def test_chamfer_asymmetric_cloud():
    a = np.array([[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]])
    b = np.array([[0.0, 1.0, 0.0]])
    # a->b: 1 and 101; b->a: 1
    assert chamfer(a, b) == pytest.approx((1.0 + 101.0) / 2 + 1.0, rel=1e-12)


def test_chamfer_matches_bruteforce_oracle():
    rng = stream(19, 0)
    worst = 0.0
    for k in range(100):
        n = int(rng.integers(1, 512))
        m = int(rng.integers(1, 512))
        scale = float(rng.uniform(0.5, 60.0))
        a = rng.uniform(-scale, scale, size=(n, 3))
        b = rng.uniform(-scale, scale, size=(m, 3))
        worst = max(worst, abs(chamfer(a, b) - chamfer_bruteforce(a, b)))
    assert worst < 1e-9


def test_chamfer_validation():
    with pytest.raises(UndefinedMetric):
        chamfer(np.empty((0, 3)), np.ones((2, 3)))
    with pytest.raises(ValueError):
        chamfer(np.ones((2, 2)), np.ones((2, 3)))


def test_evaluate_pair_perfect_prediction():
    grid = AngleGrid.uniform(8, 8, (np.deg2rad(-80), np.deg2rad(-40)))
    rng = stream(19, 1)
    gt = _dm(rng.uniform(10.0, 60.0, size=(8, 8)))
    out = evaluate_pair(gt, gt, grid)
    assert out["rmse_m"] == 0.0
    assert out["coverage"] == 1.0
    assert out["chamfer_m2"] == 0.0


def test_evaluate_pair_keys_and_positivity():
    grid = AngleGrid.uniform(8, 8, (np.deg2rad(-80), np.deg2rad(-40)))
    rng = stream(19, 2)
    gt = _dm(rng.uniform(10.0, 60.0, size=(8, 8)))
    noisy = _dm(gt.values + rng.normal(0.0, 1.0, size=(8, 8)))
    out = evaluate_pair(noisy, gt, grid)
    assert set(out) == {"rmse_m", "coverage", "chamfer_m2"}
    assert out["rmse_m"] > 0
    assert out["chamfer_m2"] > 0
    assert out["coverage"] == 1.0
