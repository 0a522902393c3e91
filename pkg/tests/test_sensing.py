import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nsadm.geometry import DistanceMatrix
from nsadm.rng import as_stream
from nsadm.sensing import (SensingConfig, StatMaps, admissibility,
                           build_stat_maps, crb_range_var, dbm_to_linear,
                           degrade, detection_probability, marcum_q1,
                           normalize_variance, snr_gamma)
from oracles import marcum_q1_quadrature


def test_dbm_to_linear():
    assert dbm_to_linear(0.0) == pytest.approx(1.0, rel=1e-15)
    assert dbm_to_linear(-20.0) == pytest.approx(0.01, rel=1e-15)
    assert dbm_to_linear(10.0) == pytest.approx(10.0, rel=1e-15)
    assert np.allclose(dbm_to_linear([-10.0, 30.0]), [0.1, 1000.0])


def test_sensing_config_validation():
    with pytest.raises(ValueError):
        SensingConfig(n_tx=0)
    with pytest.raises(ValueError):
        SensingConfig(bandwidth_hz=0.0)
    with pytest.raises(ValueError):
        SensingConfig(p_fa=0.0)
    with pytest.raises(ValueError):
        SensingConfig(p_fa=1.0)
    with pytest.raises(ValueError):
        SensingConfig(alpha=0.5)
    cfg = SensingConfig(p_fa=0.01)
    assert cfg.detection_threshold == pytest.approx(-np.log(0.01), rel=1e-15)


# ---------------------------------------------------------------------------
# Marcum Q1
# ---------------------------------------------------------------------------

def test_marcum_exact_limits():
    b = np.array([0.0, 0.5, 1.0, 3.0, 10.0])
    assert np.allclose(marcum_q1(0.0, b), np.exp(-0.5 * b**2), rtol=1e-13)
    a = np.array([0.0, 0.7, 2.0, 15.0])
    assert np.all(marcum_q1(a, 0.0) == 1.0)


def test_marcum_frozen_reference_value():
    assert marcum_q1(1.0, 1.0) == pytest.approx(0.7328798037968203, abs=1e-12)


def test_marcum_vs_quadrature_oracle():
    pts = [0.0, 0.3, 1.0, 2.5, 5.0, 10.0, 20.0, 29.0]
    worst = 0.0
    for a in pts:
        for b in pts:
            if b == 0.0:
                continue  # oracle integrates from b; exact limit covered above
            worst = max(worst, abs(marcum_q1(a, b) - marcum_q1_quadrature(a, b)))
    assert worst < 1e-10


def test_marcum_range_and_shape():
    a = np.linspace(0, 40, 33).reshape(3, 11)
    b = np.linspace(0, 40, 33)[::-1].reshape(3, 11)
    q = marcum_q1(a, b)
    assert q.shape == (3, 11)
    assert np.all((q >= 0.0) & (q <= 1.0))
    assert isinstance(marcum_q1(1.0, 2.0), float)


def test_marcum_rejects_bad_arguments():
    with pytest.raises(ValueError):
        marcum_q1(-0.1, 1.0)
    with pytest.raises(ValueError):
        marcum_q1(1.0, np.inf)


@given(st.floats(0.0, 25.0), st.floats(0.01, 25.0), st.floats(0.01, 3.0))
def test_marcum_monotone(a, b, delta):
    # increasing in the signal argument, decreasing in the threshold argument
    assert marcum_q1(a + delta, b) >= marcum_q1(a, b) - 1e-11
    assert marcum_q1(a, b + delta) <= marcum_q1(a, b) + 1e-11


def test_detection_probability_endpoints():
    cfg = SensingConfig()
    lam = cfg.detection_threshold
    # zero SNR: only false alarms fire
    assert detection_probability(0.0, lam) == pytest.approx(cfg.p_fa, rel=1e-12)
    # zero threshold: every beam fires
    assert detection_probability(5.0, 0.0) == 1.0
    assert detection_probability(1e6, lam) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        detection_probability(-1.0, lam)


# ---------------------------------------------------------------------------
# link budget
# ---------------------------------------------------------------------------

def test_snr_worked_example():
    """4x4 arrays, unit reflectivity, 1 mW transmit, 10 m range, -20 dBm noise:
    gamma = 16 * 16 / (4 * 100 * 0.01) = 64."""
    cfg = SensingConfig()
    assert snr_gamma(dbm_to_linear(0.0), 10.0, 1.0, cfg) == pytest.approx(64.0, rel=1e-12)


def test_snr_scaling_laws():
    cfg = SensingConfig()
    base = snr_gamma(1.0, 10.0, 1.0, cfg)
    assert snr_gamma(2.0, 10.0, 1.0, cfg) == pytest.approx(2 * base, rel=1e-12)
    assert snr_gamma(1.0, 20.0, 1.0, cfg) == pytest.approx(base / 4, rel=1e-12)
    assert snr_gamma(1.0, 10.0, 2.0, cfg) == pytest.approx(4 * base, rel=1e-12)
    big = SensingConfig(n_tx=8)
    assert snr_gamma(1.0, 10.0, 1.0, big) == pytest.approx(4 * base, rel=1e-12)
    with pytest.raises(ValueError):
        snr_gamma(1.0, 0.0, 1.0, cfg)
    with pytest.raises(ValueError):
        snr_gamma(0.0, 10.0, 1.0, cfg)


def test_crb_scaling_laws():
    cfg = SensingConfig()
    base = crb_range_var(100.0, cfg)
    assert base > 0
    assert crb_range_var(200.0, cfg) == pytest.approx(base / 2, rel=1e-12)
    wide = SensingConfig(bandwidth_hz=2e9)
    assert crb_range_var(100.0, wide) == pytest.approx(base / 4, rel=1e-12)
    slack = SensingConfig(alpha=2.0)
    assert crb_range_var(100.0, slack) == pytest.approx(2 * base, rel=1e-12)
    with pytest.raises(ValueError):
        crb_range_var(0.0, cfg)


def test_crb_frozen_value():
    """c^2 / (8 pi^2 * 100 * (1 GHz)^2) in meters squared."""
    cfg = SensingConfig()
    assert crb_range_var(100.0, cfg) == pytest.approx(1.1382867314e-05, rel=1e-9)


# ---------------------------------------------------------------------------
# statistics maps
# ---------------------------------------------------------------------------

def _toy_gt():
    values = np.array([[10.0, 20.0], [0.0, 40.0]])
    valid = np.array([[True, True], [False, True]])
    return DistanceMatrix(values, valid)


def test_build_stat_maps_values_and_invalid_convention():
    cfg = SensingConfig()
    gt = _toy_gt()
    rcs = np.array([[1.0, 0.5], [0.0, 2.0]])
    maps = build_stat_maps(gt, rcs, dbm_to_linear(0.0), cfg)
    assert maps.snr[0, 0] == pytest.approx(64.0, rel=1e-12)
    assert maps.snr[0, 1] == pytest.approx(64.0 / 16, rel=1e-12)  # rho/2, d*2
    assert maps.var[0, 0] == pytest.approx(crb_range_var(maps.snr[0, 0], cfg), rel=1e-12)
    assert maps.detp[0, 0] == pytest.approx(
        detection_probability(maps.snr[0, 0], cfg.detection_threshold), rel=1e-12)
    # invalid beam: zero SNR and variance, detection entry = false-alarm rate
    assert maps.snr[1, 0] == 0.0
    assert maps.var[1, 0] == 0.0
    assert maps.detp[1, 0] == cfg.p_fa
    assert np.array_equal(maps.valid, gt.valid)


def test_build_stat_maps_rejects_bad_rcs():
    cfg = SensingConfig()
    gt = _toy_gt()
    with pytest.raises(ValueError):
        build_stat_maps(gt, np.zeros((2, 2)), 1.0, cfg)
    with pytest.raises(ValueError):
        build_stat_maps(gt, np.ones((3, 2)), 1.0, cfg)


def test_stat_maps_validation():
    with pytest.raises(ValueError):
        StatMaps(np.zeros((2, 2)), np.zeros((2, 2)),
                 np.full((2, 2), 1.5), np.ones((2, 2), dtype=bool))
    with pytest.raises(ValueError):
        StatMaps(np.zeros((2, 3)), np.zeros((2, 2)),
                 np.zeros((2, 2)), np.ones((2, 2), dtype=bool))


def test_normalize_variance():
    out = normalize_variance(np.array([[1.0, 3.0]]))
    assert np.allclose(out, [[0.5, 1.5]])
    assert out.mean() == pytest.approx(1.0, rel=1e-15)
    grid = np.exp(np.linspace(-3, 5, 24)).reshape(4, 6)
    assert normalize_variance(grid).mean() == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ValueError):
        normalize_variance(np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        normalize_variance(np.array([1.0, np.inf]))


# ---------------------------------------------------------------------------
# degradation
# ---------------------------------------------------------------------------

def _maps_like(gt, detp_value, var_value, p_fa=0.01):
    detp = np.where(gt.valid, detp_value, p_fa)
    var = np.where(gt.valid, var_value, 0.0)
    snr = np.where(gt.valid, 1.0, 0.0)
    return StatMaps(snr, var, detp, gt.valid.copy())


def test_degrade_reproduces_documented_draw_order():
    gt = DistanceMatrix(np.full((8, 8), 30.0), np.ones((8, 8), dtype=bool))
    maps = _maps_like(gt, 0.7, 0.25)
    seed = (9, 3, 1)
    out = degrade(gt, maps, seed)
    rng = as_stream(seed)
    z = rng.standard_normal(gt.shape)
    u = rng.uniform(size=gt.shape)
    expect_valid = u < 0.7
    assert np.array_equal(out.valid, expect_valid)
    assert np.allclose(out.values[expect_valid],
                       (30.0 + 0.5 * z)[expect_valid], rtol=1e-14)
    assert np.all(out.values[~expect_valid] == 0.0)


def test_degrade_common_random_numbers_coupling():
    """Same seed, scaled maps: masks nest and residuals scale exactly."""
    gt = DistanceMatrix(np.full((16, 16), 40.0), np.ones((16, 16), dtype=bool))
    a = degrade(gt, _maps_like(gt, 0.8, 1.0), (9, 0, 0))
    b = degrade(gt, _maps_like(gt, 0.4, 4.0), (9, 0, 0))
    assert np.all(b.valid <= a.valid)  # lower detection keeps a subset
    both = a.valid & b.valid
    assert np.allclose(b.values[both] - 40.0, 2.0 * (a.values[both] - 40.0),
                       rtol=1e-12)


def test_degrade_preserves_invalid_and_clamps_negative():
    values = np.array([[0.05, 25.0], [0.0, 25.0]])
    valid = np.array([[True, True], [False, True]])
    gt = DistanceMatrix(values, valid)
    maps = _maps_like(gt, 1.0, 100.0)
    hit_negative = False
    for k in range(40):
        out = degrade(gt, maps, (9, 1, k))
        assert not out.valid[1, 0]
        assert out.values[1, 0] == 0.0
        assert np.all(out.values[out.valid] >= 0.0)
        rng = as_stream((9, 1, k))
        z = rng.standard_normal(gt.shape)
        if 0.05 + 10.0 * z[0, 0] < 0:
            hit_negative = True
            assert not out.valid[0, 0]
    assert hit_negative


def test_degrade_empirical_rates(rng):
    gt = DistanceMatrix(np.full((32, 32), 50.0), np.ones((32, 32), dtype=bool))
    maps = _maps_like(gt, 0.6, 4.0)
    rates = []
    resid = []
    for k in range(30):
        out = degrade(gt, maps, (9, 2, k))
        rates.append(out.valid.mean())
        resid.append(out.values[out.valid] - 50.0)
    resid = np.concatenate(resid)
    n = 30 * 32 * 32
    assert np.mean(rates) == pytest.approx(0.6, abs=4 * np.sqrt(0.6 * 0.4 / n))
    assert np.mean(resid) == pytest.approx(0.0, abs=4 * 2.0 / np.sqrt(resid.size))
    assert np.var(resid) == pytest.approx(4.0, rel=0.1)


def test_degrade_shape_mismatch():
    gt = _toy_gt()
    maps = _maps_like(DistanceMatrix(np.full((3, 3), 5.0),
                                     np.ones((3, 3), dtype=bool)), 0.5, 1.0)
    with pytest.raises(ValueError):
        degrade(gt, maps, 0)


# ---------------------------------------------------------------------------
# admissibility gate
# ---------------------------------------------------------------------------

def test_admissibility_gate():
    valid = np.ones((2, 2), dtype=bool)
    maps = StatMaps(np.ones((2, 2)), np.full((2, 2), 9.0),
                    np.full((2, 2), 0.4), valid)
    ok, mean_p, mean_v = admissibility(maps, 0.1, 25.0)
    assert ok and mean_p == 0.4 and mean_v == 9.0
    # detection floor violated
    ok, mean_p, _ = admissibility(maps, 0.5, 25.0)
    assert not ok and mean_p == 0.4
    # variance ceiling violated
    ok, _, mean_v = admissibility(maps, 0.1, 4.0)
    assert not ok and mean_v == 9.0
    # means run over every cell, including invalid ones
    mixed = StatMaps(np.ones((2, 2)),
                     np.array([[0.0, 8.0], [8.0, 8.0]]),
                     np.array([[0.01, 0.9], [0.9, 0.9]]),
                     np.array([[False, True], [True, True]]))
    _, mean_p, mean_v = admissibility(mixed, 0.1, 25.0)
    assert mean_p == pytest.approx((0.01 + 3 * 0.9) / 4)
    assert mean_v == pytest.approx(6.0)
