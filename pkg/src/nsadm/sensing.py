"""Per-beam sensing statistics and the physically derived degradation model.

For every beam with a ground-truth range d and surface reflectivity rho, the
monostatic link budget gives a post-processing SNR
    gamma = n_tx^2 * n_rx^2 * rho^2 * P_s / (4 d^2 sigma_z^2),
the attainable range-error variance follows the estimation bound
    var_d = alpha * c^2 / (8 pi^2 gamma B^2),  1 <= alpha <= 2,
and the probability that the beam yields a detection at all is
    P_d = Q1(sqrt(2 gamma), sqrt(2 lambda)),  lambda = -ln(p_fa),
with Q1 the first-order generalized Marcum function. A measured distance
matrix is then the ground truth plus zero-mean anisotropic Gaussian noise,
elementwise-masked by independent Bernoulli trials with the per-beam
detection probabilities.

Powers are handled on a linear milliwatt scale (dBm converts via 10^(x/10)).

Q1 is computed from the series
    Q1(a, b) = exp(-(a^2+b^2)/2) * sum_k (a/b)^k I_k(ab)
with exponentially scaled Bessel terms obtained by Miller's backward
recurrence (normalized through I_0(x) + 2 sum I_k(x) = e^x), switching to a
normal tail once both arguments exceed 30. Absolute accuracy is ~1e-12 on
[0, 30]^2; an independent quadrature oracle in the test suite checks this.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .geometry import DistanceMatrix
from .rng import as_stream

C0 = 299_792_458.0  # vacuum speed of light, m/s

_RESCALE = 1e-250
_RESCALE_INV = 1e250
_SEPARABLE_X = 1e-30


def dbm_to_linear(dbm):
    """dBm to linear milliwatts."""
    return 10.0 ** (np.asarray(dbm, dtype=np.float64) / 10.0)


@dataclass
class SensingConfig:
    """Array, waveform, and detector parameters for the statistics maps."""

    n_tx: int = 4
    n_rx: int = 4
    bandwidth_hz: float = 1.0e9
    noise_power_dbm: float = -20.0
    p_fa: float = 0.01
    alpha: float = 1.0   # bound slack factor, must stay in [1, 2]

    def __post_init__(self):
        if self.n_tx < 1 or self.n_rx < 1:
            raise ValueError("array sizes must be >= 1")
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth must be positive")
        if not (0.0 < self.p_fa < 1.0):
            raise ValueError("p_fa must lie in (0, 1)")
        if not (1.0 <= self.alpha <= 2.0):
            raise ValueError("alpha must lie in [1, 2]")

    @property
    def noise_power_linear(self) -> float:
        return float(dbm_to_linear(self.noise_power_dbm))

    @property
    def detection_threshold(self) -> float:
        """Normalized threshold lambda = -ln(p_fa)."""
        return float(-np.log(self.p_fa))


# ---------------------------------------------------------------------------
# Marcum Q1
# ---------------------------------------------------------------------------


def _marcum_series(a, b):
    """Series evaluation for 1-D float64 arrays with min(a,b) not huge."""
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    upper = a > b      # complementary-series branch
    x = a * b
    prefac = np.exp(-0.5 * (a - b) ** 2)
    ratio = np.where(x > 0, lo / np.where(hi > 0, hi, 1.0), 0.0)

    out = np.empty_like(a)
    # Separable region: when the product a*b is tiny the Bessel couplings
    # I_k(ab) collapse and Q1 equals exp(-b^2/2) up to O(ab) corrections,
    # far below machine epsilon. This covers a == 0 (exact limit), b == 0
    # (exp(0) = 1, also exact), and denormal products where the backward
    # recurrence's 2k/x factor would overflow (x below roughly 1e-55 once
    # f_k sits near the rescale ceiling).
    separable = x < _SEPARABLE_X
    out[separable] = np.exp(-0.5 * b[separable] ** 2)
    # far tails where the prefactor underflows: the sum cannot rescue it
    tail = (prefac == 0.0) & ~separable
    out[tail] = np.where(upper[tail], 1.0, 0.0)

    core = ~(separable | tail)
    if not np.any(core):
        return out
    xc = x[core]
    rc = ratio[core]
    upc = upper[core]
    kmax = int(np.ceil((xc + 12.0 * np.sqrt(xc) + 60.0).max()))

    # Miller backward recurrence for f_k proportional to I_k(x), rescaled on
    # the fly; only ratios survive, so rescaling is exact.
    f_up = np.zeros_like(xc)            # f_{k+1}
    f_k = np.full_like(xc, 1e-280)      # f_k at k = kmax
    sum_norm = f_k.copy()               # sum_{k>=1} f_k
    sum_w = np.power(rc, kmax) * f_k    # sum_{k>=1} ratio^k f_k
    for k in range(kmax, 0, -1):
        f_dn = f_up + (2.0 * k / xc) * f_k
        f_up = f_k
        f_k = f_dn
        if k > 1:
            sum_norm += f_k
            sum_w += np.power(rc, k - 1) * f_k
        big = f_k > _RESCALE_INV
        if np.any(big):
            for arr in (f_up, f_k, sum_norm, sum_w):
                arr[big] *= _RESCALE
    f0 = f_k
    norm = f0 + 2.0 * sum_norm
    weighted = np.where(upc, sum_w, sum_w + f0) / norm
    out[core] = np.where(upc, 1.0 - prefac[core] * weighted, prefac[core] * weighted)
    return np.clip(out, 0.0, 1.0)


def marcum_q1(a, b):
    """First-order generalized Marcum function Q1(a, b), vectorized.

    Exact limits Q1(a, 0) = 1 and Q1(0, b) = exp(-b^2/2) are honored; for
    a, b both above 30 a normal tail approximation takes over.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.any(~np.isfinite(a)) or np.any(~np.isfinite(b)):
        raise ValueError("marcum_q1 arguments must be finite")
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("marcum_q1 arguments must be non-negative")
    a, b = np.broadcast_arrays(a, b)
    shape = a.shape
    a = a.reshape(-1).astype(np.float64)
    b = b.reshape(-1).astype(np.float64)
    out = np.empty_like(a)
    large = (a > 30.0) & (b > 30.0)
    if np.any(large):
        out[large] = 0.5 * erfc((b[large] - a[large]) / np.sqrt(2.0))
    rest = ~large
    if np.any(rest):
        out[rest] = _marcum_series(a[rest], b[rest])
    out = out.reshape(shape)
    return float(out) if shape == () else out


def detection_probability(gamma, threshold):
    """Beam detection probability Q1(sqrt(2 gamma), sqrt(2 lambda))."""
    gamma = np.asarray(gamma, dtype=np.float64)
    if np.any(gamma < 0):
        raise ValueError("gamma must be non-negative")
    if np.any(np.asarray(threshold) < 0):
        raise ValueError("threshold must be non-negative")
    return marcum_q1(np.sqrt(2.0 * gamma), np.sqrt(2.0 * np.asarray(threshold, dtype=np.float64)))


# ---------------------------------------------------------------------------
# link-budget statistics
# ---------------------------------------------------------------------------


def snr_gamma(p_s_linear, distance, rcs, cfg: SensingConfig):
    """Post-processing SNR per beam. p_s_linear and noise share the same scale."""
    d = np.asarray(distance, dtype=np.float64)
    rho = np.asarray(rcs, dtype=np.float64)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    if p_s_linear <= 0:
        raise ValueError("transmit power must be positive")
    num = (cfg.n_tx**2) * (cfg.n_rx**2) * rho**2 * p_s_linear
    return num / (4.0 * d**2 * cfg.noise_power_linear)


def crb_range_var(gamma, cfg: SensingConfig):
    """Range-error variance floor alpha c^2 / (8 pi^2 gamma B^2), meters^2."""
    gamma = np.asarray(gamma, dtype=np.float64)
    if np.any(gamma <= 0):
        raise ValueError("gamma must be positive where a variance is requested "
                         "(zero-SNR cells must be masked instead)")
    return cfg.alpha * C0**2 / (8.0 * np.pi**2 * gamma * cfg.bandwidth_hz**2)


@dataclass
class StatMaps:
    """Per-beam SNR, range-error variance, and detection probability grids.

    Invalid beams carry snr = 0 and var = 0; their detection entry is the
    false-alarm rate (a beam with no echo can still fire spuriously, though
    the degradation below never synthesizes such ghost ranges).
    """

    snr: np.ndarray
    var: np.ndarray
    detp: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        for name in ("snr", "var", "detp"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != np.asarray(self.valid).shape:
                raise ValueError(f"{name} shape mismatch")
            setattr(self, name, arr)
        self.valid = np.asarray(self.valid, dtype=bool)
        if np.any((self.detp < 0) | (self.detp > 1)):
            raise ValueError("detection probabilities must lie in [0, 1]")


def build_stat_maps(gt: DistanceMatrix, rcs_map, p_s_linear, cfg: SensingConfig) -> StatMaps:
    """Evaluate the three statistics maps for one scene at one transmit power."""
    rcs_map = np.asarray(rcs_map, dtype=np.float64)
    if rcs_map.shape != gt.shape:
        raise ValueError("rcs map shape mismatch")
    valid = gt.valid
    if np.any(valid & (rcs_map <= 0)):
        raise ValueError("valid beams need positive reflectivity")
    snr = np.zeros(gt.shape)
    var = np.zeros(gt.shape)
    detp = np.full(gt.shape, cfg.p_fa)
    if np.any(valid):
        g = snr_gamma(p_s_linear, gt.values[valid], rcs_map[valid], cfg)
        snr[valid] = g
        var[valid] = crb_range_var(g, cfg)
        detp[valid] = detection_probability(g, cfg.detection_threshold)
    return StatMaps(snr, var, detp, valid.copy())


def normalize_variance(var_grid):
    """Rescale a positive variance grid so its entries sum to W*H (mean 1)."""
    var_grid = np.asarray(var_grid, dtype=np.float64)
    if np.any(~np.isfinite(var_grid)) or np.any(var_grid <= 0):
        raise ValueError("variance grid must be finite and strictly positive")
    return var_grid * (var_grid.size / var_grid.sum())


def degrade(gt: DistanceMatrix, maps: StatMaps, seed) -> DistanceMatrix:
    """Apply the measurement model: additive per-beam Gaussian range noise,
    then Bernoulli masking with the per-beam detection probabilities.

    Draw order is fixed (noise field first, then the mask field) and the
    stream is fully determined by `seed`, so calling with the same seed but
    different maps reuses the same underlying random fields. The pipeline
    leans on this: sweep points share draws, which couples them and makes
    trend comparisons low-variance.

    A noisy range that comes out negative is clamped to the sentinel 0 and
    invalidated. Beams invalid in the ground truth stay invalid.
    """
    if maps.var.shape != gt.shape:
        raise ValueError("stat maps do not match the distance matrix")
    rng = as_stream(seed)
    z = rng.standard_normal(gt.shape)
    u = rng.uniform(size=gt.shape)
    noisy = gt.values + np.sqrt(maps.var) * z
    detected = u < maps.detp
    valid = gt.valid & detected & (noisy >= 0.0)
    return DistanceMatrix(np.where(valid, noisy, 0.0), valid)


def admissibility(maps: StatMaps, rho_0, sigma_0_sq):
    """Scene observability gate: mean detection probability must reach rho_0
    and the mean per-beam variance must stay below sigma_0_sq.

    Returns (ok, mean_detection, mean_variance).
    """
    mean_p = float(maps.detp.mean())
    mean_v = float(maps.var.mean())
    return (mean_p >= rho_0) and (mean_v <= sigma_0_sq), mean_p, mean_v
