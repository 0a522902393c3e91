"""Anisotropic forward corruption and the conditional reverse sampler.

The forward process perturbs a clean distance grid with independent Gaussian
noise whose per-cell variance is sigma_t * nvar(i,j), where nvar is the
trace-normalized variance map derived from the sensing bound, and thins
cells with a Bernoulli mask whose keep probability is rho_t * detp(i,j).
sigma_t is kept in variance units deliberately: the noise level multiplies
the variance map directly, and the conventional squared-level behavior is
reachable by configuring the schedule values accordingly.

The reverse sampler initializes from the observed (degraded) grid with
invalid cells filled by their nearest valid neighbor plus terminal-level
anisotropic noise, then repeatedly asks a clean-predictor denoiser for its
estimate and contracts the state toward it:

    state <- pred + (sigma_{t-1} / sigma_t) * (state - pred)

with sigma_0 defined as 0, so the final step returns the prediction exactly.
In stochastic mode each step also adds N(0, eta^2 * nvar) with
eta^2 = max(sigma_{t-1} * (sigma_t - sigma_{t-1}), 0), which vanishes at the
final step. All sampler-space grids are distances divided by d_max and are
mapped back to meters on output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ConfigError, SamplerDivergence
from .geometry import DistanceMatrix
from .rng import TAG_FORWARD, TAG_SAMPLER, as_stream, stream
from .sensing import StatMaps


@dataclass(frozen=True)
class DiffusionSchedule:
    """Ascending noise levels sigma_1..sigma_T and keep-ratio schedule rho_t."""

    n_steps: int = 50
    sigma_min: float = 1e-4
    sigma_max: float = 1.0
    rho_min: float = 0.05
    spacing: str = "geometric"
    _sigmas: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_steps < 1:
            raise ConfigError("n_steps must be >= 1")
        if not (0 < self.sigma_min <= self.sigma_max):
            raise ConfigError("need 0 < sigma_min <= sigma_max")
        if not (0 <= self.rho_min <= 1):
            raise ConfigError("rho_min must lie in [0, 1]")
        if self.spacing not in ("geometric", "linear"):
            raise ConfigError(f"unknown schedule spacing {self.spacing!r}")
        if self.n_steps == 1:
            levels = np.array([self.sigma_max])
        elif self.spacing == "geometric":
            levels = np.geomspace(self.sigma_min, self.sigma_max, self.n_steps)
        else:
            levels = np.linspace(self.sigma_min, self.sigma_max, self.n_steps)
        object.__setattr__(self, "_sigmas", levels)

    def sigma(self, t: int) -> float:
        """Noise level at step t in [0, T]; sigma_0 is 0 by definition."""
        if t == 0:
            return 0.0
        if not (1 <= t <= self.n_steps):
            raise ConfigError(f"step {t} outside [0, {self.n_steps}]")
        return float(self._sigmas[t - 1])

    def rho(self, t: int) -> float:
        """Keep-ratio at step t: linear from 1 at t=1 down to rho_min at t=T."""
        if t == 0:
            return 1.0
        if not (1 <= t <= self.n_steps):
            raise ConfigError(f"step {t} outside [0, {self.n_steps}]")
        if self.n_steps == 1:
            return float(self.rho_min)
        frac = (t - 1) / (self.n_steps - 1)
        return float(1.0 + frac * (self.rho_min - 1.0))

    def to_dict(self) -> dict:
        return {
            "T": self.n_steps,
            "sigma_min": self.sigma_min,
            "sigma_max": self.sigma_max,
            "rho_min": self.rho_min,
            "spacing": self.spacing,
        }

    @staticmethod
    def from_dict(d: dict) -> "DiffusionSchedule":
        return DiffusionSchedule(
            n_steps=int(d["T"]),
            sigma_min=float(d["sigma_min"]),
            sigma_max=float(d["sigma_max"]),
            rho_min=float(d["rho_min"]),
            spacing=str(d.get("spacing", "geometric")),
        )


def normalize_dm(values, d_max: float):
    if d_max <= 0:
        raise ConfigError("d_max must be positive")
    return np.asarray(values, dtype=float) / d_max


def denormalize_dm(values, d_max: float):
    if d_max <= 0:
        raise ConfigError("d_max must be positive")
    return np.asarray(values, dtype=float) * d_max


def _grid_values(clean):
    if isinstance(clean, DistanceMatrix):
        return clean.values
    return np.asarray(clean, dtype=float)


def forward_noise(clean, t: int, sched: DiffusionSchedule, nvar, seed):
    """Draw one sample of N(clean, sigma_t * nvar), cellwise independent."""
    values = _grid_values(clean)
    nvar = np.asarray(nvar, dtype=float)
    if nvar.shape != values.shape:
        raise ValueError("variance map shape mismatch")
    sig = sched.sigma(t)
    if sig == 0.0:
        return values.copy()
    rng = as_stream(seed)
    return values + np.sqrt(sig * nvar) * rng.standard_normal(values.shape)


def forward_mask(detp, rho_t: float, seed):
    """Bernoulli keep mask: cell kept iff rho_t * detp > u with u ~ U(0,1)."""
    detp = np.asarray(detp, dtype=float)
    rng = as_stream(seed)
    u = rng.uniform(size=detp.shape)
    return rho_t * detp > u


def forward_degrade(clean, t: int, sched: DiffusionSchedule, nvar, detp, seed):
    """Noise then thin: returns (values with dropped cells zeroed, keep mask).

    Noise and mask use separate derived substreams of the given key, so the
    two corruptions are statistically independent.
    """
    key = as_stream(seed).spawn(2)
    noisy = forward_noise(clean, t, sched, nvar, key[0])
    mask = forward_mask(detp, sched.rho(t), key[1])
    return np.where(mask, noisy, 0.0), mask


def fill_invalid_nearest(values, valid):
    """Replace invalid cells by the value of the nearest valid cell.

    Euclidean nearest on the grid index lattice. A grid with no valid cells
    is filled with the constant 0.5 (mid-scale in normalized units).
    """
    values = np.asarray(values, dtype=float)
    valid = np.asarray(valid, dtype=bool)
    if valid.all():
        return values.copy()
    if not valid.any():
        return np.full_like(values, 0.5)
    _, (ii, jj) = ndimage.distance_transform_edt(~valid, return_indices=True)
    return values[ii, jj]


@dataclass
class ConditioningBundle:
    """Everything the denoiser may condition on, one measurement's worth."""

    det_prob: np.ndarray
    norm_var: np.ndarray
    observed_dm: DistanceMatrix
    observed_mask: np.ndarray
    d_max: float

    def __post_init__(self):
        shape = self.det_prob.shape
        if self.norm_var.shape != shape or self.observed_dm.values.shape != shape \
                or self.observed_mask.shape != shape:
            raise ValueError("conditioning grids must share one shape")
        if np.any(self.det_prob < 0) or np.any(self.det_prob > 1):
            raise ValueError("detection probabilities must lie in [0, 1]")
        if self.d_max <= 0:
            raise ConfigError("d_max must be positive")

    @staticmethod
    def from_measurement(maps: StatMaps, observed: DistanceMatrix, d_max: float):
        return ConditioningBundle(
            det_prob=maps.detp.copy(),
            norm_var=_normalize_with_floor(maps.var),
            observed_dm=observed.copy(),
            observed_mask=observed.valid.copy(),
            d_max=float(d_max),
        )

    @property
    def shape(self):
        return self.det_prob.shape


def _normalize_with_floor(var):
    """Trace-normalize a variance map that contains zero cells.

    Cells the sensing model marks unmeasurable carry variance 0; they get the
    smallest positive variance present before normalization so the map stays
    strictly positive (required downstream as a Gaussian variance).
    """
    var = np.asarray(var, dtype=float)
    pos = var[var > 0]
    if pos.size == 0:
        return np.ones_like(var)
    floored = np.where(var > 0, var, pos.min())
    return floored * (var.size / floored.sum())


def reverse_sample(denoiser, cond: ConditioningBundle, sched: DiffusionSchedule,
                   seed, stochastic: bool = False, start_step: int | None = None,
                   ) -> DistanceMatrix:
    """Run the conditional reverse chain; returns a fully valid grid in meters.

    denoiser maps (state grid, t, cond) -> clean-prediction grid, all in
    normalized units. In deterministic mode the seed only randomizes the
    initialization, so the result is a pure function of
    (denoiser, cond, schedule, seed).
    """
    t_start = sched.n_steps if start_step is None else int(start_step)
    if not (1 <= t_start <= sched.n_steps):
        raise ConfigError(f"start step {t_start} outside [1, {sched.n_steps}]")
    nvar = np.asarray(cond.norm_var, dtype=float)
    rng = as_stream(seed)

    obs_norm = normalize_dm(cond.observed_dm.values, cond.d_max)
    state = fill_invalid_nearest(obs_norm, cond.observed_mask)
    state = state + np.sqrt(sched.sigma(t_start) * nvar) * rng.standard_normal(nvar.shape)

    for t in range(t_start, 0, -1):
        pred = np.asarray(denoiser(state, t, cond), dtype=float)
        if pred.shape != state.shape:
            raise ValueError(f"denoiser returned shape {pred.shape}, expected {state.shape}")
        if not np.all(np.isfinite(pred)):
            raise SamplerDivergence(t)
        ratio = sched.sigma(t - 1) / sched.sigma(t)
        state = pred + ratio * (state - pred)
        if stochastic:
            eta_sq = max(sched.sigma(t - 1) * (sched.sigma(t) - sched.sigma(t - 1)), 0.0)
            if eta_sq > 0.0:
                state = state + np.sqrt(eta_sq * nvar) * rng.standard_normal(nvar.shape)
        if not np.all(np.isfinite(state)):
            raise SamplerDivergence(t)

    values = denormalize_dm(state, cond.d_max)
    return DistanceMatrix(values=np.clip(values, 0.0, None),
                          valid=np.ones(values.shape, dtype=bool))


def analytic_posterior_denoiser(prior, sched: DiffusionSchedule, nvar):
    """Exact posterior-mean denoiser under a finite uniform prior.

    prior is a sequence of clean grids (normalized units, <= 32 members).
    The returned function computes E[clean | state] by direct Bayes
    enumeration with the likelihood state ~ N(member, sigma_t * nvar):
    a softmax over member log-likelihoods. Serves as the oracle the trained
    network is compared against.
    """
    members = [np.asarray(m, dtype=float) for m in prior]
    if not 1 <= len(members) <= 32:
        raise ValueError("prior must hold between 1 and 32 members")
    shape = members[0].shape
    if any(m.shape != shape for m in members):
        raise ValueError("prior members must share one shape")
    stack = np.stack(members)
    nvar = np.asarray(nvar, dtype=float)
    if nvar.shape != shape:
        raise ValueError("variance map shape mismatch")
    if np.any(nvar <= 0):
        raise ValueError("variance map must be strictly positive")

    def denoiser(state, t, cond):
        sig = sched.sigma(t)
        if sig == 0.0:
            sig = sched.sigma(1)
        resid = state[None, :, :] - stack
        loglik = -0.5 * np.sum(resid**2 / (sig * nvar)[None, :, :], axis=(1, 2))
        loglik -= loglik.max()
        w = np.exp(loglik)
        w /= w.sum()
        return np.tensordot(w, stack, axes=1)

    return denoiser


def noise_matched_start(sched: DiffusionSchedule, target_sigma: float) -> int:
    """Step whose noise level sits closest, on a log scale, to a target.

    Starting the reverse chain where sigma_t is comparable to the
    measurement's own noise floor lets an accurate observation enter the
    chain late (little re-noising, few denoising steps) while a poor one
    enters early and gets the full prior-driven reconstruction. Ties pick
    the later step.
    """
    if target_sigma <= sched.sigma(1):
        return 1
    if target_sigma >= sched.sigma(sched.n_steps):
        return sched.n_steps
    log_target = np.log(target_sigma)
    best_t, best_gap = sched.n_steps, float("inf")
    for t in range(1, sched.n_steps + 1):
        gap = abs(np.log(sched.sigma(t)) - log_target)
        if gap <= best_gap:
            best_t, best_gap = t, gap
    return best_t


def sparsity_matched_start(sched: DiffusionSchedule, mean_detp: float,
                           observed_fraction: float) -> int:
    """Step whose expected keep fraction best matches the observed one.

    The forward mask keeps cells with probability rho_t * detp; inference may
    start the reverse chain where rho_t * mean(detp) is closest to the valid
    fraction actually observed, instead of at T.
    """
    best_t, best_gap = sched.n_steps, float("inf")
    for t in range(1, sched.n_steps + 1):
        gap = abs(sched.rho(t) * mean_detp - observed_fraction)
        if gap <= best_gap:
            best_t, best_gap = t, gap
    return best_t
