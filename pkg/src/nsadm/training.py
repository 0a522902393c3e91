"""Training loop, optimizers, and dependency-free checkpoint files.

Each training step draws a batch of scenes and a shared uniform diffusion
step t, then builds one training pair per scene: the dense noisy grid at
level t (the state the network learns to denoise, matching the reverse
chain whose running state is always dense) and a freshly synthesized
measurement of the same scene (the observation the network conditions on).
The measurement is drawn from the sensing model itself, with noise and
dropout independent of the state's noise, so the two inputs carry
complementary information and the network learns to fuse them instead of
treating the observation as a copy of the state. Measurement statistics
are randomly widened toward the ranges the degradation sweeps probe. The
network prediction is regressed onto the clean grid under the hybrid loss.
All randomness flows through counter-based streams keyed by (seed, step),
so the loss history is bitwise reproducible and independent of execution
order elsewhere.

Checkpoints are a JSON manifest plus a little-endian float32 blob of the
flattened parameter vector; loading reconstructs the network from the
manifest's seed and pad mode, then overwrites the parameters.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .diffusion import (ConditioningBundle, DiffusionSchedule,
                        _normalize_with_floor, forward_noise)
from .errors import ConfigError, TrainingDiverged
from .gridio import read_json, sha256_file, write_json
from .network import DenoiserNet, FeatureExtractor, build_denoiser_input, hybrid_loss
from .rng import TAG_TRAIN, stream
from .sensing import StatMaps, degrade


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 4
    epochs: int = 60
    loss_weight: float = 0.1     # weight of the feature-discrepancy term
    optimizer: str = "adam"      # "adam" | "sgd-momentum"
    lr_schedule: str = "cosine"  # "cosine" | "constant"
    seed: int = 0
    clip_norm: float = 1.0
    feature_seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError("learning rate must be >= 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch size and epochs must be >= 1")
        if self.loss_weight < 0:
            raise ConfigError("loss weight must be >= 0")
        if self.optimizer not in ("adam", "sgd-momentum"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.lr_schedule not in ("cosine", "constant"):
            raise ConfigError(f"unknown lr schedule {self.lr_schedule!r}")
        if self.clip_norm <= 0:
            raise ConfigError("clip norm must be positive")


class AdamOptimizer:
    """Adam with bias correction, on the flat parameter vector."""

    def __init__(self, size, lr, dtype=np.float32):
        self.lr = lr
        self.m = np.zeros(size, dtype=dtype)
        self.v = np.zeros(size, dtype=dtype)
        self.t = 0
        self.beta1, self.beta2, self.eps = 0.9, 0.999, 1e-8

    def step(self, theta, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        return theta - self.lr * mhat / (np.sqrt(vhat) + self.eps)


class MomentumOptimizer:
    """Classical momentum SGD."""

    def __init__(self, size, lr, dtype=np.float32, momentum=0.9):
        self.lr = lr
        self.momentum = momentum
        self.v = np.zeros(size, dtype=dtype)

    def step(self, theta, grad):
        self.v = self.momentum * self.v - self.lr * grad
        return theta + self.v


def _augment_maps(maps: StatMaps, rng) -> StatMaps:
    """Randomly widen the measurement statistics one training pair sees.

    A third of draws pin the detection probability to a constant in
    [0.05, 0.9] (sparser or denser than the transmit power alone would
    give), a third scale the noise variance by a factor in [1, 4], and the
    rest pass the maps through unchanged. These are the same perturbation
    families the degradation sweeps probe, so sweep-time conditioning stays
    inside the training distribution.
    """
    mode = rng.uniform()
    if mode < 1.0 / 3.0:
        ratio = rng.uniform(0.05, 0.9)
        detp = np.where(maps.valid, ratio, maps.detp)
        return StatMaps(maps.snr, maps.var, detp, maps.valid)
    if mode < 2.0 / 3.0:
        scale = rng.uniform(1.0, 4.0)
        return StatMaps(maps.snr, maps.var * scale, maps.detp, maps.valid)
    return maps


def clip_gradient(grad, max_norm):
    norm = float(np.linalg.norm(grad))
    if norm > max_norm and norm > 0:
        return grad * (max_norm / norm), norm
    return grad, norm


def smooth_history(raw, alpha=0.05):
    """Exponential moving average followed by a running minimum.

    The running minimum makes the curve monotone nonincreasing, which is the
    form the convergence checks consume; the raw series is kept alongside.
    """
    out = np.empty(len(raw))
    ema = raw[0]
    best = np.inf
    for i, x in enumerate(raw):
        ema = (1 - alpha) * ema + alpha * x
        best = min(best, ema)
        out[i] = best
    return out


def train(dataset, sched: DiffusionSchedule, cfg: TrainConfig, d_max: float,
          net: DenoiserNet | None = None, progress=None):
    """Fit the denoiser; returns (net, history dict).

    dataset: list of (clean DistanceMatrix, StatMaps) for admissible scenes.
    history holds per-step raw losses and the monotone-smoothed curve.
    """
    if not dataset:
        raise ConfigError("training dataset is empty")
    if net is None:
        net = DenoiserNet(seed=cfg.seed, dtype=np.float32)
    fx = FeatureExtractor(seed=cfg.feature_seed, dtype=np.float32)
    theta = net.get_flat()
    opt_cls = AdamOptimizer if cfg.optimizer == "adam" else MomentumOptimizer
    opt = opt_cls(theta.size, cfg.learning_rate, dtype=theta.dtype)

    steps_per_epoch = max(1, -(-len(dataset) // cfg.batch_size))
    total_steps = cfg.epochs * steps_per_epoch
    raw_losses = []

    for step in range(total_steps):
        if cfg.lr_schedule == "cosine":
            opt.lr = cfg.learning_rate * 0.5 * (1.0 + np.cos(np.pi * step / total_steps))
        rng = stream(TAG_TRAIN, cfg.seed, step)
        idx = rng.integers(0, len(dataset), size=cfg.batch_size)
        t = int(rng.integers(1, sched.n_steps + 1))

        batch_inputs = []
        batch_targets = []
        for k, i in enumerate(idx):
            clean, maps = dataset[int(i)]
            clean_norm = clean.values / d_max
            nvar = _normalize_with_floor(maps.var)
            noise_key, obs_key = rng.spawn(2)
            state = forward_noise(clean_norm, t, sched, nvar, noise_key)
            used_maps = _augment_maps(maps, rng)
            observed = degrade(clean, used_maps, obs_key)
            cond = ConditioningBundle.from_measurement(used_maps, observed, d_max)
            batch_inputs.append(build_denoiser_input(state, t, cond, sched.n_steps,
                                                     dtype=np.float32))
            batch_targets.append(clean_norm.astype(np.float32))

        x = np.stack(batch_inputs)
        preds = net.forward(x)
        loss_total = 0.0
        gpred = np.empty_like(preds)
        for k in range(len(idx)):
            li, gi = hybrid_loss(preds[k, 0], batch_targets[k], fx, cfg.loss_weight)
            loss_total += li / len(idx)
            gpred[k, 0] = gi / len(idx)
        if not np.isfinite(loss_total):
            raise TrainingDiverged(step)
        raw_losses.append(loss_total)

        net.backward(gpred.astype(np.float32))
        grad = net.grads_flat()
        grad, _ = clip_gradient(grad, cfg.clip_norm)
        theta = opt.step(theta, grad.astype(theta.dtype))
        net.set_flat(theta)
        if progress is not None and (step + 1) % steps_per_epoch == 0:
            progress(step + 1, total_steps, loss_total)

    history = {
        "raw": [float(v) for v in raw_losses],
        "smoothed": [float(v) for v in smooth_history(raw_losses)],
    }
    return net, history


def save_checkpoint(path_prefix, net: DenoiserNet, sched: DiffusionSchedule,
                    cfg: TrainConfig, d_max: float, extra=None):
    """Write <prefix>.json manifest and <prefix>.bin parameter blob."""
    blob_path = f"{path_prefix}.bin"
    manifest_path = f"{path_prefix}.json"
    flat = net.get_flat().astype("<f4")
    with open(blob_path, "wb") as f:
        f.write(flat.tobytes())
    manifest = {
        "format": "nsadm-checkpoint-v1",
        "param_count": int(flat.size),
        "blob_sha256": sha256_file(blob_path),
        "net_seed": cfg.seed,
        "d_max": d_max,
        "schedule": sched.to_dict(),
        "train_config": dataclasses.asdict(cfg),
    }
    if extra:
        manifest["extra"] = extra
    write_json(manifest_path, manifest)
    return manifest_path


def load_checkpoint(path_prefix):
    """Read a checkpoint; returns (net, schedule, train config, d_max)."""
    manifest = read_json(f"{path_prefix}.json")
    if manifest.get("format") != "nsadm-checkpoint-v1":
        raise ConfigError("not a recognized checkpoint manifest")
    blob_path = f"{path_prefix}.bin"
    if sha256_file(blob_path) != manifest["blob_sha256"]:
        raise ConfigError("checkpoint blob does not match its manifest hash")
    flat = np.frombuffer(open(blob_path, "rb").read(), dtype="<f4").copy()
    if flat.size != manifest["param_count"]:
        raise ConfigError("checkpoint blob has wrong parameter count")
    cfg = TrainConfig(**manifest["train_config"])
    net = DenoiserNet(seed=manifest["net_seed"], dtype=np.float32)
    net.set_flat(flat)
    sched = DiffusionSchedule.from_dict(manifest["schedule"])
    return net, sched, cfg, float(manifest["d_max"])
