"""Distance-matrix degradation simulator and diffusion-based recovery toolkit.

Synthesizes ground-truth beam-range grids from random 3D scenes, degrades
them through a physical sensing model (SNR, detection probability, and
range-error variance per beam), recovers them with a noise- and
sparsity-aware diffusion model plus classical baselines, and validates its
own statistics by Monte Carlo.
"""

__version__ = "0.1.0"

from .config import ExperimentConfig, load_config
from .diffusion import (ConditioningBundle, DiffusionSchedule, forward_degrade,
                        forward_mask, forward_noise, reverse_sample)
from .errors import (ConfigError, GenerationError, SamplerDivergence,
                     TrainingDiverged, UndefinedMetric, ValidationFailure)
from .geometry import AngleGrid, DistanceMatrix
from .metrics import chamfer, coverage, rmse
from .network import DenoiserNet
from .scene import Scene, SceneConfig, generate_scene, raycast
from .sensing import SensingConfig, StatMaps, build_stat_maps, degrade
from .training import TrainConfig, load_checkpoint, save_checkpoint, train

__all__ = [
    "AngleGrid", "ConditioningBundle", "ConfigError", "DenoiserNet",
    "DiffusionSchedule", "DistanceMatrix", "ExperimentConfig",
    "GenerationError", "SamplerDivergence", "Scene", "SceneConfig",
    "SensingConfig", "StatMaps", "TrainConfig", "TrainingDiverged",
    "UndefinedMetric", "ValidationFailure", "build_stat_maps", "chamfer",
    "coverage", "degrade", "forward_degrade", "forward_mask", "forward_noise",
    "generate_scene", "load_checkpoint", "load_config", "raycast",
    "reverse_sample", "rmse", "save_checkpoint", "train", "__version__",
]
