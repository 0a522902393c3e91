"""Classical recovery baselines the learned model is compared against."""

from __future__ import annotations

import warnings

import numpy as np

from .geometry import DistanceMatrix


def passthrough(observed: DistanceMatrix) -> DistanceMatrix:
    """No-op recovery: the degraded grid itself."""
    return observed.copy()


def mt_enhance(observed: DistanceMatrix, max_iters: int | None = None) -> DistanceMatrix:
    """Neighborhood median completion of missing cells.

    Repeatedly assigns each invalid cell the median of its valid 3x3
    neighbors until no cell changes or the iteration cap (W+H by default)
    is reached. Originally valid cells are never modified and no denoising
    is applied to them; isolated unreachable regions stay invalid.
    """
    values = observed.values.copy()
    valid = observed.valid.copy()
    w, h = values.shape
    if max_iters is None:
        max_iters = w + h
    work = np.where(valid, values, np.nan)
    for _ in range(max_iters):
        if valid.all():
            break
        padded = np.pad(work, 1, constant_values=np.nan)
        stacks = [padded[1 + di:1 + di + w, 1 + dj:1 + dj + h]
                  for di in (-1, 0, 1) for dj in (-1, 0, 1)
                  if not (di == 0 and dj == 0)]
        neigh = np.stack(stacks)
        with np.errstate(all="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore", category=RuntimeWarning)
            med = np.nanmedian(neigh, axis=0)
        fillable = ~valid & np.isfinite(med)
        if not fillable.any():
            break
        work = np.where(fillable, med, work)
        valid = valid | fillable
    values = np.where(valid, work, 0.0)
    return DistanceMatrix(values=np.clip(values, 0.0, None), valid=valid)
