"""Per-pixel fusion of the depth-derived and UDA prediction branches.

For each class ``i`` the fused score is::

    w_dep[i] * softmax(z_dep / T)[i] + w_uda[i] * softmax(z_uda / T)[i]

Scores are not renormalised; only their argmax is consumed downstream.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .classweights import ClassWeights
from .errors import NonFiniteError, ShapeMismatchError

DEFAULT_TEMPERATURE = 6.0


@dataclass(frozen=True)
class FusionConfig:
    weights: ClassWeights
    temperature: float = DEFAULT_TEMPERATURE

    def __post_init__(self):
        if not (self.temperature > 0 and np.isfinite(self.temperature)):
            raise ValueError(f"temperature must be positive, got {self.temperature}")


def softmax_t(logits: np.ndarray, temperature: float = DEFAULT_TEMPERATURE) -> np.ndarray:
    """Temperature softmax over the last axis, in float64."""
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NonFiniteError("logits contain non-finite values")
    e = np.exp((z - z.max(axis=-1, keepdims=True)) / temperature)
    return e / e.sum(axis=-1, keepdims=True)


def _check_pair(dep, uda, cfg: FusionConfig):
    dep = np.asarray(dep)
    uda = np.asarray(uda)
    if dep.ndim != 3 or uda.ndim != 3:
        raise ShapeMismatchError("logits must be (H, W, C) arrays")
    if dep.shape != uda.shape:
        raise ShapeMismatchError(f"branch shapes differ: {dep.shape} vs {uda.shape}")
    if dep.shape[2] != len(cfg.weights):
        raise ShapeMismatchError(
            f"logits have {dep.shape[2]} channels but weights cover {len(cfg.weights)} classes"
        )
    if not (np.all(np.isfinite(dep)) and np.all(np.isfinite(uda))):
        raise NonFiniteError("logits contain non-finite values")
    return dep, uda


def fuse(dep: np.ndarray, uda: np.ndarray, cfg: FusionConfig, backend: str | None = None) -> np.ndarray:
    """Fused (H, W, C) float64 scores."""
    dep, uda = _check_pair(dep, uda, cfg)
    return kernels.fuse_scores(dep, uda, cfg.weights.w_dep, cfg.weights.w_uda,
                               cfg.temperature, backend=backend)


def decide_labels(scores: np.ndarray) -> np.ndarray:
    """Argmax per pixel; the lowest class id wins ties."""
    scores = np.asarray(scores)
    if not np.all(np.isfinite(scores)):
        raise NonFiniteError("scores contain non-finite values")
    return scores.argmax(axis=-1).astype(np.uint8)


def fuse_labels(dep: np.ndarray, uda: np.ndarray, cfg: FusionConfig,
                backend: str | None = None) -> np.ndarray:
    """``decide_labels(fuse(...))`` in a single pass without materialising scores."""
    dep, uda = _check_pair(dep, uda, cfg)
    return kernels.fuse_labels(dep, uda, cfg.weights.w_dep, cfg.weights.w_uda,
                               cfg.temperature, backend=backend)
