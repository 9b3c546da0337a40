"""Per-class pixel frequencies and the derived fusion weights.

The UDA-branch weight of class ``i`` is ``1 / ln(delta + f_i)`` where
``f_i`` is the fraction of labelled source pixels that carry class ``i``.
The depth-branch weight is its complement. Because the raw weight is
always above 1 for ``delta`` near 1, the default mode first divides the
raw weights by their maximum so both vectors land in ``[0, 1]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .core import ClassTable
from .errors import EmptyStatisticsError, LabelValueError, WeightDomainError

DEFAULT_DELTA = 1.02


@dataclass(frozen=True)
class FrequencyStats:
    counts: np.ndarray  # int64, one entry per class
    total: int

    @property
    def freqs(self) -> np.ndarray:
        if self.total <= 0:
            raise EmptyStatisticsError("no labelled pixels; frequencies are undefined")
        return self.counts / self.total

    def __add__(self, other: "FrequencyStats") -> "FrequencyStats":
        return FrequencyStats(self.counts + other.counts, self.total + other.total)


@dataclass(frozen=True)
class ClassWeights:
    delta: float
    w_uda_raw: np.ndarray
    w_uda: np.ndarray
    w_dep: np.ndarray
    normalized: bool = True

    def __len__(self):
        return len(self.w_uda)


def count_labels(label: np.ndarray, table: ClassTable) -> np.ndarray:
    """Per-class pixel counts of one label map; ignore pixels are dropped."""
    label = np.asarray(label)
    hist = np.bincount(label.ravel().astype(np.int64), minlength=256)
    if hist.size > 256 or hist[table.num_classes:].sum() != hist[table.ignore_id]:
        bad = (label >= table.num_classes) & (label != table.ignore_id)
        r, c = np.argwhere(bad)[0]
        raise LabelValueError(
            f"label value {int(label[r, c])} at pixel {(int(r), int(c))} is not in the class table",
            pixel=(int(r), int(c)), value=int(label[r, c]),
        )
    return hist[: table.num_classes].astype(np.int64)


def compute_frequencies(labels: Iterable[np.ndarray], table: ClassTable) -> FrequencyStats:
    counts = np.zeros(table.num_classes, dtype=np.int64)
    seen = 0
    for label in labels:
        counts += count_labels(label, table)
        seen += 1
    if seen == 0:
        raise EmptyStatisticsError("label stream is empty")
    total = int(counts.sum())
    if total == 0:
        raise EmptyStatisticsError("every pixel carries the ignore id")
    return FrequencyStats(counts, total)


def uda_weights_raw(stats: FrequencyStats | np.ndarray, delta: float = DEFAULT_DELTA) -> np.ndarray:
    """Return ``1 / ln(delta + f)`` per class.

    ``stats`` may be a :class:`FrequencyStats` or an array of frequencies.
    """
    if not delta > 1:
        raise WeightDomainError(f"delta must exceed 1, got {delta}")
    f = stats.freqs if isinstance(stats, FrequencyStats) else np.asarray(stats, dtype=np.float64)
    if np.any(~np.isfinite(f)) or np.any(f < 0):
        raise WeightDomainError("frequencies must be finite and nonnegative")
    # log1p keeps precision when delta + f is close to 1
    return 1.0 / np.log1p((delta - 1.0) + f)


def finalize_weights(raw: np.ndarray, normalize: bool = True,
                     delta: float = DEFAULT_DELTA) -> ClassWeights:
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 1 or raw.size == 0:
        raise WeightDomainError("raw weights must be a nonempty vector")
    if np.any(~np.isfinite(raw)) or np.any(raw <= 0):
        raise WeightDomainError("raw weights must be positive and finite")
    w_uda = raw / raw.max() if normalize else raw.copy()
    return ClassWeights(float(delta), raw, w_uda, 1.0 - w_uda, normalize)


def class_weights(stats: FrequencyStats, delta: float = DEFAULT_DELTA,
                  normalize: bool = True) -> ClassWeights:
    return finalize_weights(uda_weights_raw(stats, delta), normalize=normalize, delta=delta)

