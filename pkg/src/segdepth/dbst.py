"""Depth-ordered copy-paste synthesis of self-training samples.

Given a base image and ``N - 1`` source images, each with a pseudo-label
map and a depth map, every pixel of the output takes its colour and label
from the nearest candidate whose class is a "thing" and whose depth lies
strictly below its own image's percentile threshold. Pixels without any
candidate keep the base image. The composite is then optionally scaled,
cropped and colour-jittered.

All randomness for one output flows through a generator seeded by
``mix64(seed, base_index, replica)``, so results do not depend on how
work is scheduled.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from decimal import ROUND_CEILING, Decimal
from typing import Callable, Iterator, Sequence

import numpy as np
from PIL import Image, ImageEnhance

from . import kernels
from .core import ClassTable, DepthMap, SceneSample, check_same_shape
from .errors import CropError, NoValidDepthError, PoolTooSmallError, ShapeMismatchError

log = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def mix64(seed: int, *keys: int) -> int:
    h = splitmix64(seed & _MASK64)
    for k in keys:
        h = splitmix64(h ^ (k & _MASK64))
    return h


def stream(seed: int, base_index: int, replica: int) -> np.random.Generator:
    return np.random.default_rng(mix64(seed, base_index, replica))


@dataclass(frozen=True)
class AugmentConfig:
    scale_range: tuple[float, float] = (0.75, 1.5)
    crop: tuple[int, int] = (1024, 512)  # width, height
    brightness: float = 0.2
    contrast: float = 0.2
    saturation: float = 0.2
    hue: float = 0.05
    enabled: bool = True

    def __post_init__(self):
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise ValueError(f"scale range must satisfy 0 < lo <= hi, got {self.scale_range}")
        if min(self.crop) < 1:
            raise ValueError(f"crop dimensions must be >= 1, got {self.crop}")
        for name in ("brightness", "contrast", "saturation"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} strength must lie in [0, 1]")
        if not 0 <= self.hue <= 0.5:
            raise ValueError("hue strength must lie in [0, 0.5]")


@dataclass(frozen=True)
class SynthConfig:
    n_images: int = 2
    percentile: float = 0.80
    things: frozenset[int] | None = None  # None: take the table's things subset
    samples_per_base: int = 4
    seed: int = 0
    include_base: bool = True
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    def __post_init__(self):
        if self.n_images < 1:
            raise ValueError("n_images must be >= 1")
        if not 0 < self.percentile < 1:
            raise ValueError("percentile must lie in (0, 1)")
        if self.samples_per_base < 1:
            raise ValueError("samples_per_base must be >= 1")

    def things_for(self, table: ClassTable) -> frozenset[int]:
        return frozenset(self.things) if self.things is not None else table.thing_ids


def depth_threshold(depth: DepthMap, q: float = 0.80) -> float:
    """Nearest-rank percentile: the ceil(q * V)-th smallest valid depth."""
    if not 0 < q < 1:
        raise ValueError(f"percentile must lie in (0, 1), got {q}")
    values = depth.values[depth.valid]
    n_valid = values.size
    if n_valid == 0:
        raise NoValidDepthError("depth map has no valid pixels")
    # decimal arithmetic so that e.g. 0.7 * 10 ranks as exactly 7
    rank = int((Decimal(repr(q)) * n_valid).to_integral_value(ROUND_CEILING))
    rank = min(max(rank, 1), n_valid)
    return float(np.partition(values, rank - 1)[rank - 1])


def _label_of(sample: SceneSample) -> np.ndarray:
    if sample.label is None:
        raise ValueError(f"sample {sample.id!r} has no (pseudo-)label map")
    return np.asarray(sample.label)


def candidate_depths(samples: Sequence[SceneSample], thresholds: Sequence[float],
                     things: frozenset[int], p: tuple[int, int],
                     include_base: bool = True) -> set[tuple[int, float]]:
    """Filtered candidates ``(n, depth)`` at pixel ``p = (row, col)``.

    Indices are 0-based; index 0 is the base image.
    """
    check_same_shape([s.depth.values for s in samples] + [_label_of(s) for s in samples])
    r, c = p
    out = set()
    for n, (s, t) in enumerate(zip(samples, thresholds)):
        if n == 0 and not include_base:
            continue
        d = s.depth.values[r, c]
        if s.depth.valid[r, c] and d < t and int(s.label[r, c]) in things:
            out.add((n, float(d)))
    return out


@dataclass(frozen=True)
class CompositeResult:
    image: np.ndarray
    label: np.ndarray
    source: np.ndarray  # index of the sample each pixel was taken from
    thresholds: tuple[float, ...]


def composite(samples: Sequence[SceneSample], things: frozenset[int], percentile: float = 0.80,
              include_base: bool = True, backend: str | None = None) -> CompositeResult:
    if not samples:
        raise ValueError("composite needs at least the base sample")
    labels = [_label_of(s) for s in samples]
    images = [np.asarray(s.image) for s in samples]
    check_same_shape([s.depth.values for s in samples] + labels + images)
    for im in images:
        if im.ndim != 3 or im.shape[2] != 3:
            raise ShapeMismatchError(f"image must be (H, W, 3), got {im.shape}")
    thresholds = tuple(depth_threshold(s.depth, percentile) for s in samples)
    lut = np.zeros(256, dtype=np.uint8)
    lut[sorted(things)] = 1
    image, label, source = kernels.composite(
        np.stack(images), np.stack(labels),
        np.stack([s.depth.values for s in samples]),
        np.stack([s.depth.valid for s in samples]),
        np.asarray(thresholds), lut, include_base, backend=backend,
    )
    return CompositeResult(image, label, source, thresholds)


def select_sources(pool: Sequence[str], base_index: int, n_images: int,
                   rng: np.random.Generator) -> list[str]:
    """Draw ``n_images - 1`` distinct ids from ``pool`` other than the base."""
    if len(pool) < n_images:
        raise PoolTooSmallError(f"pool of {len(pool)} cannot supply {n_images} images")
    if n_images == 1:
        return []
    others = [x for i, x in enumerate(pool) if i != base_index]
    picks = rng.choice(len(others), size=n_images - 1, replace=False)
    return [others[int(i)] for i in picks]


def rescale_and_crop(image: np.ndarray, label: np.ndarray, scale: float,
                     origin: tuple[int, int], crop: tuple[int, int]):
    """Resize by ``scale`` then cut a ``crop = (width, height)`` window at ``origin = (x, y)``."""
    h, w = label.shape
    cw, ch = crop
    nw, nh = max(1, round(w * scale)), max(1, round(h * scale))
    if (nw, nh) != (w, h):
        image = np.asarray(Image.fromarray(image).resize((nw, nh), Image.BILINEAR))
        label = np.asarray(Image.fromarray(label).resize((nw, nh), Image.NEAREST))
    x, y = origin
    if cw > nw or ch > nh or not (0 <= x <= nw - cw and 0 <= y <= nh - ch):
        raise CropError(f"crop {crop} at {origin} does not fit in a {nw}x{nh} image")
    return image[y:y + ch, x:x + cw].copy(), label[y:y + ch, x:x + cw].copy()


def color_jitter(image: np.ndarray, factors: tuple[float, float, float, float]) -> np.ndarray:
    """Brightness, contrast and saturation factors, then a hue shift in turns."""
    b, c, s, hue = factors
    if (b, c, s, hue) == (1.0, 1.0, 1.0, 0.0):
        return image
    im = Image.fromarray(image)
    if b != 1.0:
        im = ImageEnhance.Brightness(im).enhance(b)
    if c != 1.0:
        im = ImageEnhance.Contrast(im).enhance(c)
    if s != 1.0:
        im = ImageEnhance.Color(im).enhance(s)
    shift = int(round(hue * 255))
    if shift:
        h, sat, v = im.convert("HSV").split()
        h = h.point(lambda px: (px + shift) % 256)
        im = Image.merge("HSV", (h, sat, v)).convert("RGB")
    return np.asarray(im)


def augment(image: np.ndarray, label: np.ndarray, cfg: AugmentConfig,
            rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    h, w = label.shape
    cw, ch = cfg.crop
    lo, hi = cfg.scale_range
    scale = float(rng.uniform(lo, hi)) if hi > lo else lo
    # grow the scale so the resized image still covers the crop window
    scale = max(scale, cw / w, ch / h)
    nw, nh = max(1, round(w * scale)), max(1, round(h * scale))
    if cw > nw or ch > nh:
        raise CropError(f"crop {cfg.crop} does not fit in a {nw}x{nh} image")
    origin = (int(rng.integers(0, nw - cw + 1)), int(rng.integers(0, nh - ch + 1)))
    image, label = rescale_and_crop(image, label, scale, origin, cfg.crop)

    def factor(strength):
        return float(rng.uniform(max(0.0, 1 - strength), 1 + strength))

    factors = (factor(cfg.brightness), factor(cfg.contrast), factor(cfg.saturation),
               float(rng.uniform(-cfg.hue, cfg.hue)))
    return color_jitter(image, factors), label


@dataclass(frozen=True)
class SynthOutput:
    id: str
    image: np.ndarray
    label: np.ndarray
    base_id: str
    source_ids: tuple[str, ...]


def output_id(base_id: str, replica: int) -> str:
    return f"{base_id}__{replica:03d}"


def synthesize_one(pool: Sequence[str], base_index: int, replica: int,
                   load: Callable[[str], SceneSample], cfg: SynthConfig,
                   table: ClassTable, backend: str | None = None) -> SynthOutput:
    rng = stream(cfg.seed, base_index, replica)
    base_id = pool[base_index]
    sources = select_sources(pool, base_index, cfg.n_images, rng)
    samples = [load(base_id)] + [load(s) for s in sources]
    res = composite(samples, cfg.things_for(table), cfg.percentile, cfg.include_base,
                    backend=backend)
    image, label = res.image, res.label
    if cfg.augment.enabled:
        image, label = augment(image, label, cfg.augment, rng)
    return SynthOutput(output_id(base_id, replica), image, label, base_id, tuple(sources))


def synthesize_dataset(samples: Sequence[SceneSample], cfg: SynthConfig, table: ClassTable,
                       on_error: Callable[[str, Exception], None] | None = None,
                       backend: str | None = None) -> Iterator[SynthOutput]:
    """Yield ``samples_per_base`` outputs per base sample.

    A failing output is reported through ``on_error`` (default: logged) and
    the run continues with the next one.
    """
    by_id = {s.id: s for s in samples}
    pool = [s.id for s in samples]
    for base_index in range(len(pool)):
        for replica in range(cfg.samples_per_base):
            try:
                yield synthesize_one(pool, base_index, replica, by_id.__getitem__, cfg, table,
                                     backend=backend)
            except Exception as exc:  # noqa: BLE001 - isolate per-output failures
                oid = output_id(pool[base_index], replica)
                if on_error is None:
                    log.warning("synthesis of %s failed: %s", oid, exc)
                else:
                    on_error(oid, exc)
