"""Synthetic driving-like scenes with two complementary prediction branches.

Each scene is a stack of horizontal stuff bands (sky, building, sidewalk,
road) over a ground plane whose depth falls off with the row, plus
rectangular "thing" sprites standing on the ground at sampled depths.

The two branches are one-hot logits derived from the ground truth:

* the depth branch is wrong on a fraction of thing pixels, each swapped
  for another thing class;
* the UDA branch is wrong on a fraction of stuff pixels, each swapped for
  another band class.

With frequency-derived weights the fusion trusts the depth branch on the
frequent band classes and the UDA branch on the rare thing classes, so
each branch is overruled exactly where it is corrupted.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import ClassTable, DepthMap, SceneSample
from ..dbst import mix64
from ..errors import ClassTableError

BAND_CLASSES = ("sky", "building", "sidewalk", "road")

# Per-class mean colours for the rendered image.
_COLOURS = {
    "sky": (70, 130, 180), "building": (70, 70, 70), "sidewalk": (244, 35, 232),
    "road": (128, 64, 128),
}

MAX_GROUND_DEPTH = 200.0
BUILDING_DEPTH = 60.0
_FIXTURE_STREAM = 0xF1C7


@dataclass(frozen=True)
class FixtureSpec:
    width: int = 128
    height: int = 64
    scenes: int = 50
    dep_things_rate: float = 0.5
    uda_stuff_rate: float = 0.5
    max_things: int = 6
    logit_magnitude: float = 6.0

    def __post_init__(self):
        if self.width < 8 or self.height < 8:
            raise ValueError("fixture images must be at least 8x8")
        if self.scenes < 1:
            raise ValueError("need at least one scene")
        for name in ("dep_things_rate", "uda_stuff_rate"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.max_things < 0:
            raise ValueError("max_things must be >= 0")
        if not self.logit_magnitude > 0:
            raise ValueError("logit_magnitude must be positive")


def _class_colour(table: ClassTable, cid: int) -> np.ndarray:
    name = table.names[cid]
    if name in _COLOURS:
        return np.array(_COLOURS[name], dtype=np.float64)
    return np.array([(cid * 67) % 256, (cid * 139 + 60) % 256, (cid * 29 + 120) % 256], float)


def _swap(labels: np.ndarray, mask: np.ndarray, choices: np.ndarray,
          rng: np.random.Generator) -> np.ndarray:
    """Replace labels under ``mask`` with a different class drawn from ``choices``."""
    out = labels.copy()
    idx = np.flatnonzero(mask)
    if idx.size == 0 or choices.size < 2:
        return out
    current = labels.ravel()[idx]
    # draw among the other len(choices) - 1 classes
    pos = np.searchsorted(choices, current)
    offset = rng.integers(1, choices.size, size=idx.size)
    out.ravel()[idx] = choices[(pos + offset) % choices.size]
    return out


def one_hot_logits(labels: np.ndarray, num_classes: int, magnitude: float) -> np.ndarray:
    z = np.zeros(labels.shape + (num_classes,), dtype=np.float32)
    np.put_along_axis(z, labels[..., None].astype(np.intp), np.float32(magnitude), axis=-1)
    return z


def make_scene(index: int, spec: FixtureSpec, table: ClassTable, seed: int) -> SceneSample:
    try:
        band_ids = np.array(sorted(table.id_of(n) for n in BAND_CLASSES))
    except KeyError as exc:
        raise ClassTableError(f"fixture class table lacks band class {exc}") from None
    thing_ids = np.array(sorted(table.thing_ids))
    if thing_ids.size == 0 and spec.max_things > 0:
        raise ClassTableError("fixture class table has no things classes")
    rng = np.random.default_rng(mix64(seed, _FIXTURE_STREAM, index))
    h, w = spec.height, spec.width
    rows = np.arange(h)[:, None]

    sky_end = int(round(h * rng.uniform(0.15, 0.25)))
    horizon = int(round(h * rng.uniform(0.40, 0.50)))
    walk_end = horizon + int(round(h * rng.uniform(0.12, 0.20)))

    label = np.empty((h, w), dtype=np.uint8)
    label[:] = table.id_of("road")
    label[:walk_end] = table.id_of("sidewalk")
    label[:horizon] = table.id_of("building")
    label[:sky_end] = table.id_of("sky")

    v = (rows - horizon + 0.5) / h
    with np.errstate(divide="ignore"):
        ground = np.where(v > 0, 1.0 / np.where(v > 0, v, 1.0), np.inf)
    depth = np.broadcast_to(ground, (h, w)).copy()
    depth[:horizon] = BUILDING_DEPTH + 10.0 * np.arange(w)[None, :] / w
    valid = np.ones((h, w), dtype=bool)
    valid[:sky_end] = False
    valid &= depth <= MAX_GROUND_DEPTH

    n_things = int(rng.integers(0, spec.max_things + 1)) if spec.max_things else 0
    sprites = []
    for _ in range(n_things):
        cls = int(rng.choice(thing_ids))
        d = float(rng.uniform(3.0, 20.0))
        sh = max(2, int(round(h * rng.uniform(0.4, 1.0) / d)))
        sw = max(2, int(round(sh * rng.uniform(0.4, 1.2))))
        bottom = min(h - 1, horizon + int(round(h / d)))
        x0 = int(rng.integers(0, max(1, w - sw + 1)))
        sprites.append((d, cls, max(0, bottom - sh + 1), bottom + 1, x0, min(w, x0 + sw)))
    for d, cls, y0, y1, x0, x1 in sorted(sprites, reverse=True):  # far to near
        label[y0:y1, x0:x1] = cls
        depth[y0:y1, x0:x1] = d
        valid[y0:y1, x0:x1] = True

    depth = np.where(valid, np.round(depth * 256.0) / 256.0, 0.0)

    palette = np.stack([_class_colour(table, c) for c in range(table.num_classes)])
    image = palette[label] + rng.normal(0.0, 8.0, size=(h, w, 3))
    image = np.clip(np.rint(image), 0, 255).astype(np.uint8)

    is_thing = table.lut().astype(bool)[label]
    is_band = np.isin(label, band_ids)
    dep_label = _swap(label, is_thing & (rng.random((h, w)) < spec.dep_things_rate), thing_ids, rng)
    uda_label = _swap(label, is_band & (rng.random((h, w)) < spec.uda_stuff_rate), band_ids, rng)

    return SceneSample(
        id=f"scene_{index:04d}",
        image=image,
        depth=DepthMap(depth, valid),
        label=label,
        logits_dep=one_hot_logits(dep_label, table.num_classes, spec.logit_magnitude),
        logits_uda=one_hot_logits(uda_label, table.num_classes, spec.logit_magnitude),
    )
