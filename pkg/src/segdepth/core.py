"""Domain types shared across the package.

Rasters are plain numpy arrays:

* image  -- ``(H, W, 3)`` uint8
* label  -- ``(H, W)`` uint8, class ids or the ignore id
* logits -- ``(H, W, C)`` float32 or float64

Depth carries a validity mask and gets its own small container.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ClassTableError, ShapeMismatchError, UnknownPresetError

IGNORE_ID = 255

CITYSCAPES19 = (
    "road", "sidewalk", "building", "wall", "fence", "pole",
    "traffic light", "traffic sign", "vegetation", "terrain", "sky",
    "person", "rider", "car", "truck", "bus", "train", "motorcycle", "bicycle",
)
SYNSEQ12 = (
    "sky", "building", "road", "sidewalk", "fence", "vegetation", "pole",
    "car", "traffic sign", "person", "bicycle", "traffic light",
)
# Cityscapes instance classes plus the two traffic classes.
DEFAULT_THINGS = frozenset({
    "traffic light", "traffic sign", "person", "rider", "car", "truck",
    "bus", "train", "motorcycle", "bicycle",
})

PRESETS = {"cityscapes19": CITYSCAPES19, "synseq12": SYNSEQ12}

# Cityscapes palette by class name, used for --colorize output.
PALETTE = {
    "road": (128, 64, 128), "sidewalk": (244, 35, 232), "building": (70, 70, 70),
    "wall": (102, 102, 156), "fence": (190, 153, 153), "pole": (153, 153, 153),
    "traffic light": (250, 170, 30), "traffic sign": (220, 220, 0),
    "vegetation": (107, 142, 35), "terrain": (152, 251, 152), "sky": (70, 130, 180),
    "person": (220, 20, 60), "rider": (255, 0, 0), "car": (0, 0, 142),
    "truck": (0, 0, 70), "bus": (0, 60, 100), "train": (0, 80, 100),
    "motorcycle": (0, 0, 230), "bicycle": (119, 11, 32),
}


@dataclass(frozen=True)
class ClassEntry:
    id: int
    name: str
    is_thing: bool = False


@dataclass(frozen=True)
class ClassTable:
    classes: tuple[ClassEntry, ...]
    ignore_id: int = IGNORE_ID

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        ids = [c.id for c in self.classes]
        if sorted(ids) != list(range(len(ids))):
            raise ClassTableError(f"class ids must be exactly 0..{len(ids) - 1}, got {ids}")
        if self.ignore_id in ids:
            raise ClassTableError(f"ignore id {self.ignore_id} collides with a class id")
        if not 0 <= self.ignore_id <= 255 or len(ids) > 255:
            raise ClassTableError("label maps are 8-bit; ids and ignore id must fit in 0..255")
        names = [c.name for c in self.classes]
        if len(set(names)) != len(names):
            raise ClassTableError("class names must be unique")

    def __len__(self):
        return len(self.classes)

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    @property
    def names(self) -> list[str]:
        return [c.name for c in sorted(self.classes, key=lambda c: c.id)]

    @property
    def thing_ids(self) -> frozenset[int]:
        return frozenset(c.id for c in self.classes if c.is_thing)

    def id_of(self, name: str) -> int:
        for c in self.classes:
            if c.name == name:
                return c.id
        raise KeyError(name)

    def is_thing(self, key) -> bool:
        cid = self.id_of(key) if isinstance(key, str) else key
        return cid in self.thing_ids

    def with_things(self, things: Iterable[str | int]) -> "ClassTable":
        """Return a copy whose things subset is exactly ``things`` (names or ids)."""
        wanted = {self.id_of(t) if isinstance(t, str) else int(t) for t in things}
        unknown = wanted - set(range(self.num_classes))
        if unknown:
            raise ClassTableError(f"unknown class ids in things set: {sorted(unknown)}")
        return ClassTable(
            tuple(ClassEntry(c.id, c.name, c.id in wanted) for c in self.classes),
            self.ignore_id,
        )

    def lut(self, ids: Iterable[int] | None = None) -> np.ndarray:
        """256-entry uint8 lookup table, 1 where the label value is in ``ids``.

        Defaults to the things subset.
        """
        out = np.zeros(256, dtype=np.uint8)
        out[sorted(self.thing_ids if ids is None else ids)] = 1
        return out

    def valid_values_lut(self) -> np.ndarray:
        out = np.zeros(256, dtype=bool)
        out[: self.num_classes] = True
        out[self.ignore_id] = True
        return out

    def to_dict(self) -> dict:
        return {
            "ignore_id": self.ignore_id,
            "classes": [
                {"id": c.id, "name": c.name, "is_thing": c.is_thing}
                for c in sorted(self.classes, key=lambda c: c.id)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ClassTable":
        entries = tuple(
            ClassEntry(int(c["id"]), str(c["name"]), bool(c.get("is_thing", False)))
            for c in data["classes"]
        )
        return cls(entries, int(data.get("ignore_id", IGNORE_ID)))


def default_class_table(preset: str) -> ClassTable:
    try:
        names = PRESETS[preset]
    except KeyError:
        raise UnknownPresetError(
            f"unknown class table preset {preset!r}; choose from {sorted(PRESETS)}"
        ) from None
    return ClassTable(
        tuple(ClassEntry(i, n, n in DEFAULT_THINGS) for i, n in enumerate(names)),
        IGNORE_ID,
    )


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel depth (larger is farther) and a validity mask.

    Only the order of depth values matters to the algorithms here, so the
    unit is whatever the producer used.
    """

    values: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"depth must be 2-D, got shape {values.shape}")
        if self.valid is None:
            valid = np.isfinite(values) & (values > 0)
        else:
            valid = np.asarray(self.valid, dtype=bool)
            if valid.shape != values.shape:
                raise ValueError("depth mask shape differs from depth values")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def map_values(self, fn) -> "DepthMap":
        """Apply ``fn`` to valid values, keeping the mask."""
        out = self.values.copy()
        out[self.valid] = fn(self.values[self.valid])
        return DepthMap(out, self.valid.copy())


@dataclass(frozen=True)
class SceneSample:
    id: str
    image: np.ndarray
    depth: DepthMap
    label: np.ndarray | None = None
    logits_dep: np.ndarray | None = None
    logits_uda: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape


def _first_pixel(mask: np.ndarray) -> tuple[int, int]:
    r, c = np.argwhere(mask)[0]
    return int(r), int(c)


def validate_sample(sample: SceneSample, table: ClassTable) -> list[str]:
    """Return a list of human-readable violations; empty means well formed."""
    problems: list[str] = []
    h, w = sample.depth.shape

    img = np.asarray(sample.image)
    if img.ndim != 3 or img.shape[2] != 3:
        problems.append(f"image: expected (H, W, 3), got shape {img.shape}")
    else:
        if img.shape[:2] != (h, w):
            problems.append(f"image: size {img.shape[:2]} differs from depth size {(h, w)}")
        if img.dtype != np.uint8:
            bad = ~np.isfinite(img) | (img < 0) | (img > 255) if img.dtype.kind == "f" else (img < 0) | (img > 255)
            if bad.any():
                problems.append(f"image: channel value out of [0, 255] at pixel {_first_pixel(bad.any(axis=2))}")

    d = sample.depth
    bad = d.valid & ~(np.isfinite(d.values) & (d.values > 0))
    if bad.any():
        r, c = _first_pixel(bad)
        problems.append(
            f"depth: valid pixel {(r, c)} has non-finite or non-positive value {d.values[r, c]!r}"
        )

    if sample.label is not None:
        lab = np.asarray(sample.label)
        if lab.shape != (h, w):
            problems.append(f"label: shape {lab.shape} differs from depth size {(h, w)}")
        else:
            allowed = set(range(table.num_classes)) | {table.ignore_id}
            bad = ~np.isin(lab, list(allowed))
            if bad.any():
                r, c = _first_pixel(bad)
                problems.append(
                    f"label: pixel {(r, c)} has value {int(lab[r, c])} outside the class table "
                    f"({int(bad.sum())} offending pixels)"
                )

    for name in ("logits_dep", "logits_uda"):
        z = getattr(sample, name)
        if z is None:
            continue
        z = np.asarray(z)
        if z.ndim != 3:
            problems.append(f"{name}: expected (H, W, C), got shape {z.shape}")
            continue
        if z.shape[:2] != (h, w):
            problems.append(f"{name}: size {z.shape[:2]} differs from depth size {(h, w)}")
        if z.shape[2] != table.num_classes:
            problems.append(
                f"{name}: {z.shape[2]} channels but the class table has {table.num_classes} classes"
            )
        bad = ~np.isfinite(z)
        if bad.any():
            problems.append(f"{name}: non-finite score at pixel {_first_pixel(bad.any(axis=2))}")
    return problems


def check_same_shape(arrays: Sequence[np.ndarray], what: str = "rasters") -> tuple[int, int]:
    shapes = {tuple(np.shape(a)[:2]) for a in arrays}
    if len(shapes) != 1:
        raise ShapeMismatchError(f"{what} differ in size: {sorted(shapes)}")
    return shapes.pop()
