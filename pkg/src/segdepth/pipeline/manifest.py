"""Line-delimited JSON dataset manifests.

Each line holds one record::

    {"id": "aachen_000000", "image": "images/aachen_000000.png",
     "depth": "depth/aachen_000000.png", "label": "labels/aachen_000000.png",
     "logits_dep": "logits_dep/aachen_000000.lgt",
     "logits_uda": "logits_uda/aachen_000000.lgt"}

Relative paths resolve against the manifest's directory.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from ..errors import ManifestError

PATH_FIELDS = ("image", "depth", "label", "logits_dep", "logits_uda")
_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


@dataclass(frozen=True)
class ManifestRecord:
    id: str
    image: Path | None = None
    depth: Path | None = None
    label: Path | None = None
    logits_dep: Path | None = None
    logits_uda: Path | None = None

    def path(self, name: str) -> Path:
        p = getattr(self, name)
        if p is None:
            raise ManifestError(f"record {self.id!r} has no {name} path")
        return p


def parse_record(obj: dict, root: Path) -> ManifestRecord:
    if not isinstance(obj, dict) or "id" not in obj:
        raise ManifestError("every manifest record needs an id")
    rid = str(obj["id"])
    if not _ID_RE.match(rid):
        raise ManifestError(f"record id {rid!r} must match {_ID_RE.pattern}")
    unknown = set(obj) - {"id", *PATH_FIELDS}
    if unknown:
        raise ManifestError(f"record {rid!r} has unknown fields {sorted(unknown)}")
    paths = {}
    for name in PATH_FIELDS:
        if obj.get(name) is not None:
            p = Path(obj[name])
            paths[name] = p if p.is_absolute() else root / p
    return ManifestRecord(rid, **paths)


def read_manifest(path, require: Sequence[str] = ()) -> list[ManifestRecord]:
    """Parse a manifest and check every referenced file up front.

    ``require`` lists path fields every record must carry. Records come
    back sorted by id so downstream work does not depend on line order.
    """
    path = Path(path)
    root = path.parent
    records = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}:{lineno}: {exc}") from None
        records.append(parse_record(obj, root))
    if not records:
        raise ManifestError(f"{path}: manifest is empty")
    seen = set()
    problems = []
    for rec in records:
        if rec.id in seen:
            problems.append(f"duplicate id {rec.id!r}")
        seen.add(rec.id)
        for name in require:
            if getattr(rec, name) is None:
                problems.append(f"record {rec.id!r} lacks required field {name!r}")
        for name in PATH_FIELDS:
            p = getattr(rec, name)
            if p is not None and not p.is_file():
                problems.append(f"record {rec.id!r}: {name} file {p} does not exist")
    if problems:
        raise ManifestError("; ".join(problems))
    return sorted(records, key=lambda r: r.id)


def record_to_json(rec: ManifestRecord, root: Path) -> str:
    obj = {"id": rec.id}
    for name in PATH_FIELDS:
        p = getattr(rec, name)
        if p is not None:
            try:
                p = p.relative_to(root)
            except ValueError:
                pass
            obj[name] = p.as_posix()
    return json.dumps(obj)


def write_manifest(path, records: Iterable[ManifestRecord]) -> None:
    path = Path(path)
    root = path.parent
    lines = [record_to_json(r, root) for r in records]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
