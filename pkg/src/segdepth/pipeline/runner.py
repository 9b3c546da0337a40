"""Batch commands over a manifest, run on a process pool.

Every command follows the same pattern: records are sorted by id, each
unit of work runs in isolation and returns either its result or a
failure message, and the main process merges results in a fixed order.
Workers only see immutable configuration, and all randomness comes from
per-output streams, so the output tree does not depend on the worker
count.

Besides its outputs each command writes ``stamp.json`` (configuration,
seed, digests of every input file and the list of failures). When any
record fails a ``FAILED`` file lists them and the command returns a
nonzero status.
"""
from __future__ import annotations

import json
import logging
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache, partial
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .. import dbst, fusion, metrics
from ..classweights import class_weights, count_labels, FrequencyStats
from ..core import ClassTable, SceneSample
from ..errors import EmptyStatisticsError, SegDepthError, ShapeMismatchError
from . import io
from .fixtures import FixtureSpec, make_scene
from .manifest import ManifestRecord, read_manifest, write_manifest

log = logging.getLogger(__name__)

STAMP = "stamp.json"
FAILED = "FAILED"


@dataclass
class RunReport:
    command: str
    outputs: int = 0
    failures: list[tuple[str, str]] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures

    @property
    def exit_code(self) -> int:
        return 0 if self.ok else 1


@dataclass(frozen=True)
class TaskResult:
    key: str
    value: Any = None
    digests: tuple[tuple[str, str], ...] = ()
    error: str | None = None


def run_tasks(fn: Callable[[Any], TaskResult], tasks: Sequence[Any], workers: int = 1) -> list[TaskResult]:
    """Apply ``fn`` to each task, returning results in task order."""
    if workers < 1:
        raise ValueError("worker count must be >= 1")
    if workers == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (workers * 4))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))


def _guard(key: str, body: Callable[[], TaskResult]) -> TaskResult:
    try:
        return body()
    except Exception as exc:  # noqa: BLE001 - one record must not sink the batch
        log.debug("record %s failed\n%s", key, traceback.format_exc())
        return TaskResult(key, error=f"{type(exc).__name__}: {exc}")


def _rel(path: Path, root: Path) -> str:
    try:
        return path.resolve().relative_to(root.resolve()).as_posix()
    except ValueError:
        return path.as_posix()


def _read(path: Path, digests: list, root: Path) -> bytes:
    data = path.read_bytes()
    digests.append((_rel(path, root), io.sha256_bytes(data)))
    return data


def write_stamp(out: Path, report: RunReport, config: dict, seed: int | None,
                inputs: dict[str, str], extra: dict | None = None) -> None:
    doc = {
        "command": report.command,
        "config": config,
        "seed": seed,
        "inputs": dict(sorted(inputs.items())),
        "outputs": report.outputs,
        "failures": [{"id": k, "error": e} for k, e in sorted(report.failures)],
    }
    if extra:
        doc.update(extra)
    io.atomic_write_bytes(out / STAMP, (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode())
    marker = out / FAILED
    if report.failures:
        lines = [f"{k}\t{e}" for k, e in sorted(report.failures)]
        io.atomic_write_bytes(marker, ("\n".join(lines) + "\n").encode())
    elif marker.exists():
        marker.unlink()


def _collect(results: Sequence[TaskResult], report: RunReport) -> dict[str, str]:
    digests: dict[str, str] = {}
    for r in results:
        digests.update(r.digests)
        if r.error is not None:
            report.failures.append((r.key, r.error))
    return digests


# -- weights ----------------------------------------------------------------

def _count_task(rec: ManifestRecord, table: ClassTable, root: Path) -> TaskResult:
    def body():
        dig = []
        label = io.decode_label_png(_read(rec.path("label"), dig, root), table)
        return TaskResult(rec.id, count_labels(label, table), tuple(dig))
    return _guard(rec.id, body)


def cmd_weights(manifest, table: ClassTable, out, delta: float = 1.02, normalize: bool = True,
                workers: int = 1) -> RunReport:
    manifest = Path(manifest)
    out = Path(out)
    records = read_manifest(manifest, require=("label",))
    root = manifest.parent
    results = run_tasks(partial(_count_task, table=table, root=root), records, workers)
    report = RunReport("weights")
    inputs = _collect(results, report)
    counts = np.zeros(table.num_classes, dtype=np.int64)
    for r in results:
        if r.error is None:
            counts += r.value
    config = {"classes": table.to_dict(), "delta": delta, "normalized": normalize}
    if counts.sum() == 0:
        report.failures.append(("*", "EmptyStatisticsError: no labelled pixels in the manifest"))
    else:
        stats = FrequencyStats(counts, int(counts.sum()))
        weights = class_weights(stats, delta, normalize)
        io.write_weights(out / "weights.json", weights, table, stats)
        report.outputs = 1
    inputs[_rel(manifest, root)] = io.sha256_file(manifest)
    write_stamp(out, report, config, None, inputs)
    return report


# -- fuse -------------------------------------------------------------------

@dataclass(frozen=True)
class FuseJob:
    table: ClassTable
    cfg: fusion.FusionConfig
    out: Path
    root: Path
    save_scores: bool = False
    colorize: bool = False


def _fuse_task(rec: ManifestRecord, job: FuseJob) -> TaskResult:
    def body():
        dig = []
        dep = io.decode_logits(_read(rec.path("logits_dep"), dig, job.root))
        uda = io.decode_logits(_read(rec.path("logits_uda"), dig, job.root))
        if job.save_scores:
            scores = fusion.fuse(dep, uda, job.cfg)
            labels = fusion.decide_labels(scores)
            io.write_logits(job.out / "scores" / f"{rec.id}.lgt", scores)
        else:
            labels = fusion.fuse_labels(dep, uda, job.cfg)
        io.write_label_png(job.out / "labels" / f"{rec.id}.png", labels)
        if job.colorize:
            io.write_image_png(job.out / "color" / f"{rec.id}.png", io.colorize(labels, job.table))
        return TaskResult(rec.id, None, tuple(dig))
    return _guard(rec.id, body)


def cmd_fuse(manifest, table: ClassTable, weights_path, out, temperature: float = 6.0,
             workers: int = 1, save_scores: bool = False, colorize: bool = False) -> RunReport:
    manifest = Path(manifest)
    out = Path(out)
    records = read_manifest(manifest, require=("logits_dep", "logits_uda"))
    weights = io.read_weights(weights_path, table)
    job = FuseJob(table, fusion.FusionConfig(weights, temperature), out, manifest.parent,
                  save_scores, colorize)
    results = run_tasks(partial(_fuse_task, job=job), records, workers)
    report = RunReport("fuse")
    inputs = _collect(results, report)
    inputs[_rel(manifest, manifest.parent)] = io.sha256_file(manifest)
    inputs["weights:" + Path(weights_path).name] = io.sha256_file(weights_path)
    report.outputs = len(records) - len(report.failures)
    config = {"classes": table.to_dict(), "temperature": temperature,
              "save_scores": save_scores, "colorize": colorize}
    write_stamp(out, report, config, None, inputs)
    return report


# -- synth ------------------------------------------------------------------

@dataclass(frozen=True)
class SynthJob:
    table: ClassTable
    cfg: dbst.SynthConfig
    records: tuple[ManifestRecord, ...]
    out: Path
    root: Path
    pseudo_dir: Path | None = None
    depth_scale: float = io.DEPTH_SCALE
    colorize: bool = False


@lru_cache(maxsize=16)
def _load_scene(rec: ManifestRecord, root: Path, pseudo_dir: Path | None,
                depth_scale: float, table: ClassTable) -> tuple[SceneSample, tuple]:
    dig = []
    label_path = pseudo_dir / f"{rec.id}.png" if pseudo_dir is not None else rec.path("label")
    sample = SceneSample(
        rec.id,
        image=io.decode_image_png(_read(rec.path("image"), dig, root)),
        depth=io.decode_depth_png(_read(rec.path("depth"), dig, root), depth_scale),
        label=io.decode_label_png(_read(label_path, dig, root), table),
    )
    return sample, tuple(dig)


def _synth_task(task: tuple[int, int], job: SynthJob) -> TaskResult:
    base_index, replica = task
    by_id = {r.id: r for r in job.records}
    pool = [r.id for r in job.records]
    oid = dbst.output_id(pool[base_index], replica)

    def body():
        dig = []

        def load(rid):
            sample, d = _load_scene(by_id[rid], job.root, job.pseudo_dir, job.depth_scale, job.table)
            dig.extend(d)
            return sample

        res = dbst.synthesize_one(pool, base_index, replica, load, job.cfg, job.table)
        io.write_image_png(job.out / "images" / f"{res.id}.png", res.image)
        io.write_label_png(job.out / "labels" / f"{res.id}.png", res.label)
        if job.colorize:
            io.write_image_png(job.out / "color" / f"{res.id}.png", io.colorize(res.label, job.table))
        return TaskResult(res.id, [res.base_id, *res.source_ids], tuple(dig))
    return _guard(oid, body)


def _synth_config_doc(cfg: dbst.SynthConfig, table: ClassTable) -> dict:
    doc = asdict(cfg)
    doc["things"] = sorted(cfg.things_for(table))
    doc["augment"]["scale_range"] = list(cfg.augment.scale_range)
    doc["augment"]["crop"] = list(cfg.augment.crop)
    return doc


def cmd_synth(manifest, table: ClassTable, cfg: dbst.SynthConfig, out, workers: int = 1,
              pseudo_dir=None, depth_scale: float = io.DEPTH_SCALE,
              colorize: bool = False) -> RunReport:
    manifest = Path(manifest)
    out = Path(out)
    require = ("image", "depth") if pseudo_dir is not None else ("image", "depth", "label")
    records = tuple(read_manifest(manifest, require=require))
    if pseudo_dir is not None:
        pseudo_dir = Path(pseudo_dir)
        missing = [r.id for r in records if not (pseudo_dir / f"{r.id}.png").is_file()]
        if missing:
            raise SegDepthError(f"pseudo-label directory lacks {len(missing)} records, e.g. {missing[:3]}")
    if len(records) < cfg.n_images:
        raise SegDepthError(f"manifest has {len(records)} records but n_images is {cfg.n_images}")
    job = SynthJob(table, cfg, records, out, manifest.parent, pseudo_dir, depth_scale, colorize)
    tasks = [(b, m) for b in range(len(records)) for m in range(cfg.samples_per_base)]
    results = run_tasks(partial(_synth_task, job=job), tasks, workers)
    report = RunReport("synth")
    inputs = _collect(results, report)
    inputs[_rel(manifest, manifest.parent)] = io.sha256_file(manifest)
    report.outputs = len(tasks) - len(report.failures)
    provenance = {r.key: r.value for r in results if r.error is None}
    config = _synth_config_doc(cfg, table)
    config["classes"] = table.to_dict()
    config["depth_scale"] = depth_scale
    config["pseudo_labels"] = "manifest" if pseudo_dir is None else "directory"
    write_stamp(out, report, config, cfg.seed, inputs, {"provenance": dict(sorted(provenance.items()))})
    return report


# -- eval -------------------------------------------------------------------

@dataclass(frozen=True)
class EvalJob:
    table: ClassTable
    root: Path
    pred_dir: Path | None = None
    branch: str | None = None


def _eval_task(rec: ManifestRecord, job: EvalJob) -> TaskResult:
    def body():
        dig = []
        gt = io.decode_label_png(_read(rec.path("label"), dig, job.root), job.table)
        if job.pred_dir is not None:
            pred = io.decode_label_png(_read(job.pred_dir / f"{rec.id}.png", dig, job.root), job.table)
        else:
            z = io.decode_logits(_read(rec.path(f"logits_{job.branch}"), dig, job.root))
            if z.shape[2] != job.table.num_classes:
                raise ShapeMismatchError(
                    f"logits have {z.shape[2]} channels, class table has {job.table.num_classes}")
            pred = fusion.decide_labels(z)
        return TaskResult(rec.id, metrics.confusion(gt, pred, job.table), tuple(dig))
    return _guard(rec.id, body)


def format_eval_table(table: ClassTable, iou: np.ndarray, miou: float, acc: float) -> str:
    width = max(len(n) for n in table.names)
    lines = [f"{'class':<{width}}  IoU"]
    for name, v in zip(table.names, iou):
        lines.append(f"{name:<{width}}  {'n/a' if np.isnan(v) else f'{100 * v:5.1f}'}")
    lines.append(f"{'mIoU':<{width}}  {100 * miou:5.1f}")
    lines.append(f"{'Acc':<{width}}  {100 * acc:5.1f}")
    return "\n".join(lines) + "\n"


def cmd_eval(manifest, table: ClassTable, out, pred_dir=None, branch: str | None = None,
             workers: int = 1) -> RunReport:
    if (pred_dir is None) == (branch is None):
        raise ValueError("give exactly one of pred_dir or branch")
    if branch is not None and branch not in ("dep", "uda"):
        raise ValueError("branch must be 'dep' or 'uda'")
    manifest = Path(manifest)
    out = Path(out)
    require = ("label",) if branch is None else ("label", f"logits_{branch}")
    records = read_manifest(manifest, require=require)
    pred_dir = Path(pred_dir) if pred_dir is not None else None
    job = EvalJob(table, manifest.parent, pred_dir, branch)
    results = run_tasks(partial(_eval_task, job=job), records, workers)
    report = RunReport("eval")
    inputs = _collect(results, report)
    inputs[_rel(manifest, manifest.parent)] = io.sha256_file(manifest)
    cm = metrics.ConfusionMatrix.zeros(table.num_classes)
    for r in results:
        if r.error is None:
            cm = cm + r.value
    config = {"classes": table.to_dict(), "prediction": "directory" if branch is None else f"branch:{branch}"}
    try:
        miou, acc = metrics.miou_and_acc(cm)
    except EmptyStatisticsError as exc:
        report.failures.append(("*", f"EmptyStatisticsError: {exc}"))
    else:
        iou = metrics.iou_per_class(cm)
        report.summary = {
            "miou": miou, "acc": acc,
            "iou": {n: (None if np.isnan(v) else float(v)) for n, v in zip(table.names, iou)},
            "confusion": cm.counts.tolist(),
        }
        io.atomic_write_bytes(out / "eval.json",
                              (json.dumps(report.summary, indent=2) + "\n").encode())
        io.atomic_write_bytes(out / "eval.txt", format_eval_table(table, iou, miou, acc).encode())
        report.outputs = 1
    write_stamp(out, report, config, None, inputs)
    return report


# -- fixtures ---------------------------------------------------------------

def _fixture_task(index: int, spec: FixtureSpec, table: ClassTable, seed: int, out: Path) -> TaskResult:
    def body():
        s = make_scene(index, spec, table, seed)
        paths = {
            "image": out / "images" / f"{s.id}.png",
            "depth": out / "depth" / f"{s.id}.png",
            "label": out / "labels" / f"{s.id}.png",
            "logits_dep": out / "logits_dep" / f"{s.id}.lgt",
            "logits_uda": out / "logits_uda" / f"{s.id}.lgt",
        }
        io.write_image_png(paths["image"], s.image)
        io.write_depth_png(paths["depth"], s.depth)
        io.write_label_png(paths["label"], s.label)
        io.write_logits(paths["logits_dep"], s.logits_dep)
        io.write_logits(paths["logits_uda"], s.logits_uda)
        return TaskResult(s.id, ManifestRecord(s.id, **paths))
    return _guard(f"scene_{index:04d}", body)


def cmd_fixtures(spec: FixtureSpec, table: ClassTable, out, seed: int = 0, workers: int = 1) -> RunReport:
    out = Path(out)
    results = run_tasks(partial(_fixture_task, spec=spec, table=table, seed=seed, out=out),
                        list(range(spec.scenes)), workers)
    report = RunReport("fixtures")
    _collect(results, report)
    write_manifest(out / "manifest.jsonl", [r.value for r in results if r.error is None])
    report.outputs = spec.scenes - len(report.failures)
    config = {"classes": table.to_dict(), **asdict(spec)}
    write_stamp(out, report, config, seed, {})
    return report
