"""Acceptance criteria, each checked at its stated tolerance.

A one-line verdict per criterion is printed in the terminal summary.
"""
import hashlib
import os
import time
from pathlib import Path

import mpmath
import numpy as np
import pytest

from segdepth import (ConfusionMatrix, DepthMap, FusionConfig, SceneSample, SynthConfig,
                      AugmentConfig, composite, default_class_table, finalize_weights, fuse,
                      iou_per_class, miou_and_acc, softmax_t, uda_weights_raw)
from segdepth.classweights import ClassWeights
from segdepth.pipeline import io, runner
from segdepth.pipeline.fixtures import FixtureSpec

from oracles import composite_oracle, metrics_oracle

TABLE = default_class_table("cityscapes19")


def tree_digest(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


# 1 ---------------------------------------------------------------------------

def test_1_weight_formula(acceptance):
    t0 = time.perf_counter()
    mpmath.mp.dps = 50
    got = uda_weights_raw(np.array([0.0, 1.0]), 1.02)
    want = [float(1 / mpmath.log(mpmath.mpf("1.02") + f)) for f in (0, 1)]
    err = max(abs(got[0] - want[0]), abs(got[1] - want[1]))

    rng = np.random.default_rng(1)
    freqs = rng.dirichlet(np.full(19, 0.3), size=10_000)
    freqs[::7, rng.integers(19)] = 0.0  # absent classes occur in real label sets
    raw = uda_weights_raw(freqs.ravel(), 1.02).reshape(freqs.shape)
    order = np.argsort(freqs, axis=1, kind="stable")
    f_sorted = np.take_along_axis(freqs, order, axis=1)
    w_sorted = np.take_along_axis(raw, order, axis=1)
    dw, df = np.diff(w_sorted, axis=1), np.diff(f_sorted, axis=1)
    monotone = bool(np.all(dw <= 0) and np.all(dw[df > 1e-12] < 0))
    elapsed = time.perf_counter() - t0

    ok = err < 1e-9 and monotone and elapsed < 1.0
    acceptance("1", ok, f"w(0)={got[0]:.10f} w(1)={got[1]:.10f} max err {err:.2e} (<1e-9), "
                        f"monotone over 10^4 vectors={monotone}, {elapsed:.2f}s (<1s)")
    assert ok


# 2 ---------------------------------------------------------------------------

def test_2_fusion_invariants(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = {"shift": 0.0, "fixed point": 0.0, "degenerate": 0.0, "T-rescale": 0.0}
    for _ in range(1000):
        h, w, c = rng.integers(1, 33), rng.integers(1, 33), rng.integers(2, 20)
        dep = rng.normal(0, rng.uniform(0.1, 10), (h, w, c))
        uda = rng.normal(0, rng.uniform(0.1, 10), (h, w, c))
        t = float(rng.uniform(0.5, 10))
        cfg = FusionConfig(finalize_weights(rng.uniform(1.4, 50.5, c)), temperature=t)
        base = fuse(dep, uda, cfg)

        shift = rng.normal(0, 50, (h, w, 1))
        worst["shift"] = max(worst["shift"], np.abs(fuse(dep + shift, uda, cfg) - base).max(),
                             np.abs(fuse(dep, uda - shift, cfg) - base).max())
        worst["fixed point"] = max(worst["fixed point"],
                                   np.abs(fuse(uda, uda, cfg) - softmax_t(uda, t)).max())
        zero_dep = FusionConfig(ClassWeights(1.02, np.ones(c), np.ones(c), np.zeros(c)), t)
        worst["degenerate"] = max(worst["degenerate"],
                                  np.abs(fuse(dep, uda, zero_dep) - softmax_t(uda, t)).max())
        unit = FusionConfig(cfg.weights, 1.0)
        worst["T-rescale"] = max(worst["T-rescale"],
                                 np.abs(fuse(dep * t, uda * t, cfg) - fuse(dep, uda, unit)).max())
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-6 and elapsed < 10
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    acceptance("2", ok, f"1000 random pairs: {detail} (<=1e-6), {elapsed:.1f}s (<10s)")
    assert ok


# 3 and 4 -------------------------------------------------------------------------

def random_instance(rng):
    n = int(rng.integers(1, 6))
    h, w = int(rng.integers(1, 17)), int(rng.integers(1, 17))
    samples = []
    for i in range(n):
        valid = rng.random((h, w)) < rng.uniform(0.2, 1.0)
        valid.flat[rng.integers(h * w)] = True
        depth = np.where(valid, rng.integers(1, 40, (h, w)).astype(float), 0.0)
        samples.append(SceneSample(f"s{i}", rng.integers(0, 256, (h, w, 3), dtype=np.uint8),
                                   DepthMap(depth, valid),
                                   rng.integers(0, 19, (h, w)).astype(np.uint8)))
    things = frozenset(int(x) for x in np.flatnonzero(rng.random(19) < rng.uniform(0.05, 1)))
    return samples, things


def test_3_dbst_oracle_equivalence(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    mismatches = 0
    for i in range(1000):
        samples, things = random_instance(rng)
        include_base = bool(i % 4)
        res = composite(samples, things, include_base=include_base)
        img, lab, src = composite_oracle([s.image for s in samples], [s.label for s in samples],
                                         [s.depth.values for s in samples],
                                         [s.depth.valid for s in samples], things, 0.8,
                                         include_base)
        image = [[tuple(p) for p in row] for row in res.image.tolist()]
        if res.label.tolist() != lab or res.source.tolist() != src or image != img:
            mismatches += 1
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 30
    acceptance("3", ok, f"1000 random instances, {mismatches} mismatches vs brute force, "
                        f"{elapsed:.1f}s (<30s)")
    assert ok


def random_increasing(rng):
    kind = rng.integers(5)
    if kind == 0:
        a, b = rng.uniform(0.01, 100), rng.uniform(-50, 50)
        return lambda x: a * x + b
    if kind == 1:
        p = rng.uniform(0.2, 3)
        return lambda x: x ** p
    if kind == 2:
        k = rng.uniform(0.01, 0.5)
        return lambda x: np.exp(k * x)
    if kind == 3:
        k = rng.uniform(0.1, 10)
        return lambda x: np.log1p(k * x)
    knots = np.arange(0, 41, dtype=float)
    vals = np.cumsum(rng.uniform(0.1, 5, knots.size))
    return lambda x: np.interp(x, knots, vals)


def test_4_monotone_invariance(acceptance):
    rng = np.random.default_rng(4)
    changed = 0
    for _ in range(100):
        samples, things = random_instance(rng)
        before = composite(samples, things)
        for _ in range(5):
            fn = random_increasing(rng)
            moved = [SceneSample(s.id, s.image, s.depth.map_values(fn), s.label) for s in samples]
            after = composite(moved, things)
            if (before.image.tobytes() != after.image.tobytes()
                    or before.label.tobytes() != after.label.tobytes()):
                changed += 1
    ok = changed == 0
    acceptance("4", ok, f"100 instances x 5 increasing transforms, {changed} outputs changed")
    assert ok


# 5 ---------------------------------------------------------------------------

def test_5_determinism(tmp_path, acceptance):
    fx = tmp_path / "fx"
    assert runner.cmd_fixtures(FixtureSpec(scenes=50), TABLE, fx, seed=5).ok
    manifest = fx / "manifest.jsonl"
    assert runner.cmd_weights(manifest, TABLE, tmp_path / "w").ok
    cfg = SynthConfig(n_images=3, samples_per_base=2, seed=55, augment=AugmentConfig(crop=(96, 48)))
    digests = {}
    for workers in (1, 4, 8):
        f = runner.cmd_fuse(manifest, TABLE, tmp_path / "w" / "weights.json",
                            tmp_path / f"fuse{workers}", workers=workers, save_scores=True)
        s = runner.cmd_synth(manifest, TABLE, cfg, tmp_path / f"synth{workers}", workers=workers)
        assert f.ok and s.ok
        digests[workers] = (tree_digest(tmp_path / f"fuse{workers}"),
                            tree_digest(tmp_path / f"synth{workers}"))
    same = digests[1] == digests[4] == digests[8]
    n_files = sum(len(d) for d in digests[1])
    ok = same and n_files == 2 * 50 + 100 * 2 + 2
    acceptance("5", ok, f"fuse+synth trees ({n_files} files) byte-identical for workers 1/4/8: {same}")
    assert ok


# 6 ---------------------------------------------------------------------------

def test_6_metrics_oracle(tmp_path, acceptance):
    rng = np.random.default_rng(6)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(1, 20))
        counts = rng.integers(0, 10_000, (n, n)) * (rng.random((n, n)) < rng.uniform(0.1, 1))
        counts[rng.integers(n), rng.integers(n)] += 1
        cm = ConfusionMatrix(counts.astype(np.int64))
        ious, miou_o, acc_o = metrics_oracle(counts.tolist())
        iou = [None if np.isnan(v) else float(v) for v in iou_per_class(cm)]
        if iou != ious or miou_and_acc(cm) != (miou_o, acc_o):
            mismatches += 1

    fx = tmp_path / "fx"
    spec = FixtureSpec(scenes=10, dep_things_rate=0, uda_stuff_rate=0)
    assert runner.cmd_fixtures(spec, TABLE, fx, seed=6).ok
    perfect = runner.cmd_eval(fx / "manifest.jsonl", TABLE, tmp_path / "e", branch="uda").summary
    ok = mismatches == 0 and perfect["miou"] == 1.0 and perfect["acc"] == 1.0
    acceptance("6", ok, f"1000 random matrices, {mismatches} mismatches vs scalar loop; "
                        f"perfect fixture mIoU={perfect['miou']} Acc={perfect['acc']}")
    assert ok


# 7 ---------------------------------------------------------------------------

def test_7_complementarity(tmp_path, acceptance):
    t0 = time.perf_counter()
    fx = tmp_path / "fx"
    spec = FixtureSpec(scenes=50, dep_things_rate=0.5, uda_stuff_rate=0.5)
    assert runner.cmd_fixtures(spec, TABLE, fx, seed=7).ok
    manifest = fx / "manifest.jsonl"
    assert runner.cmd_weights(manifest, TABLE, tmp_path / "w").ok
    assert runner.cmd_fuse(manifest, TABLE, tmp_path / "w" / "weights.json", tmp_path / "f").ok
    fused = runner.cmd_eval(manifest, TABLE, tmp_path / "ef", pred_dir=tmp_path / "f" / "labels")
    dep = runner.cmd_eval(manifest, TABLE, tmp_path / "ed", branch="dep")
    uda = runner.cmd_eval(manifest, TABLE, tmp_path / "eu", branch="uda")
    elapsed = time.perf_counter() - t0
    f, d, u = (100 * r.summary["miou"] for r in (fused, dep, uda))
    margin = f - max(d, u)
    ok = f > d and f > u and margin > 5 and elapsed < 120
    acceptance("7", ok, f"mIoU fused {f:.2f} vs depth branch {d:.2f}, UDA branch {u:.2f}; "
                        f"margin {margin:.2f} (>5), {elapsed:.1f}s (<120s)")
    assert ok


# 8 ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def throughput_set(tmp_path_factory):
    """100 manifest records at 1024x512x19 backed by 10 distinct logit pairs."""
    root = tmp_path_factory.mktemp("throughput")
    rng = np.random.default_rng(8)
    lines = []
    for k in range(10):
        for branch in ("dep", "uda"):
            z = rng.normal(0, 3, (512, 1024, 19)).astype(np.float32)
            io.write_logits(root / f"{branch}_{k}.lgt", z)
    for i in range(100):
        k = i % 10
        lines.append(f'{{"id": "s{i:03d}", "logits_dep": "dep_{k}.lgt", "logits_uda": "uda_{k}.lgt"}}')
    (root / "manifest.jsonl").write_text("\n".join(lines) + "\n")
    io.write_weights(root / "weights.json", finalize_weights(rng.uniform(1.4, 50.5, 19)), TABLE)
    return root


def _timed_fuse(root, out, workers):
    t0 = time.perf_counter()
    rep = runner.cmd_fuse(root / "manifest.jsonl", TABLE, root / "weights.json", out, workers=workers)
    assert rep.ok and rep.outputs == 100
    return time.perf_counter() - t0


_TIMES = {}


@pytest.mark.slow
def test_8a_throughput_single_worker(throughput_set, tmp_path, acceptance):
    elapsed = _timed_fuse(throughput_set, tmp_path / "w1", 1)
    _TIMES[1] = elapsed
    ok = elapsed < 300
    acceptance("8a", ok, f"fused 100 samples at 1024x512x19 with 1 worker in {elapsed:.1f}s (<300s)")
    assert ok


@pytest.mark.slow
def test_8b_speedup_four_workers(throughput_set, tmp_path, acceptance):
    single = _TIMES.get(1) or _timed_fuse(throughput_set, tmp_path / "w1", 1)
    four = _timed_fuse(throughput_set, tmp_path / "w4", 4)
    ratio = single / four
    cpus = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count()
    ok = ratio >= 3.0
    acceptance("8b", ok, f"4-worker speedup {ratio:.2f}x (>=3x); 1 worker {single:.1f}s, "
                         f"4 workers {four:.1f}s; {cpus} CPU(s) available")
    assert ok, f"speedup {ratio:.2f}x < 3x with {cpus} CPU(s) available"
