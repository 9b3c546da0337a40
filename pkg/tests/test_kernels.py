"""The compiled and numpy kernels must agree."""
import numpy as np
import pytest

from segdepth import kernels

needs_both = pytest.mark.skipif("cython" not in kernels.BACKENDS,
                                reason="compiled extension not built")


def test_backend_selected():
    assert kernels.BACKEND in kernels.BACKENDS
    assert kernels.get_backend() is kernels.BACKENDS[kernels.BACKEND]
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


@needs_both
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_fuse_backends_agree(rng, dtype):
    dep, uda = rng.normal(0, 6, (2, 37, 23, 19)).astype(dtype)
    wd = rng.random(19)
    args = (dep, uda, wd, 1 - wd, 6.0)
    a = kernels.fuse_scores(*args, backend="cython")
    b = kernels.fuse_scores(*args, backend="numpy")
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-14)
    la = kernels.fuse_labels(*args, backend="cython")
    lb = kernels.fuse_labels(*args, backend="numpy")
    top2 = np.sort(b, axis=-1)[..., -2:]
    clear = (top2[..., 1] - top2[..., 0]) > 1e-12
    np.testing.assert_array_equal(la[clear], lb[clear])


@needs_both
def test_fuse_backends_noncontiguous(rng):
    big = rng.normal(size=(10, 20, 19))
    dep, uda = big[::2, 1::3], big[1::2, ::3]
    wd = rng.random(19)
    np.testing.assert_allclose(kernels.fuse_scores(dep, uda, wd, 1 - wd, 2.0, backend="cython"),
                               kernels.fuse_scores(dep, uda, wd, 1 - wd, 2.0, backend="numpy"),
                               atol=1e-14)


@needs_both
@pytest.mark.parametrize("include_base", [True, False])
def test_composite_backends_agree(rng, include_base):
    for _ in range(50):
        n, h, w = rng.integers(1, 6), rng.integers(1, 20), rng.integers(1, 20)
        images = rng.integers(0, 256, (n, h, w, 3), dtype=np.uint8)
        labels = rng.integers(0, 19, (n, h, w), dtype=np.uint8)
        depths = rng.integers(1, 8, (n, h, w)).astype(np.float64)
        valid = rng.random((n, h, w)) < 0.8
        thr = rng.uniform(1, 8, n)
        lut = (rng.random(256) < 0.5).astype(np.uint8)
        a = kernels.composite(images, labels, depths, valid, thr, lut, include_base, backend="cython")
        b = kernels.composite(images, labels, depths, valid, thr, lut, include_base, backend="numpy")
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)
