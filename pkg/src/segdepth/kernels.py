"""Backend selection for the per-pixel kernels.

The compiled extension is used when importable. Set ``SEGDEPTH_PURE=1``
to force the numpy implementation.
"""
import os

import numpy as np

from . import _numpy_kernels

_compiled = None
if os.environ.get("SEGDEPTH_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKENDS = {"numpy": _numpy_kernels}
if _compiled is not None:
    BACKENDS["cython"] = _compiled

BACKEND = "cython" if _compiled is not None else "numpy"


def get_backend(name=None):
    name = name or BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} is not available; have {sorted(BACKENDS)}") from None


def _logits_pair(dep, uda):
    dep = np.asarray(dep)
    dtype = np.float32 if dep.dtype == np.float32 and np.asarray(uda).dtype == np.float32 else np.float64
    return (np.ascontiguousarray(dep, dtype=dtype),
            np.ascontiguousarray(uda, dtype=dtype))


def fuse_scores(dep, uda, w_dep, w_uda, temperature, backend=None):
    dep, uda = _logits_pair(dep, uda)
    return get_backend(backend).fuse_scores(
        dep, uda, np.ascontiguousarray(w_dep, np.float64),
        np.ascontiguousarray(w_uda, np.float64), float(temperature))


def fuse_labels(dep, uda, w_dep, w_uda, temperature, backend=None):
    dep, uda = _logits_pair(dep, uda)
    return get_backend(backend).fuse_labels(
        dep, uda, np.ascontiguousarray(w_dep, np.float64),
        np.ascontiguousarray(w_uda, np.float64), float(temperature))


def composite(images, labels, depths, valid, thresholds, things_lut, include_base=True,
              backend=None):
    return get_backend(backend).composite(
        np.ascontiguousarray(images, np.uint8),
        np.ascontiguousarray(labels, np.uint8),
        np.ascontiguousarray(depths, np.float64),
        np.ascontiguousarray(valid, np.uint8),
        np.ascontiguousarray(thresholds, np.float64),
        np.ascontiguousarray(things_lut, np.uint8),
        bool(include_base),
    )
