"""Pure numpy implementations of the per-pixel kernels.

Used when the compiled extension is missing, and as the second route in
the backend-equivalence tests. Work is split into row blocks so peak
memory stays bounded on full-resolution inputs.
"""
import numpy as np

_BLOCK_ELEMS = 1 << 21


def _rows_per_block(w, n_cls):
    return max(1, _BLOCK_ELEMS // max(1, w * n_cls))


def _softmax_block(z, inv_t):
    z = z.astype(np.float64, copy=False)
    e = np.exp((z - z.max(axis=-1, keepdims=True)) * inv_t)
    return e / e.sum(axis=-1, keepdims=True)


def fuse_scores(dep, uda, w_dep, w_uda, temperature):
    h, w, n_cls = dep.shape
    inv_t = 1.0 / temperature
    out = np.empty((h, w, n_cls), dtype=np.float64)
    step = _rows_per_block(w, n_cls)
    for r0 in range(0, h, step):
        sl = slice(r0, r0 + step)
        out[sl] = w_dep * _softmax_block(dep[sl], inv_t) + w_uda * _softmax_block(uda[sl], inv_t)
    return out


def fuse_labels(dep, uda, w_dep, w_uda, temperature):
    h, w, n_cls = dep.shape
    inv_t = 1.0 / temperature
    out = np.empty((h, w), dtype=np.uint8)
    step = _rows_per_block(w, n_cls)
    for r0 in range(0, h, step):
        sl = slice(r0, r0 + step)
        s = w_dep * _softmax_block(dep[sl], inv_t) + w_uda * _softmax_block(uda[sl], inv_t)
        out[sl] = s.argmax(axis=-1)
    return out


def composite(images, labels, depths, valid, thresholds, things_lut, include_base=True):
    cand = (valid.astype(bool)
            & things_lut.astype(bool)[labels]
            & (depths < thresholds[:, None, None]))
    if not include_base:
        cand[0] = False
    masked = np.where(cand, depths, np.inf)
    # argmin returns the first minimum, so ties and empty sets resolve to the lowest index
    source = masked.argmin(axis=0).astype(np.int32)
    idx = source[None, :, :, None].astype(np.intp)
    out_label = np.take_along_axis(labels, idx[..., 0], axis=0)[0]
    out_image = np.take_along_axis(images, idx, axis=0)[0]
    return np.ascontiguousarray(out_image), np.ascontiguousarray(out_label), source
