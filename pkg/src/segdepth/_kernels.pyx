# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-pixel kernels.

Signatures and results match ``segdepth._numpy_kernels``; callers go
through ``segdepth.kernels`` which validates shapes and dtypes first.
"""
from cython cimport floating
from libc.math cimport exp, INFINITY
from libc.stdlib cimport malloc, free

import numpy as np


cdef inline void _fuse_pixel(const floating* zd, const floating* zu, const double* w_dep,
                             const double* w_uda, double inv_t, Py_ssize_t n_cls,
                             double* pd, double* pu, double* out) noexcept nogil:
    cdef Py_ssize_t i
    cdef double md = zd[0], mu = zu[0], sd = 0.0, su = 0.0
    for i in range(1, n_cls):
        if zd[i] > md:
            md = zd[i]
        if zu[i] > mu:
            mu = zu[i]
    for i in range(n_cls):
        pd[i] = exp((zd[i] - md) * inv_t)
        pu[i] = exp((zu[i] - mu) * inv_t)
        sd += pd[i]
        su += pu[i]
    for i in range(n_cls):
        out[i] = w_dep[i] * (pd[i] / sd) + w_uda[i] * (pu[i] / su)


def fuse_scores(const floating[:, :, ::1] dep, const floating[:, :, ::1] uda,
                const double[::1] w_dep, const double[::1] w_uda, double temperature):
    cdef Py_ssize_t h = dep.shape[0], w = dep.shape[1], n_cls = dep.shape[2]
    cdef Py_ssize_t r, c
    cdef double inv_t = 1.0 / temperature
    scores = np.empty((h, w, n_cls), dtype=np.float64)
    cdef double[:, :, ::1] out = scores
    cdef double* buf = <double*> malloc(2 * n_cls * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    try:
        with nogil:
            for r in range(h):
                for c in range(w):
                    _fuse_pixel(&dep[r, c, 0], &uda[r, c, 0], &w_dep[0], &w_uda[0], inv_t, n_cls,
                                buf, buf + n_cls, &out[r, c, 0])
    finally:
        free(buf)
    return scores


def fuse_labels(const floating[:, :, ::1] dep, const floating[:, :, ::1] uda,
                const double[::1] w_dep, const double[::1] w_uda, double temperature):
    cdef Py_ssize_t h = dep.shape[0], w = dep.shape[1], n_cls = dep.shape[2]
    cdef Py_ssize_t r, c, i, best
    cdef double inv_t = 1.0 / temperature
    cdef double* s
    labels = np.empty((h, w), dtype=np.uint8)
    cdef unsigned char[:, :] lab = labels
    cdef double* buf = <double*> malloc(3 * n_cls * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    try:
        with nogil:
            s = buf + 2 * n_cls
            for r in range(h):
                for c in range(w):
                    _fuse_pixel(&dep[r, c, 0], &uda[r, c, 0], &w_dep[0], &w_uda[0], inv_t, n_cls,
                                buf, buf + n_cls, s)
                    best = 0
                    for i in range(1, n_cls):
                        if s[i] > s[best]:
                            best = i
                    lab[r, c] = <unsigned char> best
    finally:
        free(buf)
    return labels


def composite(const unsigned char[:, :, :, :] images, const unsigned char[:, :, :] labels,
              const double[:, :, :] depths, const unsigned char[:, :, :] valid,
              const double[:] thresholds, const unsigned char[:] things_lut,
              bint include_base=True):
    cdef Py_ssize_t n_img = labels.shape[0], h = labels.shape[1], w = labels.shape[2]
    cdef Py_ssize_t n, r, c, k, start = 0 if include_base else 1
    cdef double d, best
    out_image = np.empty((h, w, 3), dtype=np.uint8)
    out_label = np.empty((h, w), dtype=np.uint8)
    source = np.empty((h, w), dtype=np.int32)
    cdef unsigned char[:, :, :] oi = out_image
    cdef unsigned char[:, :] ol = out_label
    cdef int[:, :] src = source
    with nogil:
        for r in range(h):
            for c in range(w):
                k = 0
                best = INFINITY
                for n in range(start, n_img):
                    if not valid[n, r, c] or not things_lut[labels[n, r, c]]:
                        continue
                    d = depths[n, r, c]
                    # strict < keeps the lowest index on depth ties
                    if d < thresholds[n] and d < best:
                        best = d
                        k = n
                src[r, c] = <int> k
                ol[r, c] = labels[k, r, c]
                oi[r, c, 0] = images[k, r, c, 0]
                oi[r, c, 1] = images[k, r, c, 1]
                oi[r, c, 2] = images[k, r, c, 2]
    return out_image, out_label, source
