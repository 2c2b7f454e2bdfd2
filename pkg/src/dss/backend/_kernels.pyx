# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: patch extraction/scatter for convolutions and the
Jacobi relaxation sweep used by the harmonic inpainter.

Must stay bit-compatible with ``py_kernels.py``: same arithmetic, same
floating-point evaluation order.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()

COMPILED = True


def im2col(cnp.ndarray[cnp.float64_t, ndim=4] x, int kh, int kw):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = h - kh + 1, ow = w - kw + 1
    cdef cnp.ndarray[cnp.float64_t, ndim=3] cols = np.empty((n, c * kh * kw, oh * ow))
    cdef Py_ssize_t b, ch, i, j, oi, oj, row
    cdef cnp.float64_t[:, :, :, :] xv = x
    cdef cnp.float64_t[:, :, :] cv = cols
    for b in range(n):
        for ch in range(c):
            for i in range(kh):
                for j in range(kw):
                    row = (ch * kh + i) * kw + j
                    for oi in range(oh):
                        for oj in range(ow):
                            cv[b, row, oi * ow + oj] = xv[b, ch, oi + i, oj + j]
    return cols


def col2im(cnp.ndarray[cnp.float64_t, ndim=3] cols, int c, int h, int w, int kh, int kw):
    cdef Py_ssize_t n = cols.shape[0]
    cdef Py_ssize_t oh = h - kh + 1, ow = w - kw + 1
    cdef cnp.ndarray[cnp.float64_t, ndim=4] out = np.zeros((n, c, h, w))
    cdef Py_ssize_t b, ch, i, j, oi, oj, row
    cdef cnp.float64_t[:, :, :] cv = cols
    cdef cnp.float64_t[:, :, :, :] ov = out
    # kernel-offset-major accumulation order, matching the fallback
    for i in range(kh):
        for j in range(kw):
            for b in range(n):
                for ch in range(c):
                    row = (ch * kh + i) * kw + j
                    for oi in range(oh):
                        for oj in range(ow):
                            ov[b, ch, oi + i, oj + j] += cv[b, row, oi * ow + oj]
    return out


def jacobi_sweep(cnp.ndarray[cnp.float64_t, ndim=3] img,
                 cnp.ndarray[cnp.uint8_t, ndim=2] holes):
    cdef Py_ssize_t c = img.shape[0], h = img.shape[1], w = img.shape[2]
    cdef cnp.ndarray[cnp.float64_t, ndim=3] new = img.copy()
    cdef cnp.float64_t[:, :, :] iv = img
    cdef cnp.float64_t[:, :, :] nv = new
    cdef cnp.uint8_t[:, :] hv = holes
    cdef Py_ssize_t ch, i, j
    cdef cnp.float64_t s, cnt, upd, max_update = 0.0
    for ch in range(c):
        for i in range(h):
            for j in range(w):
                if hv[i, j] == 0:
                    continue
                s = 0.0
                cnt = 0.0
                if i > 0:
                    s = s + iv[ch, i - 1, j]
                    cnt += 1.0
                if i < h - 1:
                    s = s + iv[ch, i + 1, j]
                    cnt += 1.0
                if j > 0:
                    s = s + iv[ch, i, j - 1]
                    cnt += 1.0
                if j < w - 1:
                    s = s + iv[ch, i, j + 1]
                    cnt += 1.0
                nv[ch, i, j] = s / cnt
                upd = nv[ch, i, j] - iv[ch, i, j]
                if upd < 0.0:
                    upd = -upd
                if upd > max_update:
                    max_update = upd
    return new, max_update
