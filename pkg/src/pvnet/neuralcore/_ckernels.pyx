# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_pykernels.py`` (channels-first, float64)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

BACKEND = "cython"


def im2col3x3(const double[:, :, :, ::1] x):
    cdef Py_ssize_t c = x.shape[0], n = x.shape[1], h = x.shape[2], w = x.shape[3]
    out = np.zeros((c, 9, n, h, w))
    cdef double[:, :, :, :, ::1] cols = out
    cdef Py_ssize_t ch, k, b, i, j, di, dj, si, j0, j1
    with nogil:
        for ch in range(c):
            for k in range(9):
                di = k // 3 - 1
                dj = k % 3 - 1
                j0 = 1 if dj < 0 else 0
                j1 = w - 1 if dj > 0 else w
                for b in range(n):
                    for i in range(h):
                        si = i + di
                        if si < 0 or si >= h:
                            continue
                        for j in range(j0, j1):
                            cols[ch, k, b, i, j] = x[ch, b, si, j + dj]
    return out


def col2im3x3(const double[:, :, :, :, ::1] dcols):
    cdef Py_ssize_t c = dcols.shape[0], n = dcols.shape[2], h = dcols.shape[3], w = dcols.shape[4]
    out = np.zeros((c, n, h, w))
    cdef double[:, :, :, ::1] dx = out
    cdef Py_ssize_t ch, k, b, i, j, di, dj, si, j0, j1
    # Same k order as the numpy fallback so the sums match exactly.
    with nogil:
        for ch in range(c):
            for k in range(9):
                di = k // 3 - 1
                dj = k % 3 - 1
                j0 = 1 if dj < 0 else 0
                j1 = w - 1 if dj > 0 else w
                for b in range(n):
                    for i in range(h):
                        si = i + di
                        if si < 0 or si >= h:
                            continue
                        for j in range(j0, j1):
                            dx[ch, b, si, j + dj] += dcols[ch, k, b, i, j]
    return out


def maxpool2x2_forward(const double[:, :, ::1] x):
    cdef Py_ssize_t nb = x.shape[0], hp = x.shape[1] // 2, wp = x.shape[2] // 2
    out_arr = np.empty((nb, hp, wp))
    arg_arr = np.empty((nb, hp, wp), dtype=np.uint8)
    cdef double[:, :, ::1] out = out_arr
    cdef unsigned char[:, :, ::1] arg = arg_arr
    cdef Py_ssize_t b, i, j
    cdef double best, v
    cdef unsigned char a
    with nogil:
        for b in range(nb):
            for i in range(hp):
                for j in range(wp):
                    best = x[b, 2 * i, 2 * j]
                    a = 0
                    v = x[b, 2 * i, 2 * j + 1]
                    if v > best:
                        best = v
                        a = 1
                    v = x[b, 2 * i + 1, 2 * j]
                    if v > best:
                        best = v
                        a = 2
                    v = x[b, 2 * i + 1, 2 * j + 1]
                    if v > best:
                        best = v
                        a = 3
                    out[b, i, j] = best
                    arg[b, i, j] = a
    return out_arr, arg_arr


def maxpool2x2_backward(const double[:, :, ::1] dout, const unsigned char[:, :, ::1] arg):
    cdef Py_ssize_t nb = dout.shape[0], hp = dout.shape[1], wp = dout.shape[2]
    out = np.zeros((nb, 2 * hp, 2 * wp))
    cdef double[:, :, ::1] dx = out
    cdef Py_ssize_t b, i, j
    cdef unsigned char a
    with nogil:
        for b in range(nb):
            for i in range(hp):
                for j in range(wp):
                    a = arg[b, i, j]
                    dx[b, 2 * i + (a >> 1), 2 * j + (a & 1)] = dout[b, i, j]
    return out


def prelu_forward(const double[:, ::1] x, const double[::1] slope):
    cdef Py_ssize_t c = x.shape[0], m = x.shape[1], ch, r
    out_arr = np.empty((c, m))
    cdef double[:, ::1] out = out_arr
    cdef double v, s
    with nogil:
        for ch in range(c):
            s = slope[ch]
            for r in range(m):
                v = x[ch, r]
                out[ch, r] = v if v > 0 else v * s
    return out_arr


def prelu_backward(const double[:, ::1] dy, const double[:, ::1] x, const double[::1] slope):
    cdef Py_ssize_t c = x.shape[0], m = x.shape[1], ch, r
    dx_arr = np.empty((c, m))
    ds_arr = np.zeros(c)
    cdef double[:, ::1] dx = dx_arr
    cdef double[::1] ds = ds_arr
    cdef double v, g, s, acc
    with nogil:
        for ch in range(c):
            s = slope[ch]
            acc = 0.0
            for r in range(m):
                v = x[ch, r]
                g = dy[ch, r]
                if v > 0:
                    dx[ch, r] = g
                else:
                    dx[ch, r] = g * s
                    acc = acc + g * v
            ds[ch] = acc
    return dx_arr, ds_arr


def adam_step(double[::1] p, const double[::1] g, double[::1] m, double[::1] v,
              double b1, double b2, double step, double inv_sqrt_c2, double eps):
    cdef Py_ssize_t n = p.shape[0], k
    cdef double gk, mk, vk
    with nogil:
        for k in range(n):
            gk = g[k]
            mk = m[k] * b1 + gk * (1.0 - b1)
            vk = v[k] * b2 + (gk * gk) * (1.0 - b2)
            m[k] = mk
            v[k] = vk
            p[k] = p[k] - (mk / (sqrt(vk) * inv_sqrt_c2 + eps)) * step
