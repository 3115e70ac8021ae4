# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot loops in ``_pykernels`` (same layouts)."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def im2col(double[:, :, :, ::1] x, int k):
    cdef Py_ssize_t b = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t p = (k - 1) // 2
    out = np.zeros((c * k * k, b * h * w))
    cdef double[:, ::1] cols = out
    cdef Py_ssize_t n, ch, di, dj, i, j, row, si, base, j0, j1
    for ch in range(c):
        for di in range(k):
            for dj in range(k):
                row = (ch * k + di) * k + dj
                j0 = p - dj if dj < p else 0
                j1 = w + p - dj if dj > p else w
                for n in range(b):
                    for i in range(h):
                        si = i + di - p
                        if si < 0 or si >= h:
                            continue
                        base = (n * h + i) * w
                        for j in range(j0, j1):
                            cols[row, base + j] = x[n, ch, si, j + dj - p]
    return out


def col2im(double[:, ::1] cols, int b, int c, int h, int w, int k):
    cdef Py_ssize_t p = (k - 1) // 2
    out = np.zeros((b, c, h, w))
    cdef double[:, :, :, ::1] x = out
    cdef Py_ssize_t n, ch, di, dj, i, j, row, si, base, j0, j1
    for ch in range(c):
        for di in range(k):
            for dj in range(k):
                row = (ch * k + di) * k + dj
                j0 = p - dj if dj < p else 0
                j1 = w + p - dj if dj > p else w
                for n in range(b):
                    for i in range(h):
                        si = i + di - p
                        if si < 0 or si >= h:
                            continue
                        base = (n * h + i) * w
                        for j in range(j0, j1):
                            x[n, ch, si, j + dj - p] += cols[row, base + j]
    return out


def gilbert_chain(const double[::1] u, double p_enter, double p_exit, bint start_lost):
    cdef Py_ssize_t n = u.shape[0], i
    out = np.empty(n, dtype=np.uint8)
    cdef unsigned char[::1] m = out
    cdef bint lost = start_lost
    for i in range(n):
        m[i] = 0 if lost else 1
        if lost:
            if u[i] < p_exit:
                lost = False
        elif u[i] < p_enter:
            lost = True
    return out
