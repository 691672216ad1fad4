# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; same signatures as ``terrasim._pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, INFINITY

cnp.import_array()


def conv3d(const float[:, :, :, ::1] x, const float[:, :, :, :, ::1] w, const float[::1] b):
    cdef Py_ssize_t X = x.shape[0], Y = x.shape[1], Z = x.shape[2], C = x.shape[3]
    cdef Py_ssize_t k = w.shape[0], O = w.shape[4]
    cdef Py_ssize_t r = k // 2
    out_arr = np.empty((X, Y, Z, O), dtype=np.float32)
    cdef float[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t ix, iy, iz, a, bb, cc, px, py, pz, c, o
    cdef float v
    cdef const float* wrow
    cdef float* orow
    for ix in range(X):
        for iy in range(Y):
            for iz in range(Z):
                orow = &out[ix, iy, iz, 0]
                for o in range(O):
                    orow[o] = b[o]
                for a in range(k):
                    px = ix + a - r
                    if px < 0 or px >= X:
                        continue
                    for bb in range(k):
                        py = iy + bb - r
                        if py < 0 or py >= Y:
                            continue
                        for cc in range(k):
                            pz = iz + cc - r
                            if pz < 0 or pz >= Z:
                                continue
                            for c in range(C):
                                v = x[px, py, pz, c]
                                if v == 0.0:
                                    continue
                                wrow = &w[a, bb, cc, c, 0]
                                for o in range(O):
                                    orow[o] += v * wrow[o]
    return out_arr


def maxpool3d(const float[:, :, :, ::1] x, Py_ssize_t f):
    cdef Py_ssize_t X = x.shape[0] // f, Y = x.shape[1] // f, Z = x.shape[2] // f, C = x.shape[3]
    out_arr = np.empty((X, Y, Z, C), dtype=np.float32)
    cdef float[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t ix, iy, iz, a, bb, cc, c
    cdef float m, v
    for ix in range(X):
        for iy in range(Y):
            for iz in range(Z):
                for c in range(C):
                    m = x[ix * f, iy * f, iz * f, c]
                    for a in range(f):
                        for bb in range(f):
                            for cc in range(f):
                                v = x[ix * f + a, iy * f + bb, iz * f + cc, c]
                                if v > m:
                                    m = v
                    out[ix, iy, iz, c] = m
    return out_arr


def cylinder_min_z(const double[:, ::1] query_xy, const double[:, ::1] ref_xyz, double radius):
    cdef Py_ssize_t n = query_xy.shape[0], m = ref_xyz.shape[0]
    out_arr = np.full(n, np.inf)
    if n == 0 or m == 0:
        return out_arr
    cdef double[::1] out = out_arr
    ref = np.asarray(ref_xyz)
    cdef double x0 = ref[:, 0].min(), y0 = ref[:, 1].min()
    cdef double cell = radius
    cdef Py_ssize_t nx = <Py_ssize_t>floor((ref[:, 0].max() - x0) / cell) + 1
    cdef Py_ssize_t ny = <Py_ssize_t>floor((ref[:, 1].max() - y0) / cell) + 1
    # bucket reference points by grid cell (counting sort)
    bx = np.clip(np.floor((ref[:, 0] - x0) / cell).astype(np.intp), 0, nx - 1)
    by = np.clip(np.floor((ref[:, 1] - y0) / cell).astype(np.intp), 0, ny - 1)
    key = bx * ny + by
    order_arr = np.argsort(key, kind="stable").astype(np.intp)
    start_arr = np.searchsorted(key[order_arr], np.arange(nx * ny + 1)).astype(np.intp)
    cdef Py_ssize_t[::1] order = order_arr
    cdef Py_ssize_t[::1] start = start_arr
    cdef Py_ssize_t i, gx, gy, cx, cy, s, j
    cdef double qx, qy, dx, dy, best, r2 = radius * radius
    for i in range(n):
        qx = query_xy[i, 0]
        qy = query_xy[i, 1]
        gx = <Py_ssize_t>floor((qx - x0) / cell)
        gy = <Py_ssize_t>floor((qy - y0) / cell)
        best = INFINITY
        for cx in range(gx - 1, gx + 2):
            if cx < 0 or cx >= nx:
                continue
            for cy in range(gy - 1, gy + 2):
                if cy < 0 or cy >= ny:
                    continue
                for s in range(start[cx * ny + cy], start[cx * ny + cy + 1]):
                    j = order[s]
                    dx = ref_xyz[j, 0] - qx
                    dy = ref_xyz[j, 1] - qy
                    if dx * dx + dy * dy <= r2 and ref_xyz[j, 2] < best:
                        best = ref_xyz[j, 2]
        out[i] = best
    return out_arr
