# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Signatures and arithmetic match ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, INFINITY, NAN

cnp.import_array()

cdef double EDGE_TOL = 1e-6


def glcm_counts(labels, Py_ssize_t nlevels, offsets):
    cdef const int[:, :, ::1] lab = np.ascontiguousarray(labels, dtype=np.int32)
    cdef const long long[:, ::1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    mat_arr = np.zeros((nlevels, nlevels), dtype=np.float64)
    cdef double[:, ::1] mat = mat_arr
    cdef Py_ssize_t nx = lab.shape[0], ny = lab.shape[1], nz = lab.shape[2]
    cdef Py_ssize_t k, x, y, z, x2, y2, z2, dx, dy, dz
    cdef int a, b
    for k in range(off.shape[0]):
        dx = off[k, 0]
        dy = off[k, 1]
        dz = off[k, 2]
        for x in range(nx):
            x2 = x + dx
            if x2 < 0 or x2 >= nx:
                continue
            for y in range(ny):
                y2 = y + dy
                if y2 < 0 or y2 >= ny:
                    continue
                for z in range(nz):
                    z2 = z + dz
                    if z2 < 0 or z2 >= nz:
                        continue
                    a = lab[x, y, z]
                    b = lab[x2, y2, z2]
                    if a > 0 and b > 0:
                        mat[a - 1, b - 1] += 1.0
    return mat_arr + mat_arr.T


def glrlm_counts(labels, Py_ssize_t nlevels, offsets):
    cdef const int[:, :, ::1] lab = np.ascontiguousarray(labels, dtype=np.int32)
    cdef const long long[:, ::1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef Py_ssize_t nx = lab.shape[0], ny = lab.shape[1], nz = lab.shape[2]
    cdef Py_ssize_t maxrun = max(nx, ny, nz)
    out_arr = np.zeros((nlevels, maxrun), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t k, x, y, z, px, py, pz, cx, cy, cz, dx, dy, dz, length
    cdef int a
    for k in range(off.shape[0]):
        dx = off[k, 0]
        dy = off[k, 1]
        dz = off[k, 2]
        for x in range(nx):
            for y in range(ny):
                for z in range(nz):
                    a = lab[x, y, z]
                    if a <= 0:
                        continue
                    px = x - dx
                    py = y - dy
                    pz = z - dz
                    if 0 <= px < nx and 0 <= py < ny and 0 <= pz < nz:
                        if lab[px, py, pz] == a:
                            continue
                    length = 1
                    cx = x + dx
                    cy = y + dy
                    cz = z + dz
                    while 0 <= cx < nx and 0 <= cy < ny and 0 <= cz < nz:
                        if lab[cx, cy, cz] != a:
                            break
                        length += 1
                        cx += dx
                        cy += dy
                        cz += dz
                    out[a - 1, length - 1] += 1.0
    return out_arr


def sample_points(array, points, int order, double fill):
    cdef const double[:, :, ::1] arr = np.ascontiguousarray(array, dtype=np.float64)
    cdef const double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t n = pts.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t nx = arr.shape[0], ny = arr.shape[1], nz = arr.shape[2]
    cdef Py_ssize_t i, x0, y0, z0, x1, y1, z1
    cdef double px, py, pz, fx, fy, fz, c00, c10, c01, c11, c0, c1
    for i in range(n):
        px = pts[i, 0]
        py = pts[i, 1]
        pz = pts[i, 2]
        if order == 0:
            x0 = <Py_ssize_t>floor(px + 0.5)
            y0 = <Py_ssize_t>floor(py + 0.5)
            z0 = <Py_ssize_t>floor(pz + 0.5)
            if 0 <= x0 < nx and 0 <= y0 < ny and 0 <= z0 < nz:
                out[i] = arr[x0, y0, z0]
            else:
                out[i] = fill
            continue
        if (px < -EDGE_TOL or px > nx - 1 + EDGE_TOL or py < -EDGE_TOL
                or py > ny - 1 + EDGE_TOL or pz < -EDGE_TOL or pz > nz - 1 + EDGE_TOL):
            out[i] = fill
            continue
        px = min(max(px, 0.0), <double>(nx - 1))
        py = min(max(py, 0.0), <double>(ny - 1))
        pz = min(max(pz, 0.0), <double>(nz - 1))
        x0 = min(<Py_ssize_t>floor(px), max(nx - 2, 0))
        y0 = min(<Py_ssize_t>floor(py), max(ny - 2, 0))
        z0 = min(<Py_ssize_t>floor(pz), max(nz - 2, 0))
        fx = px - x0
        fy = py - y0
        fz = pz - z0
        x1 = min(x0 + 1, nx - 1)
        y1 = min(y0 + 1, ny - 1)
        z1 = min(z0 + 1, nz - 1)
        c00 = arr[x0, y0, z0] * (1.0 - fx) + arr[x1, y0, z0] * fx
        c10 = arr[x0, y1, z0] * (1.0 - fx) + arr[x1, y1, z0] * fx
        c01 = arr[x0, y0, z1] * (1.0 - fx) + arr[x1, y0, z1] * fx
        c11 = arr[x0, y1, z1] * (1.0 - fx) + arr[x1, y1, z1] * fx
        c0 = c00 * (1.0 - fy) + c10 * fy
        c1 = c01 * (1.0 - fy) + c11 * fy
        out[i] = c0 * (1.0 - fz) + c1 * fz
    return out_arr


def best_split_gini(X, y, w, rows, features, Py_ssize_t min_leaf):
    cdef Py_ssize_t[::1] rv = np.ascontiguousarray(rows, dtype=np.intp)
    cdef Py_ssize_t m = rv.shape[0]
    cdef int best_f = -1
    cdef double best_thr = NAN, best_gain = -INFINITY
    if m < 2 * min_leaf:
        return (best_f, best_thr, best_gain)
    yr = np.ascontiguousarray(y[rows], dtype=np.float64)
    wr = np.ascontiguousarray(w[rows], dtype=np.float64)
    cdef double[::1] ys = np.empty(m)
    cdef double[::1] ws = np.empty(m)
    cdef double[::1] xs = np.empty(m)
    cdef const double[::1] yv = yr
    cdef const double[::1] wv = wr
    cdef Py_ssize_t[::1] order
    cdef const double[::1] xc
    cdef Py_ssize_t i, f
    cdef double total, total1, total0, parent, wl, w1, wl0, wl1, wr_, wr1, wr0
    cdef double left, right, gain, fbest, a, b, thr
    cdef Py_ssize_t fpos
    for f in features:
        xcol = np.ascontiguousarray(X[rows, f], dtype=np.float64)
        xc = xcol
        order = np.argsort(xcol, kind="stable")
        for i in range(m):
            xs[i] = xc[order[i]]
            ws[i] = wv[order[i]]
            ys[i] = yv[order[i]]
        total = 0.0
        total1 = 0.0
        for i in range(m):
            total1 += ws[i] * ys[i]
            total += ws[i]
        total0 = total - total1
        parent = total - (total0 * total0 + total1 * total1) / total
        fbest = -INFINITY
        fpos = -1
        wl = 0.0
        w1 = 0.0
        for i in range(m - 1):
            wl += ws[i]
            w1 += ws[i] * ys[i]
            if not xs[i] < xs[i + 1]:
                continue
            if i + 1 < min_leaf or m - i - 1 < min_leaf:
                continue
            wl1 = w1
            wl0 = wl - wl1
            wr_ = total - wl
            wr1 = total1 - wl1
            wr0 = wr_ - wr1
            left = wl - (wl0 * wl0 + wl1 * wl1) / wl if wl > 0 else 0.0
            right = wr_ - (wr0 * wr0 + wr1 * wr1) / wr_ if wr_ > 0 else 0.0
            gain = parent - left - right
            if gain > fbest:
                fbest = gain
                fpos = i
        if fpos >= 0 and fbest > best_gain:
            a = xs[fpos]
            b = xs[fpos + 1]
            thr = a + (b - a) / 2.0
            if thr >= b:
                thr = a
            best_f = f
            best_thr = thr
            best_gain = fbest
    return (best_f, best_thr, best_gain)


def best_split_newton(X, g, h, rows, features, double lam, double min_child_weight,
                      Py_ssize_t min_leaf):
    cdef Py_ssize_t[::1] rv = np.ascontiguousarray(rows, dtype=np.intp)
    cdef Py_ssize_t m = rv.shape[0]
    cdef int best_f = -1
    cdef double best_thr = NAN, best_gain = -INFINITY
    if m < 2 * min_leaf:
        return (best_f, best_thr, best_gain)
    cdef const double[::1] gv = np.ascontiguousarray(g[rows], dtype=np.float64)
    cdef const double[::1] hv = np.ascontiguousarray(h[rows], dtype=np.float64)
    cdef double[::1] gs = np.empty(m)
    cdef double[::1] hs = np.empty(m)
    cdef double[::1] xs = np.empty(m)
    cdef Py_ssize_t[::1] order
    cdef const double[::1] xc
    cdef Py_ssize_t i, f, fpos
    cdef double gt, ht, parent, gl, hl, gr, hr, gain, fbest, a, b, thr
    for f in features:
        xcol = np.ascontiguousarray(X[rows, f], dtype=np.float64)
        xc = xcol
        order = np.argsort(xcol, kind="stable")
        for i in range(m):
            xs[i] = xc[order[i]]
            gs[i] = gv[order[i]]
            hs[i] = hv[order[i]]
        gt = 0.0
        ht = 0.0
        for i in range(m):
            gt += gs[i]
            ht += hs[i]
        parent = gt * gt / (ht + lam)
        fbest = -INFINITY
        fpos = -1
        gl = 0.0
        hl = 0.0
        for i in range(m - 1):
            gl += gs[i]
            hl += hs[i]
            if not xs[i] < xs[i + 1]:
                continue
            if i + 1 < min_leaf or m - i - 1 < min_leaf:
                continue
            gr = gt - gl
            hr = ht - hl
            if hl < min_child_weight or hr < min_child_weight:
                continue
            gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent)
            if gain > fbest:
                fbest = gain
                fpos = i
        if fpos >= 0 and fbest > best_gain:
            a = xs[fpos]
            b = xs[fpos + 1]
            thr = a + (b - a) / 2.0
            if thr >= b:
                thr = a
            best_f = f
            best_thr = thr
            best_gain = fbest
    return (best_f, best_thr, best_gain)
