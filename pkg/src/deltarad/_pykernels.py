"""Pure numpy versions of the hot kernels.

Used when the compiled ``_ckernels`` extension is unavailable or when
``DELTARAD_PURE_PYTHON=1`` is set. Each function mirrors the Cython
signature and arithmetic order so that both backends agree.
"""
import numpy as np

_EDGE_TOL = 1e-6


def _shifted(a, d):
    """Return ``b`` with ``b[v] = a[v + d]`` inside the grid and 0 elsewhere."""
    out = np.zeros_like(a)
    src = []
    dst = []
    for size, step in zip(a.shape, d):
        step = int(step)
        if abs(step) >= size:
            return out
        if step >= 0:
            src.append(slice(step, size))
            dst.append(slice(0, size - step))
        else:
            src.append(slice(0, size + step))
            dst.append(slice(-step, size))
    out[tuple(dst)] = a[tuple(src)]
    return out


def glcm_counts(labels, nlevels, offsets):
    """Symmetric co-occurrence counts summed over ``offsets``.

    ``labels`` holds levels ``1..nlevels`` inside the region and 0 outside.
    """
    labels = np.asarray(labels, dtype=np.int32)
    counts = np.zeros(nlevels * nlevels, dtype=np.float64)
    for d in np.asarray(offsets, dtype=np.int64):
        nb = _shifted(labels, d)
        valid = (labels > 0) & (nb > 0)
        idx = (labels[valid].astype(np.int64) - 1) * nlevels + (nb[valid] - 1)
        counts += np.bincount(idx, minlength=nlevels * nlevels)
    mat = counts.reshape(nlevels, nlevels)
    return mat + mat.T


def glrlm_counts(labels, nlevels, offsets):
    """Run-length counts ``R[level - 1, length - 1]`` summed over ``offsets``."""
    labels = np.asarray(labels, dtype=np.int32)
    maxrun = max(labels.shape)
    out = np.zeros((nlevels, maxrun), dtype=np.float64)
    inside = labels > 0
    for d in np.asarray(offsets, dtype=np.int64):
        same_next = inside & (_shifted(labels, d) == labels)
        length = inside.astype(np.int64)
        while True:
            grown = np.where(inside, 1 + np.where(same_next, _shifted(length, d), 0), 0)
            if np.array_equal(grown, length):
                break
            length = grown
        starts = inside & (_shifted(labels, -d) != labels)
        lv = labels[starts].astype(np.int64) - 1
        ln = length[starts] - 1
        np.add.at(out, (lv, ln), 1.0)
    return out


def sample_points(array, points, order, fill):
    """Sample ``array`` at continuous voxel coordinates ``points`` (N, 3).

    ``order`` 0 is nearest neighbour, 1 is trilinear. Points outside the
    sampled field receive ``fill``.
    """
    array = np.asarray(array, dtype=np.float64)
    pts = np.asarray(points, dtype=np.float64)
    shape = np.array(array.shape)
    out = np.full(pts.shape[0], fill, dtype=np.float64)
    if order == 0:
        idx = np.floor(pts + 0.5).astype(np.int64)
        valid = np.all((idx >= 0) & (idx < shape), axis=1)
        i = idx[valid]
        out[valid] = array[i[:, 0], i[:, 1], i[:, 2]]
        return out

    valid = np.all((pts >= -_EDGE_TOL) & (pts <= shape - 1 + _EDGE_TOL), axis=1)
    p = np.clip(pts[valid], 0.0, shape - 1)
    i0 = np.minimum(np.floor(p).astype(np.int64), np.maximum(shape - 2, 0))
    f = p - i0
    i1 = np.minimum(i0 + 1, shape - 1)
    fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]
    x0, y0, z0 = i0[:, 0], i0[:, 1], i0[:, 2]
    x1, y1, z1 = i1[:, 0], i1[:, 1], i1[:, 2]
    c00 = array[x0, y0, z0] * (1.0 - fx) + array[x1, y0, z0] * fx
    c10 = array[x0, y1, z0] * (1.0 - fx) + array[x1, y1, z0] * fx
    c01 = array[x0, y0, z1] * (1.0 - fx) + array[x1, y0, z1] * fx
    c11 = array[x0, y1, z1] * (1.0 - fx) + array[x1, y1, z1] * fx
    c0 = c00 * (1.0 - fy) + c10 * fy
    c1 = c01 * (1.0 - fy) + c11 * fy
    out[valid] = c0 * (1.0 - fz) + c1 * fz
    return out


def best_split_gini(X, y, w, rows, features, min_leaf):
    """Best axis-aligned split of ``rows`` by weighted Gini decrease.

    Returns ``(feature, threshold, gain)`` where gain is the drop in
    weight-scaled impurity; ``(-1, nan, -inf)`` when no split is legal.
    Ties keep the earliest feature in ``features`` and the lowest threshold.
    """
    best = (-1, np.nan, -np.inf)
    m = rows.shape[0]
    if m < 2 * min_leaf:
        return best
    for f in features:
        xv = X[rows, f]
        order = np.argsort(xv, kind="stable")
        xs = xv[order]
        ws = w[rows][order]
        w1 = np.cumsum(ws * y[rows][order])
        wl = np.cumsum(ws)
        total = wl[-1]
        total1 = w1[-1]
        total0 = total - total1
        parent = total - (total0 * total0 + total1 * total1) / total
        pos = np.arange(m - 1)
        ok = (xs[:-1] < xs[1:]) & (pos + 1 >= min_leaf) & (m - pos - 1 >= min_leaf)
        if not ok.any():
            continue
        pos = pos[ok]
        wl_ = wl[pos]
        wl1 = w1[pos]
        wl0 = wl_ - wl1
        wr_ = total - wl_
        wr1 = total1 - wl1
        wr0 = wr_ - wr1
        with np.errstate(divide="ignore", invalid="ignore"):
            left = np.where(wl_ > 0, wl_ - (wl0 * wl0 + wl1 * wl1) / wl_, 0.0)
            right = np.where(wr_ > 0, wr_ - (wr0 * wr0 + wr1 * wr1) / wr_, 0.0)
        gain = parent - left - right
        k = int(np.argmax(gain))
        if gain[k] > best[2]:
            a, b = xs[pos[k]], xs[pos[k] + 1]
            thr = a + (b - a) / 2.0
            if thr >= b:
                thr = a
            best = (int(f), float(thr), float(gain[k]))
    return best


def best_split_newton(X, g, h, rows, features, lam, min_child_weight, min_leaf):
    """Best split by second-order gain ``0.5 * (GL²/(HL+λ) + GR²/(HR+λ) - G²/(H+λ))``."""
    best = (-1, np.nan, -np.inf)
    m = rows.shape[0]
    if m < 2 * min_leaf:
        return best
    for f in features:
        xv = X[rows, f]
        order = np.argsort(xv, kind="stable")
        xs = xv[order]
        gl = np.cumsum(g[rows][order])
        hl = np.cumsum(h[rows][order])
        gt = gl[-1]
        ht = hl[-1]
        parent = gt * gt / (ht + lam)
        pos = np.arange(m - 1)
        gl_ = gl[:-1]
        hl_ = hl[:-1]
        gr_ = gt - gl_
        hr_ = ht - hl_
        ok = (
            (xs[:-1] < xs[1:])
            & (pos + 1 >= min_leaf)
            & (m - pos - 1 >= min_leaf)
            & (hl_ >= min_child_weight)
            & (hr_ >= min_child_weight)
        )
        if not ok.any():
            continue
        pos = pos[ok]
        gl_, hl_, gr_, hr_ = gl_[ok], hl_[ok], gr_[ok], hr_[ok]
        gain = 0.5 * (gl_ * gl_ / (hl_ + lam) + gr_ * gr_ / (hr_ + lam) - parent)
        k = int(np.argmax(gain))
        if gain[k] > best[2]:
            a, b = xs[pos[k]], xs[pos[k] + 1]
            thr = a + (b - a) / 2.0
            if thr >= b:
                thr = a
            best = (int(f), float(thr), float(gain[k]))
    return best
