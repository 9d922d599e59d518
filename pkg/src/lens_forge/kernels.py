"""Hot numeric kernels, each with a numba and a pure-numpy implementation.

The public functions at the bottom dispatch on :func:`lens_forge._accel.use_numba`.
The ``_nb`` variants are written as explicit loops for numba; the ``_np``
variants are vectorised. They are kept arithmetically aligned (same operation
order where it matters) so that both backends agree to rounding.
"""

import numpy as np

from lens_forge._accel import njit, use_numba

SHAPE_BOX = 0
SHAPE_SPHERE = 1
SHAPE_SLAB = 2


# ---------------------------------------------------------------------------
# analytic primitive field
#
# Primitive encoding, per primitive k:
#   kinds[k]      shape code
#   centers[k]    center (m)
#   axes[k]       3x3 world-to-local rotation; row 0 is the slab normal
#   extents[k]    box half sizes / (radius, 0, 0) / (half thickness, 0, 0)
#   sigmas[k], colors[k]


@njit
def _analytic_nb(points, kinds, centers, axes, extents, sigmas, colors, background):
    n = points.shape[0]
    n_prim = kinds.shape[0]
    sigma = np.zeros(n)
    rgb = np.empty((n, 3))
    for i in range(n):
        best = -1
        best_sigma = 0.0
        for k in range(n_prim):
            dx = points[i, 0] - centers[k, 0]
            dy = points[i, 1] - centers[k, 1]
            dz = points[i, 2] - centers[k, 2]
            kind = kinds[k]
            inside = False
            if kind == SHAPE_SPHERE:
                r = extents[k, 0]
                inside = dx * dx + dy * dy + dz * dz <= r * r
            elif kind == SHAPE_SLAB:
                d = axes[k, 0, 0] * dx + axes[k, 0, 1] * dy + axes[k, 0, 2] * dz
                inside = abs(d) <= extents[k, 0]
            else:
                inside = True
                for a in range(3):
                    d = axes[k, a, 0] * dx + axes[k, a, 1] * dy + axes[k, a, 2] * dz
                    if abs(d) > extents[k, a]:
                        inside = False
                        break
            if inside and (best < 0 or sigmas[k] > best_sigma):
                best = k
                best_sigma = sigmas[k]
        sigma[i] = best_sigma
        for c in range(3):
            rgb[i, c] = colors[best, c] if best >= 0 else background[c]
    return sigma, rgb


def _analytic_np(points, kinds, centers, axes, extents, sigmas, colors, background):
    n = points.shape[0]
    best = np.full(n, -1, dtype=np.int64)
    best_sigma = np.zeros(n)
    for k in range(kinds.shape[0]):
        d = points - centers[k]
        if kinds[k] == SHAPE_SPHERE:
            dx, dy, dz = d[:, 0], d[:, 1], d[:, 2]
            inside = dx * dx + dy * dy + dz * dz <= extents[k, 0] * extents[k, 0]
        elif kinds[k] == SHAPE_SLAB:
            a = axes[k, 0]
            inside = np.abs(a[0] * d[:, 0] + a[1] * d[:, 1] + a[2] * d[:, 2]) <= extents[k, 0]
        else:
            inside = np.ones(n, dtype=bool)
            for a in range(3):
                r = axes[k, a]
                inside &= np.abs(r[0] * d[:, 0] + r[1] * d[:, 1] + r[2] * d[:, 2]) <= extents[k, a]
        take = inside & ((best < 0) | (sigmas[k] > best_sigma))
        best[take] = k
        best_sigma[take] = sigmas[k]
    rgb = np.where((best >= 0)[:, None], colors[np.maximum(best, 0)], background[None, :])
    return best_sigma, rgb


# ---------------------------------------------------------------------------
# trilinear voxel grid (nodes at lattice points spanning the bounds)


@njit
def _trilinear_nb(points, lo, hi, sigma_grid, color_grid, background):
    n = points.shape[0]
    res = sigma_grid.shape
    sigma = np.zeros(n)
    rgb = np.empty((n, 3))
    for i in range(n):
        outside = False
        for a in range(3):
            if points[i, a] < lo[a] or points[i, a] > hi[a]:
                outside = True
        if outside:
            for c in range(3):
                rgb[i, c] = background[c]
            continue
        idx = np.zeros(3, dtype=np.int64)
        frac = np.zeros(3)
        for a in range(3):
            if res[a] == 1:
                idx[a] = 0
                frac[a] = 0.0
                continue
            u = (points[i, a] - lo[a]) / (hi[a] - lo[a]) * (res[a] - 1)
            j = int(np.floor(u))
            if j >= res[a] - 1:
                j = res[a] - 2
            if j < 0:
                j = 0
            idx[a] = j
            frac[a] = u - j
        s = 0.0
        c0 = 0.0
        c1 = 0.0
        c2 = 0.0
        for corner in range(8):
            w = 1.0
            ii = np.zeros(3, dtype=np.int64)
            for a in range(3):
                bit = (corner >> (2 - a)) & 1
                if bit == 1:
                    w *= frac[a]
                    ii[a] = min(idx[a] + 1, res[a] - 1)
                else:
                    w *= 1.0 - frac[a]
                    ii[a] = idx[a]
            s += w * sigma_grid[ii[0], ii[1], ii[2]]
            c0 += w * color_grid[ii[0], ii[1], ii[2], 0]
            c1 += w * color_grid[ii[0], ii[1], ii[2], 1]
            c2 += w * color_grid[ii[0], ii[1], ii[2], 2]
        sigma[i] = s
        rgb[i, 0] = c0
        rgb[i, 1] = c1
        rgb[i, 2] = c2
    return sigma, rgb


def _trilinear_np(points, lo, hi, sigma_grid, color_grid, background):
    n = points.shape[0]
    res = np.array(sigma_grid.shape)
    inside = np.all((points >= lo) & (points <= hi), axis=1)
    sigma = np.zeros(n)
    rgb = np.tile(background, (n, 1)).astype(np.float64)
    p = points[inside]
    span = np.where(res > 1, hi - lo, 1.0)
    u = (p - lo) / span * np.maximum(res - 1, 0)
    idx = np.clip(np.floor(u).astype(np.int64), 0, np.maximum(res - 2, 0))
    frac = np.where(res > 1, u - idx, 0.0)
    s = np.zeros(len(p))
    c = np.zeros((len(p), 3))
    for corner in range(8):
        w = np.ones(len(p))
        ii = []
        for a in range(3):
            if (corner >> (2 - a)) & 1:
                w = w * frac[:, a]
                ii.append(np.minimum(idx[:, a] + 1, res[a] - 1))
            else:
                w = w * (1.0 - frac[:, a])
                ii.append(idx[:, a])
        s = s + w * sigma_grid[ii[0], ii[1], ii[2]]
        c = c + w[:, None] * color_grid[ii[0], ii[1], ii[2]]
    sigma[inside] = s
    rgb[inside] = c
    return sigma, rgb


# ---------------------------------------------------------------------------
# alpha compositing along rays
#
# delta_i = t_{i+1} - t_i, delta_N = t_far - t_N
# T_i = exp(-sum_{j<i} sigma_j delta_j), w_i = T_i (1 - exp(-sigma_i delta_i))


@njit
def _composite_nb(sigma, rgb, t, t_far, background):
    n_rays, n_samples = sigma.shape
    color = np.empty((n_rays, 3))
    t_final = np.empty(n_rays)
    weights = np.empty((n_rays, n_samples))
    for r in range(n_rays):
        acc = 0.0
        c0 = 0.0
        c1 = 0.0
        c2 = 0.0
        for i in range(n_samples):
            if i + 1 < n_samples:
                delta = t[r, i + 1] - t[r, i]
            else:
                delta = t_far[r] - t[r, i]
            x = sigma[r, i] * delta
            w = np.exp(-acc) * -np.expm1(-x)
            weights[r, i] = w
            c0 += w * rgb[r, i, 0]
            c1 += w * rgb[r, i, 1]
            c2 += w * rgb[r, i, 2]
            acc += x
        tf = np.exp(-acc)
        t_final[r] = tf
        color[r, 0] = c0 + tf * background[0]
        color[r, 1] = c1 + tf * background[1]
        color[r, 2] = c2 + tf * background[2]
    return color, t_final, weights


def _composite_np(sigma, rgb, t, t_far, background):
    delta = np.empty_like(t)
    delta[:, :-1] = t[:, 1:] - t[:, :-1]
    delta[:, -1] = t_far - t[:, -1]
    x = sigma * delta
    acc = np.cumsum(x, axis=1)
    before = np.zeros_like(acc)
    before[:, 1:] = acc[:, :-1]
    weights = np.exp(-before) * -np.expm1(-x)
    t_final = np.exp(-acc[:, -1])
    color = np.zeros((t.shape[0], 3))
    for i in range(t.shape[1]):
        color += weights[:, i, None] * rgb[:, i]
    color += t_final[:, None] * background[None, :]
    return color, t_final, weights


# ---------------------------------------------------------------------------
# inverse-CDF sampling of a piecewise-constant density
#
# edges: (R, N+1) bin edges, weights: (R, N), u: (R, M) in [0, 1)


@njit
def _sample_pdf_nb(edges, weights, u):
    n_rays, n_bins = weights.shape
    m = u.shape[1]
    out = np.empty((n_rays, m))
    cdf = np.empty(n_bins + 1)
    for r in range(n_rays):
        total = 0.0
        for i in range(n_bins):
            total += weights[r, i]
        uniform = total <= 0.0
        cdf[0] = 0.0
        acc = 0.0
        for i in range(n_bins):
            acc += 1.0 if uniform else weights[r, i]
            cdf[i + 1] = acc
        for i in range(n_bins + 1):
            cdf[i] = cdf[i] / acc
        for k in range(m):
            v = u[r, k]
            # first bin whose upper cdf is > v
            lo = 0
            hi = n_bins - 1
            while lo < hi:
                mid = (lo + hi) // 2
                if cdf[mid + 1] > v:
                    hi = mid
                else:
                    lo = mid + 1
            b = lo
            width = cdf[b + 1] - cdf[b]
            f = (v - cdf[b]) / width if width > 0 else 0.0
            if f > 1.0:
                f = 1.0
            out[r, k] = edges[r, b] + f * (edges[r, b + 1] - edges[r, b])
    return out


def _sample_pdf_np(edges, weights, u):
    n_rays, n_bins = weights.shape
    total = weights.sum(axis=1)
    w = np.where((total <= 0)[:, None], 1.0, weights)
    cdf = np.zeros((n_rays, n_bins + 1))
    cdf[:, 1:] = np.cumsum(w, axis=1)
    cdf = cdf / cdf[:, -1:]
    b = np.empty(u.shape, dtype=np.int64)
    for r in range(n_rays):
        b[r] = np.searchsorted(cdf[r, 1:], u[r], side="right")
    b = np.minimum(b, n_bins - 1)
    c_lo = np.take_along_axis(cdf, b, axis=1)
    c_hi = np.take_along_axis(cdf, b + 1, axis=1)
    width = c_hi - c_lo
    with np.errstate(invalid="ignore", divide="ignore"):
        f = np.where(width > 0, (u - c_lo) / np.where(width > 0, width, 1.0), 0.0)
    f = np.minimum(f, 1.0)
    e_lo = np.take_along_axis(edges, b, axis=1)
    e_hi = np.take_along_axis(edges, b + 1, axis=1)
    return e_lo + f * (e_hi - e_lo)


# ---------------------------------------------------------------------------
# KD-tree: build (shared source, optionally compiled) and nearest queries


def _kd_build_py(points, leafsize):
    n = points.shape[0]
    max_nodes = 4 * (n // leafsize + 1) + 8
    perm = np.arange(n)
    start = np.zeros(max_nodes, dtype=np.int64)
    end = np.zeros(max_nodes, dtype=np.int64)
    dim = np.full(max_nodes, -1, dtype=np.int64)
    split = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    box_lo = np.zeros((max_nodes, 3))
    box_hi = np.zeros((max_nodes, 3))
    n_nodes = 1
    end[0] = n
    stack = np.zeros(max_nodes, dtype=np.int64)
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        s, e = start[node], end[node]
        sub = points[perm[s:e]]
        lo = np.empty(3)
        hi = np.empty(3)
        for a in range(3):
            lo[a] = sub[:, a].min()
            hi[a] = sub[:, a].max()
        box_lo[node] = lo
        box_hi[node] = hi
        if e - s <= leafsize:
            continue
        spread = hi - lo
        d = int(np.argmax(spread))
        if spread[d] <= 0.0:
            continue  # all points coincide
        order = np.argsort(sub[:, d], kind="mergesort")
        perm[s:e] = perm[s:e][order]
        mid = s + (e - s) // 2
        dim[node] = d
        split[node] = points[perm[mid], d]
        left[node] = n_nodes
        right[node] = n_nodes + 1
        start[n_nodes], end[n_nodes] = s, mid
        start[n_nodes + 1], end[n_nodes + 1] = mid, e
        stack[top] = n_nodes
        stack[top + 1] = n_nodes + 1
        top += 2
        n_nodes += 2
    return (perm, start[:n_nodes].copy(), end[:n_nodes].copy(), dim[:n_nodes].copy(),
            split[:n_nodes].copy(), left[:n_nodes].copy(), right[:n_nodes].copy(),
            box_lo[:n_nodes].copy(), box_hi[:n_nodes].copy())


_kd_build_nb = njit(_kd_build_py)


@njit
def _kd_query_nb(points, perm, start, end, dim, split, left, right, queries):
    nq = queries.shape[0]
    dist = np.empty(nq)
    index = np.empty(nq, dtype=np.int64)
    stack = np.empty(256, dtype=np.int64)
    bound = np.empty(256)
    for qi in range(nq):
        qx = queries[qi, 0]
        qy = queries[qi, 1]
        qz = queries[qi, 2]
        best = np.inf
        best_i = -1
        top = 0
        stack[0] = 0
        bound[0] = 0.0
        top = 1
        while top > 0:
            top -= 1
            node = stack[top]
            if bound[top] > best:
                continue
            if left[node] < 0:
                for k in range(start[node], end[node]):
                    j = perm[k]
                    dx = qx - points[j, 0]
                    dy = qy - points[j, 1]
                    dz = qz - points[j, 2]
                    d2 = dx * dx + dy * dy + dz * dz
                    if d2 < best or (d2 == best and j < best_i):
                        best = d2
                        best_i = j
                continue
            diff = queries[qi, dim[node]] - split[node]
            b = bound[top]
            far_b = diff * diff
            if far_b < b:
                far_b = b
            if diff < 0:
                near, far = left[node], right[node]
            else:
                near, far = right[node], left[node]
            stack[top] = far
            bound[top] = far_b
            stack[top + 1] = near
            bound[top + 1] = b
            top += 2
        dist[qi] = np.sqrt(best)
        index[qi] = best_i
    return dist, index


def _kd_query_np(points, perm, start, end, box_lo, box_hi, left, right, queries):
    """Breadth-first vectorised traversal over (query, node) pairs.

    A first pass descends every query to one leaf to seed its best distance;
    then all nodes whose bounding box intersects the current best ball are
    expanded level by level. Exact.
    """
    nq = queries.shape[0]
    best = np.full(nq, np.inf)
    best_i = np.full(nq, -1, dtype=np.int64)
    if nq == 0:
        return np.sqrt(best), best_i

    def scan(q_idx, nodes):
        if len(q_idx) == 0:
            return
        sizes = end[nodes] - start[nodes]
        width = int(sizes.max())
        offs = np.arange(width)
        k = start[nodes][:, None] + offs[None, :]
        valid = offs[None, :] < sizes[:, None]
        j = perm[np.where(valid, k, start[nodes][:, None])]
        d = queries[q_idx][:, None, :] - points[j]
        d2 = d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2]
        d2 = np.where(valid, d2, np.inf)
        qq = np.repeat(q_idx, width)
        d2 = d2.ravel()
        jj = np.where(valid, j, np.iinfo(np.int64).max).ravel()
        order = np.lexsort((jj, d2, qq))
        qq, d2, jj = qq[order], d2[order], jj[order]
        first = np.ones(len(qq), dtype=bool)
        first[1:] = qq[1:] != qq[:-1]
        qq, d2, jj = qq[first], d2[first], jj[first]
        better = (d2 < best[qq]) | ((d2 == best[qq]) & (jj < best_i[qq]))
        best[qq[better]] = d2[better]
        best_i[qq[better]] = jj[better]

    # seed: descend by nearest child box
    node = np.zeros(nq, dtype=np.int64)
    while True:
        internal = left[node] >= 0
        if not internal.any():
            break
        n_int = node[internal]
        q = queries[internal]
        dl = _box_dist2(q, box_lo[left[n_int]], box_hi[left[n_int]])
        dr = _box_dist2(q, box_lo[right[n_int]], box_hi[right[n_int]])
        node[internal] = np.where(dl <= dr, left[n_int], right[n_int])
    for lo in range(0, nq, 4096):
        sl = np.arange(lo, min(nq, lo + 4096))
        scan(sl, node[sl])

    q_idx = np.arange(nq)
    nodes = np.zeros(nq, dtype=np.int64)
    while len(q_idx):
        d2 = _box_dist2(queries[q_idx], box_lo[nodes], box_hi[nodes])
        keep = d2 <= best[q_idx]
        q_idx, nodes = q_idx[keep], nodes[keep]
        leaf = left[nodes] < 0
        lq, ln = q_idx[leaf], nodes[leaf]
        for lo in range(0, len(lq), 4096):
            scan(lq[lo:lo + 4096], ln[lo:lo + 4096])
        iq, inode = q_idx[~leaf], nodes[~leaf]
        q_idx = np.concatenate([iq, iq])
        nodes = np.concatenate([left[inode], right[inode]])
    return np.sqrt(best), best_i


def _box_dist2(q, lo, hi):
    d = np.maximum(lo - q, 0.0) + np.maximum(q - hi, 0.0)
    return d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2]


# ---------------------------------------------------------------------------
# dispatch


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def analytic_field(points, kinds, centers, axes, extents, sigmas, colors, background):
    args = (_f64(points).reshape(-1, 3), np.ascontiguousarray(kinds, dtype=np.int64), _f64(centers),
            _f64(axes), _f64(extents), _f64(sigmas), _f64(colors), _f64(background))
    if len(args[1]) == 0:
        n = args[0].shape[0]
        return np.zeros(n), np.tile(args[7], (n, 1))
    return (_analytic_nb if use_numba() else _analytic_np)(*args)


def trilinear(points, lo, hi, sigma_grid, color_grid, background):
    args = (_f64(points).reshape(-1, 3), _f64(lo), _f64(hi), _f64(sigma_grid), _f64(color_grid), _f64(background))
    return (_trilinear_nb if use_numba() else _trilinear_np)(*args)


def composite(sigma, rgb, t, t_far, background):
    """Returns ``(color (R,3), t_final (R,), weights (R,N))``."""
    args = (_f64(sigma), _f64(rgb), _f64(t), _f64(t_far), _f64(background))
    return (_composite_nb if use_numba() else _composite_np)(*args)


def sample_pdf(edges, weights, u):
    args = (_f64(edges), _f64(weights), _f64(u))
    return (_sample_pdf_nb if use_numba() else _sample_pdf_np)(*args)


def kd_build(points, leafsize):
    points = _f64(points).reshape(-1, 3)
    if points.shape[0] == 0:
        raise ValueError("kd_build needs at least one point")
    return (_kd_build_nb if use_numba() else _kd_build_py)(points, int(leafsize))
