"""NumPy implementations of the hot kernels.

Every routine here has a compiled twin in ``_fast.pyx``.  The per-triangle
arithmetic is written with explicit component expressions (no reductions) in
exactly the order the compiled code uses, so the two backends agree bitwise
on closest-point feet; the weighted-average kernels agree to rounding.
"""

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "closest_point_on_triangles",
    "cloud_qhat_forward",
    "cloud_qhat_backward",
    "PyMeshAccel",
]


def _masked_put(dst, mask, src):
    for k in range(dst.shape[1]):
        dst[mask, k] = src[k] if np.ndim(src[k]) == 0 else src[k][mask]


def closest_point_on_triangles(q, a, b, c):
    """Closest point on triangle (a[i], b[i], c[i]) to q[i], elementwise.

    Returns (foot, bary) with shapes (M, 3).  Triangles whose cross product
    is exactly zero are treated as segments (longest edge) or points.
    """
    q = np.asarray(q, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)

    abx = b[:, 0] - a[:, 0]
    aby = b[:, 1] - a[:, 1]
    abz = b[:, 2] - a[:, 2]
    acx = c[:, 0] - a[:, 0]
    acy = c[:, 1] - a[:, 1]
    acz = c[:, 2] - a[:, 2]
    apx = q[:, 0] - a[:, 0]
    apy = q[:, 1] - a[:, 1]
    apz = q[:, 2] - a[:, 2]
    bpx = q[:, 0] - b[:, 0]
    bpy = q[:, 1] - b[:, 1]
    bpz = q[:, 2] - b[:, 2]
    cpx = q[:, 0] - c[:, 0]
    cpy = q[:, 1] - c[:, 1]
    cpz = q[:, 2] - c[:, 2]

    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz

    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    crx = aby * acz - abz * acy
    cry = abz * acx - abx * acz
    crz = abx * acy - aby * acx
    cr2 = crx * crx + cry * cry + crz * crz

    def safe_div(num, den):
        return num / np.where(den == 0.0, 1.0, den)

    m1 = (d1 <= 0.0) & (d2 <= 0.0)
    m2 = (d3 >= 0.0) & (d4 <= d3)
    m3 = (vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0)
    m4 = (d6 >= 0.0) & (d5 <= d6)
    m5 = (vb <= 0.0) & (d2 >= 0.0) & (d6 <= 0.0)
    m6 = (va <= 0.0) & ((d4 - d3) >= 0.0) & ((d5 - d6) >= 0.0)

    n = q.shape[0]
    # assign in descending priority so the first matching region wins,
    # matching the compiled if/else chain
    region = np.full(n, 7, dtype=np.int64)
    region[m6] = 6
    region[m5] = 5
    region[m4] = 4
    region[m3] = 3
    region[m2] = 2
    region[m1] = 1
    region[cr2 == 0.0] = 0

    foot = np.empty((n, 3), dtype=np.float64)
    bary = np.empty((n, 3), dtype=np.float64)

    m = region == 1
    if m.any():
        _masked_put(foot, m, (a[:, 0], a[:, 1], a[:, 2]))
        _masked_put(bary, m, (1.0, 0.0, 0.0))
    m = region == 2
    if m.any():
        _masked_put(foot, m, (b[:, 0], b[:, 1], b[:, 2]))
        _masked_put(bary, m, (0.0, 1.0, 0.0))
    m = region == 3
    if m.any():
        v = safe_div(d1, d1 - d3)
        _masked_put(foot, m, (a[:, 0] + v * abx, a[:, 1] + v * aby, a[:, 2] + v * abz))
        _masked_put(bary, m, (1.0 - v, v, 0.0 * v))
    m = region == 4
    if m.any():
        _masked_put(foot, m, (c[:, 0], c[:, 1], c[:, 2]))
        _masked_put(bary, m, (0.0, 0.0, 1.0))
    m = region == 5
    if m.any():
        w = safe_div(d2, d2 - d6)
        _masked_put(foot, m, (a[:, 0] + w * acx, a[:, 1] + w * acy, a[:, 2] + w * acz))
        _masked_put(bary, m, (1.0 - w, 0.0 * w, w))
    m = region == 6
    if m.any():
        w = safe_div(d4 - d3, (d4 - d3) + (d5 - d6))
        _masked_put(
            foot,
            m,
            (
                b[:, 0] + w * (c[:, 0] - b[:, 0]),
                b[:, 1] + w * (c[:, 1] - b[:, 1]),
                b[:, 2] + w * (c[:, 2] - b[:, 2]),
            ),
        )
        _masked_put(bary, m, (0.0 * w, 1.0 - w, w))
    m = region == 7
    if m.any():
        denom = safe_div(1.0, va + vb + vc)
        v = vb * denom
        w = vc * denom
        _masked_put(
            foot,
            m,
            (
                a[:, 0] + abx * v + acx * w,
                a[:, 1] + aby * v + acy * w,
                a[:, 2] + abz * v + acz * w,
            ),
        )
        _masked_put(bary, m, (1.0 - v - w, v, w))

    m = region == 0
    if m.any():
        _degenerate_feet(q[m], a[m], b[m], c[m], foot, bary, m)
    return foot, bary


def _degenerate_feet(q, a, b, c, foot, bary, mask):
    """Segment/point fallback for exactly zero-area triangles.

    Picks the endpoint pair with the largest squared separation (preferring
    (a,b), then (a,c), then (b,c) on ties) and projects onto that segment.
    The third barycentric weight is zero.
    """
    dab = b - a
    dac = c - a
    dbc = c - b
    lab = dab[:, 0] ** 2 + dab[:, 1] ** 2 + dab[:, 2] ** 2
    lac = dac[:, 0] ** 2 + dac[:, 1] ** 2 + dac[:, 2] ** 2
    lbc = dbc[:, 0] ** 2 + dbc[:, 1] ** 2 + dbc[:, 2] ** 2

    use_ab = (lab >= lac) & (lab >= lbc)
    use_ac = ~use_ab & (lac >= lbc)
    use_bc = ~use_ab & ~use_ac

    p0 = np.where(use_bc[:, None], b, a)
    p1 = np.where(use_ab[:, None], b, c)
    e = p1 - p0
    ee = e[:, 0] ** 2 + e[:, 1] ** 2 + e[:, 2] ** 2
    qp = q - p0
    t = (qp[:, 0] * e[:, 0] + qp[:, 1] * e[:, 1] + qp[:, 2] * e[:, 2]) / np.where(
        ee == 0.0, 1.0, ee
    )
    t = np.where(ee == 0.0, 0.0, np.minimum(1.0, np.maximum(0.0, t)))
    f = p0 + t[:, None] * e

    w = np.zeros((q.shape[0], 3), dtype=np.float64)
    w[use_ab, 0] = 1.0 - t[use_ab]
    w[use_ab, 1] = t[use_ab]
    w[use_ac, 0] = 1.0 - t[use_ac]
    w[use_ac, 2] = t[use_ac]
    w[use_bc, 1] = 1.0 - t[use_bc]
    w[use_bc, 2] = t[use_bc]

    foot[mask] = f
    bary[mask] = w


def cloud_qhat_forward(queries, points, idx, singular_eps):
    """Inverse-square-distance weighted neighborhood average.

    queries (M,3), points (N,3), idx (M,K) row-wise neighbor indices.
    Returns (qhat, neighbors, w, wsum, nearest_col, singular) where
    ``singular`` marks rows whose nearest neighbor is closer than
    ``singular_eps``; those rows snap to that neighbor exactly.
    """
    neighbors = points[idx]
    d = queries[:, None, :] - neighbors
    d2 = d[:, :, 0] ** 2 + d[:, :, 1] ** 2 + d[:, :, 2] ** 2
    nearest_col = np.argmin(d2, axis=1)
    rows = np.arange(d2.shape[0])
    singular = d2[rows, nearest_col] < singular_eps * singular_eps
    w = 1.0 / np.where(d2 == 0.0, 1.0, d2)
    wsum = np.sum(w, axis=1)
    qhat = np.sum(w[:, :, None] * neighbors, axis=1) / wsum[:, None]
    if singular.any():
        qhat[singular] = neighbors[rows[singular], nearest_col[singular]]
    return qhat, neighbors, w, wsum, nearest_col, singular


def cloud_qhat_backward(
    queries, points, idx, neighbors, w, wsum, nearest_col, singular, qhat, g_qhat
):
    """Accumulate dL/dpoints given dL/dqhat.

    Uses dL/dp_j = (w_j/W) g + (2 w_j^2/W) [(p_j - qhat) . g] (q - p_j);
    singular rows route the full gradient to the snapped neighbor.
    """
    coef1 = w / wsum[:, None]
    pq = neighbors - qhat[:, None, :]
    dot = (
        pq[:, :, 0] * g_qhat[:, None, 0]
        + pq[:, :, 1] * g_qhat[:, None, 1]
        + pq[:, :, 2] * g_qhat[:, None, 2]
    )
    coef2 = (2.0 * w * w / wsum[:, None]) * dot
    contrib = coef1[:, :, None] * g_qhat[:, None, :] + coef2[:, :, None] * (
        queries[:, None, :] - neighbors
    )
    if singular.any():
        contrib[singular] = 0.0
        rows = np.nonzero(singular)[0]
        contrib[rows, nearest_col[rows]] = g_qhat[rows]
    out = np.zeros_like(points)
    np.add.at(out, idx, contrib)
    return out


class PyMeshAccel:
    """Exact mesh closest-point queries without the compiled traversal.

    Strategy: the nearest referenced vertex gives an upper bound on the
    closest-foot distance; every face whose centroid ball could beat that
    bound is tested exactly.  The candidate radius is inflated slightly so
    boundary ties survive floating-point rounding.
    """

    def __init__(self, vertices, faces):
        self.faces = faces
        self.update(vertices)

    def update(self, vertices):
        self.vertices = vertices
        f = self.faces
        self.va = vertices[f[:, 0]]
        self.vb = vertices[f[:, 1]]
        self.vc = vertices[f[:, 2]]
        used = np.unique(f)
        self._vtree = cKDTree(vertices[used])
        cent = (self.va + self.vb + self.vc) / 3.0
        r2 = np.maximum(
            ((self.va - cent) ** 2).sum(axis=1),
            np.maximum(
                ((self.vb - cent) ** 2).sum(axis=1), ((self.vc - cent) ** 2).sum(axis=1)
            ),
        )
        self._rmax = float(np.sqrt(r2.max())) if len(f) else 0.0
        self._ctree = cKDTree(cent)

    def query(self, q, workers=1):
        """Return (dist2, foot, fid, bary) of the exact closest mesh point.

        Ties in distance resolve to the lowest face index, matching the
        compiled traversal and the brute-force oracle.
        """
        q = np.asarray(q, dtype=np.float64)
        ub, _ = self._vtree.query(q, k=1, workers=workers)
        radius = (ub + self._rmax) * (1.0 + 1e-9) + 1e-300
        cand = self._ctree.query_ball_point(q, radius, workers=workers)
        counts = np.fromiter((len(c) for c in cand), dtype=np.int64, count=len(cand))
        qi = np.repeat(np.arange(len(q)), counts)
        fi = np.concatenate(cand) if len(cand) else np.empty(0, np.int64)
        fi = np.asarray(fi, dtype=np.int64)

        foot_c, bary_c = closest_point_on_triangles(
            q[qi], self.va[fi], self.vb[fi], self.vc[fi]
        )
        d = q[qi] - foot_c
        d2 = d[:, 0] ** 2 + d[:, 1] ** 2 + d[:, 2] ** 2

        # first row per query after (query, distance, face) ordering
        order = np.lexsort((fi, d2, qi))
        qi_s = qi[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = qi_s[1:] != qi_s[:-1]
        sel = order[first]

        fid = fi[sel]
        return d2[sel], foot_c[sel], fid, bary_c[sel]
