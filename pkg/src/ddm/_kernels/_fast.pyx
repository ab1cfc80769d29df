# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the NumPy kernels.

The triangle arithmetic mirrors ``py_backend`` operation for operation
(the extension is compiled with -ffp-contract=off), so closest-point feet
are bitwise identical across backends.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()

ctypedef cnp.int64_t i64


cdef inline void _tri_foot(double qx, double qy, double qz,
                           double ax, double ay, double az,
                           double bx, double by, double bz,
                           double cx, double cy, double cz,
                           double* foot, double* bary) nogil:
    cdef double abx = bx - ax
    cdef double aby = by - ay
    cdef double abz = bz - az
    cdef double acx = cx - ax
    cdef double acy = cy - ay
    cdef double acz = cz - az
    cdef double apx = qx - ax
    cdef double apy = qy - ay
    cdef double apz = qz - az
    cdef double bpx = qx - bx
    cdef double bpy = qy - by
    cdef double bpz = qz - bz
    cdef double cpx = qx - cx
    cdef double cpy = qy - cy
    cdef double cpz = qz - cz

    cdef double d1 = abx * apx + aby * apy + abz * apz
    cdef double d2 = acx * apx + acy * apy + acz * apz
    cdef double d3 = abx * bpx + aby * bpy + abz * bpz
    cdef double d4 = acx * bpx + acy * bpy + acz * bpz
    cdef double d5 = abx * cpx + aby * cpy + abz * cpz
    cdef double d6 = acx * cpx + acy * cpy + acz * cpz

    cdef double vc = d1 * d4 - d3 * d2
    cdef double vb = d5 * d2 - d1 * d6
    cdef double va = d3 * d6 - d5 * d4

    cdef double crx = aby * acz - abz * acy
    cdef double cry = abz * acx - abx * acz
    cdef double crz = abx * acy - aby * acx
    cdef double cr2 = crx * crx + cry * cry + crz * crz

    cdef double v, w, den

    if cr2 == 0.0:
        _segment_foot(qx, qy, qz, ax, ay, az, bx, by, bz, cx, cy, cz, foot, bary)
        return
    if d1 <= 0.0 and d2 <= 0.0:
        foot[0] = ax; foot[1] = ay; foot[2] = az
        bary[0] = 1.0; bary[1] = 0.0; bary[2] = 0.0
        return
    if d3 >= 0.0 and d4 <= d3:
        foot[0] = bx; foot[1] = by; foot[2] = bz
        bary[0] = 0.0; bary[1] = 1.0; bary[2] = 0.0
        return
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        den = d1 - d3
        v = d1 / (1.0 if den == 0.0 else den)
        foot[0] = ax + v * abx; foot[1] = ay + v * aby; foot[2] = az + v * abz
        bary[0] = 1.0 - v; bary[1] = v; bary[2] = 0.0 * v
        return
    if d6 >= 0.0 and d5 <= d6:
        foot[0] = cx; foot[1] = cy; foot[2] = cz
        bary[0] = 0.0; bary[1] = 0.0; bary[2] = 1.0
        return
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        den = d2 - d6
        w = d2 / (1.0 if den == 0.0 else den)
        foot[0] = ax + w * acx; foot[1] = ay + w * acy; foot[2] = az + w * acz
        bary[0] = 1.0 - w; bary[1] = 0.0 * w; bary[2] = w
        return
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        den = (d4 - d3) + (d5 - d6)
        w = (d4 - d3) / (1.0 if den == 0.0 else den)
        foot[0] = bx + w * (cx - bx)
        foot[1] = by + w * (cy - by)
        foot[2] = bz + w * (cz - bz)
        bary[0] = 0.0 * w; bary[1] = 1.0 - w; bary[2] = w
        return
    den = va + vb + vc
    den = 1.0 / (1.0 if den == 0.0 else den)
    v = vb * den
    w = vc * den
    foot[0] = ax + abx * v + acx * w
    foot[1] = ay + aby * v + acy * w
    foot[2] = az + abz * v + acz * w
    bary[0] = 1.0 - v - w; bary[1] = v; bary[2] = w


cdef inline void _segment_foot(double qx, double qy, double qz,
                               double ax, double ay, double az,
                               double bx, double by, double bz,
                               double cx, double cy, double cz,
                               double* foot, double* bary) nogil:
    cdef double labx = bx - ax, laby = by - ay, labz = bz - az
    cdef double lacx = cx - ax, lacy = cy - ay, lacz = cz - az
    cdef double lbcx = cx - bx, lbcy = cy - by, lbcz = cz - bz
    cdef double lab = labx * labx + laby * laby + labz * labz
    cdef double lac = lacx * lacx + lacy * lacy + lacz * lacz
    cdef double lbc = lbcx * lbcx + lbcy * lbcy + lbcz * lbcz

    cdef bint use_ab = lab >= lac and lab >= lbc
    cdef bint use_ac = (not use_ab) and lac >= lbc
    cdef bint use_bc = (not use_ab) and (not use_ac)

    cdef double p0x, p0y, p0z, p1x, p1y, p1z
    if use_bc:
        p0x = bx; p0y = by; p0z = bz
    else:
        p0x = ax; p0y = ay; p0z = az
    if use_ab:
        p1x = bx; p1y = by; p1z = bz
    else:
        p1x = cx; p1y = cy; p1z = cz

    cdef double ex = p1x - p0x, ey = p1y - p0y, ez = p1z - p0z
    cdef double ee = ex * ex + ey * ey + ez * ez
    cdef double t = ((qx - p0x) * ex + (qy - p0y) * ey + (qz - p0z) * ez) / (
        1.0 if ee == 0.0 else ee)
    if ee == 0.0:
        t = 0.0
    else:
        if t < 0.0:
            t = 0.0
        if t > 1.0:
            t = 1.0
    foot[0] = p0x + t * ex
    foot[1] = p0y + t * ey
    foot[2] = p0z + t * ez
    bary[0] = 0.0; bary[1] = 0.0; bary[2] = 0.0
    if use_ab:
        bary[0] = 1.0 - t; bary[1] = t
    elif use_ac:
        bary[0] = 1.0 - t; bary[2] = t
    else:
        bary[1] = 1.0 - t; bary[2] = t


def closest_point_on_triangles(q, a, b, c):
    """Batch closest point on triangle i to query i; see the NumPy twin."""
    cdef double[:, ::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef double[:, ::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[:, ::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef double[:, ::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef Py_ssize_t n = qv.shape[0]
    foot = np.empty((n, 3), dtype=np.float64)
    bary = np.empty((n, 3), dtype=np.float64)
    cdef double[:, ::1] fv = foot
    cdef double[:, ::1] wv = bary
    cdef double fo[3]
    cdef double ba[3]
    cdef Py_ssize_t i
    for i in range(n):
        _tri_foot(qv[i, 0], qv[i, 1], qv[i, 2],
                  av[i, 0], av[i, 1], av[i, 2],
                  bv[i, 0], bv[i, 1], bv[i, 2],
                  cv[i, 0], cv[i, 1], cv[i, 2], fo, ba)
        fv[i, 0] = fo[0]; fv[i, 1] = fo[1]; fv[i, 2] = fo[2]
        wv[i, 0] = ba[0]; wv[i, 1] = ba[1]; wv[i, 2] = ba[2]
    return foot, bary


cdef inline double _box_d2(double qx, double qy, double qz,
                           const double* lo, const double* hi) nogil:
    cdef double d = 0.0
    cdef double t
    t = lo[0] - qx
    if t > 0.0:
        d += t * t
    t = qx - hi[0]
    if t > 0.0:
        d += t * t
    t = lo[1] - qy
    if t > 0.0:
        d += t * t
    t = qy - hi[1]
    if t > 0.0:
        d += t * t
    t = lo[2] - qz
    if t > 0.0:
        d += t * t
    t = qz - hi[2]
    if t > 0.0:
        d += t * t
    return d


def bvh_query(q, va, vb, vc, node_min, node_max, left, right, start, count, order):
    """Exact closest point on a mesh for each query row.

    Traverses the preorder BVH nearest-child-first; ties in squared distance
    resolve to the lowest face index.  Returns (dist2, foot, fid, bary).
    """
    cdef double[:, ::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef double[:, ::1] av = va
    cdef double[:, ::1] bv = vb
    cdef double[:, ::1] cv = vc
    cdef double[:, ::1] nmin = node_min
    cdef double[:, ::1] nmax = node_max
    cdef i64[::1] lv = left
    cdef i64[::1] rv = right
    cdef i64[::1] sv = start
    cdef i64[::1] ctv = count
    cdef i64[::1] ov = order

    cdef Py_ssize_t m = qv.shape[0]
    d2_out = np.empty(m, dtype=np.float64)
    foot_out = np.empty((m, 3), dtype=np.float64)
    fid_out = np.empty(m, dtype=np.int64)
    bary_out = np.empty((m, 3), dtype=np.float64)
    cdef double[::1] d2v = d2_out
    cdef double[:, ::1] fv = foot_out
    cdef i64[::1] idv = fid_out
    cdef double[:, ::1] bav = bary_out

    cdef i64 stack_id[128]
    cdef double stack_d2[128]
    cdef int top
    cdef i64 nid, fid, k, lc, rc
    cdef double nd2, dl, dr, best, dx, dy, dz, d2
    cdef double qx, qy, qz
    cdef double fo[3]
    cdef double ba[3]
    cdef double bfo[3]
    cdef double bba[3]
    cdef i64 bfid
    cdef Py_ssize_t i

    with nogil:
        for i in range(m):
            qx = qv[i, 0]; qy = qv[i, 1]; qz = qv[i, 2]
            best = INFINITY
            bfid = -1
            top = 0
            stack_id[top] = 0
            stack_d2[top] = _box_d2(qx, qy, qz, &nmin[0, 0], &nmax[0, 0])
            top = 1
            while top > 0:
                top -= 1
                nid = stack_id[top]
                nd2 = stack_d2[top]
                if nd2 > best:
                    continue
                if lv[nid] < 0:
                    for k in range(sv[nid], sv[nid] + ctv[nid]):
                        fid = ov[k]
                        _tri_foot(qx, qy, qz,
                                  av[fid, 0], av[fid, 1], av[fid, 2],
                                  bv[fid, 0], bv[fid, 1], bv[fid, 2],
                                  cv[fid, 0], cv[fid, 1], cv[fid, 2], fo, ba)
                        dx = qx - fo[0]; dy = qy - fo[1]; dz = qz - fo[2]
                        d2 = dx * dx + dy * dy + dz * dz
                        if d2 < best or (d2 == best and fid < bfid):
                            best = d2
                            bfid = fid
                            bfo[0] = fo[0]; bfo[1] = fo[1]; bfo[2] = fo[2]
                            bba[0] = ba[0]; bba[1] = ba[1]; bba[2] = ba[2]
                else:
                    lc = lv[nid]
                    rc = rv[nid]
                    dl = _box_d2(qx, qy, qz, &nmin[lc, 0], &nmax[lc, 0])
                    dr = _box_d2(qx, qy, qz, &nmin[rc, 0], &nmax[rc, 0])
                    if dl <= dr:
                        if dr <= best:
                            stack_id[top] = rc; stack_d2[top] = dr; top += 1
                        if dl <= best:
                            stack_id[top] = lc; stack_d2[top] = dl; top += 1
                    else:
                        if dl <= best:
                            stack_id[top] = lc; stack_d2[top] = dl; top += 1
                        if dr <= best:
                            stack_id[top] = rc; stack_d2[top] = dr; top += 1
            d2v[i] = best
            idv[i] = bfid
            fv[i, 0] = bfo[0]; fv[i, 1] = bfo[1]; fv[i, 2] = bfo[2]
            bav[i, 0] = bba[0]; bav[i, 1] = bba[1]; bav[i, 2] = bba[2]
    return d2_out, foot_out, fid_out, bary_out


def cloud_qhat_forward(queries, points, idx, double singular_eps):
    """Compiled twin of the NumPy weighted-average forward pass."""
    cdef double[:, ::1] qv = queries
    cdef double[:, ::1] pv = points
    cdef i64[:, ::1] iv = idx
    cdef Py_ssize_t m = qv.shape[0]
    cdef Py_ssize_t kk = iv.shape[1]

    qhat = np.empty((m, 3), dtype=np.float64)
    neighbors = np.empty((m, kk, 3), dtype=np.float64)
    w = np.empty((m, kk), dtype=np.float64)
    wsum = np.empty(m, dtype=np.float64)
    nearest_col = np.empty(m, dtype=np.int64)
    singular = np.zeros(m, dtype=bool)

    cdef double[:, ::1] qh = qhat
    cdef double[:, :, ::1] nb = neighbors
    cdef double[:, ::1] wv = w
    cdef double[::1] wsv = wsum
    cdef i64[::1] ncv = nearest_col
    cdef cnp.uint8_t[::1] sgv = singular.view(np.uint8)

    cdef double eps2 = singular_eps * singular_eps
    cdef Py_ssize_t i, j
    cdef i64 pj, jmin
    cdef double dx, dy, dz, d2, d2min, ws, ax, ay, az, wj

    with nogil:
        for i in range(m):
            jmin = 0
            d2min = INFINITY
            for j in range(kk):
                pj = iv[i, j]
                nb[i, j, 0] = pv[pj, 0]
                nb[i, j, 1] = pv[pj, 1]
                nb[i, j, 2] = pv[pj, 2]
                dx = qv[i, 0] - nb[i, j, 0]
                dy = qv[i, 1] - nb[i, j, 1]
                dz = qv[i, 2] - nb[i, j, 2]
                d2 = dx * dx + dy * dy + dz * dz
                if d2 < d2min:
                    d2min = d2
                    jmin = j
                wv[i, j] = 1.0 / (1.0 if d2 == 0.0 else d2)
            ncv[i] = jmin
            ws = 0.0
            ax = 0.0; ay = 0.0; az = 0.0
            for j in range(kk):
                wj = wv[i, j]
                ws += wj
                ax += wj * nb[i, j, 0]
                ay += wj * nb[i, j, 1]
                az += wj * nb[i, j, 2]
            wsv[i] = ws
            if d2min < eps2:
                sgv[i] = 1
                qh[i, 0] = nb[i, jmin, 0]
                qh[i, 1] = nb[i, jmin, 1]
                qh[i, 2] = nb[i, jmin, 2]
            else:
                qh[i, 0] = ax / ws
                qh[i, 1] = ay / ws
                qh[i, 2] = az / ws
    return qhat, neighbors, w, wsum, nearest_col, singular


def cloud_qhat_backward(queries, points, idx, neighbors, w, wsum, nearest_col,
                        singular, qhat, g_qhat):
    """Compiled twin of the NumPy weighted-average backward pass."""
    cdef double[:, ::1] qv = queries
    cdef double[:, ::1] pv = points
    cdef i64[:, ::1] iv = idx
    cdef double[:, :, ::1] nb = neighbors
    cdef double[:, ::1] wv = w
    cdef double[::1] wsv = wsum
    cdef i64[::1] ncv = nearest_col
    cdef cnp.uint8_t[::1] sgv = np.ascontiguousarray(singular).view(np.uint8)
    cdef double[:, ::1] qh = qhat
    cdef double[:, ::1] gq = np.ascontiguousarray(g_qhat, dtype=np.float64)

    out = np.zeros_like(points)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t m = qv.shape[0]
    cdef Py_ssize_t kk = iv.shape[1]
    cdef Py_ssize_t i, j
    cdef i64 pj
    cdef double c1, c2, dot, gx, gy, gz, wj

    with nogil:
        for i in range(m):
            gx = gq[i, 0]; gy = gq[i, 1]; gz = gq[i, 2]
            if sgv[i]:
                pj = iv[i, ncv[i]]
                ov[pj, 0] += gx
                ov[pj, 1] += gy
                ov[pj, 2] += gz
                continue
            for j in range(kk):
                pj = iv[i, j]
                wj = wv[i, j]
                c1 = wj / wsv[i]
                dot = ((nb[i, j, 0] - qh[i, 0]) * gx
                       + (nb[i, j, 1] - qh[i, 1]) * gy
                       + (nb[i, j, 2] - qh[i, 2]) * gz)
                c2 = (2.0 * wj * wj / wsv[i]) * dot
                ov[pj, 0] += c1 * gx + c2 * (qv[i, 0] - nb[i, j, 0])
                ov[pj, 1] += c1 * gy + c2 * (qv[i, 1] - nb[i, j, 1])
                ov[pj, 2] += c1 * gz + c2 * (qv[i, 2] - nb[i, j, 2])
    return out
