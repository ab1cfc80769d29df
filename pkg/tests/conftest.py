"""Shared fixtures and independent oracles used across the test suite.

Oracles here deliberately use different formulations than the library
(loops, least squares, graph enumeration) so agreement is evidence, not
circularity.
"""

import numpy as np
import pytest

from ddm.geometry import PointCloud, TriangleMesh


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def fd_grad(fn, x, h=1e-6):
    """Central-difference gradient of a scalar function over a flat vector."""
    x = np.asarray(x, dtype=np.float64).ravel()
    g = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (fn(xp) - fn(xm)) / (2.0 * h)
    return g


def rel_err(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


# ---------------------------------------------------------------------------
# cloud oracles


def brute_knn(points, q, k):
    """Indices of the k nearest points, ties broken by lowest index."""
    d2 = ((points - q) ** 2).sum(axis=1)
    order = np.lexsort((np.arange(len(points)), d2))
    return order[:k]


def brute_cloud_qhat(points, q, k, eps=1e-12):
    """Inverse-square-distance weighted neighborhood mean, loop form."""
    idx = brute_knn(points, q, k)
    neigh = points[idx]
    d2 = ((neigh - q) ** 2).sum(axis=1)
    j = int(np.argmin(d2))
    if d2[j] < eps * eps:
        return neigh[j].copy()
    w = 1.0 / d2
    return (w[:, None] * neigh).sum(axis=0) / w.sum()


# ---------------------------------------------------------------------------
# triangle / mesh oracles


def oracle_tri_foot(q, a, b, c):
    """Closest point on a triangle by candidate enumeration.

    Checks the three vertices, the three clamped edge projections, and
    the interior normal-equations solution; independent of the region
    classification the library uses.
    """
    q = np.asarray(q, dtype=np.float64)
    cands = [np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64),
             np.asarray(c, dtype=np.float64)]
    for p, e in ((cands[0], cands[1] - cands[0]),
                 (cands[0], cands[2] - cands[0]),
                 (cands[1], cands[2] - cands[1])):
        ee = float(e @ e)
        if ee > 0.0:
            t = min(1.0, max(0.0, float((q - p) @ e) / ee))
            cands.append(p + t * e)
    m = np.stack([cands[1] - cands[0], cands[2] - cands[0]], axis=1)
    g = m.T @ m
    if np.linalg.matrix_rank(g) == 2:
        uv = np.linalg.solve(g, m.T @ (q - cands[0]))
        if uv[0] >= 0.0 and uv[1] >= 0.0 and uv.sum() <= 1.0:
            cands.append(cands[0] + m @ uv)
    d2 = [float((q - p) @ (q - p)) for p in cands]
    return cands[int(np.argmin(d2))]


def brute_mesh_closest(mesh, q):
    """(d2, fid, foot) over all faces, lowest face index wins ties."""
    v, f = mesh.vertices, mesh.faces
    best = (np.inf, -1, None)
    for fid in range(len(f)):
        a, b, c = v[f[fid, 0]], v[f[fid, 1]], v[f[fid, 2]]
        foot = oracle_tri_foot(q, a, b, c)
        d2 = float((q - foot) @ (q - foot))
        if d2 < best[0] - 1e-15:
            best = (d2, fid, foot)
    return best


# ---------------------------------------------------------------------------
# instance builders


def triangle_soup(rng, n_faces, scale=1.0):
    """Disconnected random triangles; exercises mesh code without topology."""
    pts = rng.normal(scale=scale, size=(3 * n_faces, 3))
    faces = np.arange(3 * n_faces, dtype=np.int64).reshape(n_faces, 3)
    return TriangleMesh(pts, faces)


def separated_cloud(rng, n, k, n_queries, gap=1e-3):
    """Cloud plus queries whose K-NN sets are stable under 1e-6 nudges.

    Guarantees the gap between the k-th and (k+1)-th neighbor distance
    and keeps every query strictly off the points, so finite differences
    never cross a neighbor-set or singularity boundary.
    """
    while True:
        pts = rng.normal(size=(n, 3))
        queries = rng.normal(scale=0.8, size=(n_queries, 3))
        d2 = ((queries[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        d2.sort(axis=1)
        d = np.sqrt(d2)
        if (d[:, k] - d[:, k - 1]).min() > gap and d[:, 0].min() > 1e-2:
            return pts, queries


def tetrahedron():
    vertices = np.array(
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    )
    faces = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]], dtype=np.int64)
    return TriangleMesh(vertices, faces)


def random_rotation(rng, max_angle=np.pi):
    from ddm.rotation import so3_exp

    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return so3_exp(axis * rng.uniform(0.0, max_angle))
