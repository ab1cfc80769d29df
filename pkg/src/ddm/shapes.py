"""Procedural shapes used by tests, benchmarks and the CLI demo paths."""

import numpy as np

from .errors import InvalidInputError
from .geometry import TriangleMesh

_ICO_T = (1.0 + np.sqrt(5.0)) / 2.0
_ICO_VERTS = np.array(
    [
        (-1, _ICO_T, 0), (1, _ICO_T, 0), (-1, -_ICO_T, 0), (1, -_ICO_T, 0),
        (0, -1, _ICO_T), (0, 1, _ICO_T), (0, -1, -_ICO_T), (0, 1, -_ICO_T),
        (_ICO_T, 0, -1), (_ICO_T, 0, 1), (-_ICO_T, 0, -1), (-_ICO_T, 0, 1),
    ],
    dtype=np.float64,
)
_ICO_FACES = np.array(
    [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ],
    dtype=np.int64,
)


def make_icosphere(subdivisions: int = 3, radius: float = 1.0) -> TriangleMesh:
    """Unit-centered sphere from a subdivided icosahedron (20 * 4^s faces)."""
    if subdivisions < 0:
        raise InvalidInputError("subdivisions must be >= 0")
    verts = [tuple(v) for v in _ICO_VERTS / np.linalg.norm(_ICO_VERTS, axis=1, keepdims=True)]
    faces = [tuple(f) for f in _ICO_FACES]
    for _ in range(subdivisions):
        cache = {}
        new_faces = []

        def midpoint(i, j):
            key = (i, j) if i < j else (j, i)
            if key not in cache:
                m = np.asarray(verts[i]) + np.asarray(verts[j])
                m /= np.linalg.norm(m)
                cache[key] = len(verts)
                verts.append(tuple(m))
            return cache[key]

        for i, j, k in faces:
            a = midpoint(i, j)
            b = midpoint(j, k)
            c = midpoint(k, i)
            new_faces += [(i, a, c), (j, b, a), (k, c, b), (a, b, c)]
        faces = new_faces
    v = np.asarray(verts) * radius
    return TriangleMesh(v, np.asarray(faces, dtype=np.int64))


def make_ellipsoid(radii, subdivisions: int = 3) -> TriangleMesh:
    """Axis-aligned ellipsoid: icosphere scaled per axis."""
    r = np.asarray(radii, dtype=np.float64)
    if r.shape != (3,) or (r <= 0).any():
        raise InvalidInputError("radii must be three positive numbers")
    sphere = make_icosphere(subdivisions)
    return TriangleMesh(sphere.vertices * r, sphere.faces)


def _grid_patch(origin, u, v, res):
    """(res+1)^2 grid points over origin + s*u + t*v and their triangles."""
    origin = np.asarray(origin, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    s = np.arange(res + 1) / res
    pts = origin + s[:, None, None] * u + s[None, :, None] * v
    idx = np.arange((res + 1) ** 2).reshape(res + 1, res + 1)
    f = []
    for i in range(res):
        for j in range(res):
            p00, p10 = idx[i, j], idx[i + 1, j]
            p01, p11 = idx[i, j + 1], idx[i + 1, j + 1]
            f.append((p00, p10, p11))
            f.append((p00, p11, p01))
    return pts.reshape(-1, 3), np.asarray(f, dtype=np.int64)


def make_cube(edge: float = 1.0, res: int = 4) -> TriangleMesh:
    """Closed, origin-centered cube surface with res^2 quads per side.

    Shared edge/corner vertices are welded; the weld relies on every side
    computing identical float coordinates for shared points.
    """
    if res < 1:
        raise InvalidInputError("res must be >= 1")
    h = edge / 2.0
    e = np.float64(edge)
    sides = [
        ((h, -h, -h), (0, e, 0), (0, 0, e)),
        ((-h, -h, -h), (0, 0, e), (0, e, 0)),
        ((-h, h, -h), (0, 0, e), (e, 0, 0)),
        ((-h, -h, -h), (e, 0, 0), (0, 0, e)),
        ((-h, -h, h), (e, 0, 0), (0, e, 0)),
        ((-h, -h, -h), (0, e, 0), (e, 0, 0)),
    ]
    all_pts = []
    all_faces = []
    offset = 0
    for origin, u, v in sides:
        pts, f = _grid_patch(origin, u, v, res)
        all_pts.append(pts)
        all_faces.append(f + offset)
        offset += len(pts)
    pts = np.concatenate(all_pts)
    faces = np.concatenate(all_faces)
    uniq, inverse = np.unique(pts, axis=0, return_inverse=True)
    return TriangleMesh(uniq, inverse[faces])


def make_grid_sheet(nx: int = 20, ny: int = 20, size=(1.0, 1.0)) -> TriangleMesh:
    """Open rectangular sheet in the z=0 plane with nx*ny quads."""
    if nx < 1 or ny < 1:
        raise InvalidInputError("grid resolution must be >= 1")
    sx, sy = float(size[0]), float(size[1])
    xs = np.linspace(-sx / 2.0, sx / 2.0, nx + 1)
    ys = np.linspace(-sy / 2.0, sy / 2.0, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)], axis=1)
    idx = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
    f = []
    for i in range(nx):
        for j in range(ny):
            p00, p10 = idx[i, j], idx[i + 1, j]
            p01, p11 = idx[i, j + 1], idx[i + 1, j + 1]
            f.append((p00, p10, p11))
            f.append((p00, p11, p01))
    return TriangleMesh(pts, np.asarray(f, dtype=np.int64))
