"""Surface containers, spatial indices, closest-point queries and sampling.

Closest-point and K-NN results are exact: they match a brute-force scan
including tie-breaking (lowest index wins at equal distance).
"""

from __future__ import annotations

import dataclasses
from functools import cached_property
from typing import Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from . import _kernels
from ._kernels import py_backend
from .errors import InvalidInputError

_LEAF_SIZE = 8


def as_points(x, name="points"):
    """Validate and return an (N, 3) float64 C-contiguous array."""
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != 3:
        raise InvalidInputError(f"{name} must have shape (N, 3), got {np.shape(x)}")
    if not np.isfinite(a).all():
        raise InvalidInputError(f"{name} contains non-finite coordinates")
    return a


@dataclasses.dataclass(eq=False)
class PointCloud:
    """Unordered set of 3D points.

    Attributes:
        points: (N, 3) float array, N >= 1, all coordinates finite.
    """

    points: np.ndarray

    def __post_init__(self):
        self.points = as_points(self.points)
        if self.points.shape[0] < 1:
            raise InvalidInputError("point cloud must contain at least one point")

    @property
    def n(self) -> int:
        return self.points.shape[0]


@dataclasses.dataclass(eq=False)
class TriangleMesh:
    """Triangle mesh with (V, 3) vertices and (F, 3) vertex-index faces.

    Face indices must be in range and distinct within a face; geometrically
    degenerate faces (collinear or coincident vertices) are allowed.
    """

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        self.vertices = as_points(self.vertices, "vertices")
        f = np.ascontiguousarray(self.faces, dtype=np.int64)
        if f.ndim != 2 or f.shape[1] != 3:
            raise InvalidInputError("faces must have shape (F, 3)")
        if f.size:
            if f.min() < 0 or f.max() >= self.vertices.shape[0]:
                raise InvalidInputError("face index out of range")
            if ((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])).any():
                raise InvalidInputError("face repeats a vertex index")
        self.faces = f

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    def corners(self):
        v, f = self.vertices, self.faces
        return v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]

    @cached_property
    def face_areas(self) -> np.ndarray:
        a, b, c = self.corners()
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    @cached_property
    def face_normals(self) -> np.ndarray:
        """Unit face normals; exactly degenerate faces get a zero vector."""
        a, b, c = self.corners()
        n = np.cross(b - a, c - a)
        ln = np.linalg.norm(n, axis=1)
        return n / np.where(ln == 0.0, 1.0, ln)[:, None]

    @cached_property
    def unique_edges(self) -> np.ndarray:
        """(E, 2) sorted vertex-index pairs, each undirected edge once."""
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    @cached_property
    def mean_edge_length(self) -> float:
        e = self.unique_edges
        if len(e) == 0:
            raise InvalidInputError("mesh has no edges")
        return float(
            np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1).mean()
        )

    @cached_property
    def edge_graph(self) -> csr_matrix:
        """Symmetric sparse matrix of Euclidean edge lengths."""
        e = self.unique_edges
        lengths = np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)
        n = self.n_vertices
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        return csr_matrix((np.concatenate([lengths, lengths]), (rows, cols)), shape=(n, n))

    def with_vertices(self, vertices) -> "TriangleMesh":
        """Same topology, new vertex positions."""
        return TriangleMesh(vertices, self.faces)


Surface = Union[PointCloud, TriangleMesh]


@dataclasses.dataclass
class BarycentricFoot:
    """Closest point on a mesh expressed in a face's barycentric frame."""

    face_index: int
    weights: tuple
    point: np.ndarray


class CloudIndex:
    """K-NN index over a point cloud with exact (distance, index) ordering."""

    def __init__(self, cloud: PointCloud):
        if isinstance(cloud, np.ndarray):
            cloud = PointCloud(cloud)
        self.cloud = cloud
        self.points = cloud.points
        self.tree = cKDTree(self.points)

    def knn(self, queries, k: int, workers: int = 1):
        """K nearest neighbors of each query row.

        Returns (dist, idx), both (M, k), rows sorted ascending by
        (distance, point index).  Distance ties at the K-th place are
        resolved by widening the candidate set so the index order is exact.
        """
        q = as_points(np.atleast_2d(np.asarray(queries, dtype=np.float64)), "queries")
        n = self.points.shape[0]
        if not 1 <= k <= n:
            raise InvalidInputError(f"k must be in [1, {n}], got {k}")
        kq = min(k + 1, n)
        _, idx = self.tree.query(q, k=kq, workers=workers)
        idx = np.atleast_2d(idx)
        d2 = _sq_dists(q[:, None, :], self.points[idx])
        order = np.lexsort((idx, d2), axis=-1)
        rows = np.arange(len(q))[:, None]
        d2 = d2[rows, order]
        idx = idx[rows, order]

        if kq > k:
            tied = np.nonzero(d2[:, k] == d2[:, k - 1])[0]
            for r in tied:
                boundary = d2[r, k - 1]
                radius = np.sqrt(boundary) * (1.0 + 1e-9) + 1e-300
                cand = np.asarray(self.tree.query_ball_point(q[r], radius), dtype=np.int64)
                cd2 = _sq_dists(q[r], self.points[cand])
                keep = cd2 <= boundary
                cand, cd2 = cand[keep], cd2[keep]
                o = np.lexsort((cand, cd2))[:k]
                d2[r, :k] = cd2[o]
                idx[r, :k] = cand[o]
            d2 = d2[:, :k]
            idx = idx[:, :k]
        # slicing above can leave a non-contiguous view; kernels need C order
        return np.sqrt(d2), np.ascontiguousarray(idx, dtype=np.int64)


def _sq_dists(a, b):
    d = a - b
    return d[..., 0] ** 2 + d[..., 1] ** 2 + d[..., 2] ** 2


def closest_point_on_triangle(q, v1, v2, v3) -> BarycentricFoot:
    """Exact closest point on a single (possibly degenerate) triangle."""
    foot, bary = py_backend.closest_point_on_triangles(
        np.asarray(q, dtype=np.float64)[None, :],
        np.asarray(v1, dtype=np.float64)[None, :],
        np.asarray(v2, dtype=np.float64)[None, :],
        np.asarray(v3, dtype=np.float64)[None, :],
    )
    return BarycentricFoot(-1, tuple(bary[0]), foot[0])


@dataclasses.dataclass(eq=False)
class _Bvh:
    node_min: np.ndarray
    node_max: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray
    order: np.ndarray
    _leaf_ids: np.ndarray = None
    _internal_ids: np.ndarray = None

    def __post_init__(self):
        self._leaf_ids = np.nonzero(self.left < 0)[0]
        self._internal_ids = np.nonzero(self.left >= 0)[0]

    def refit(self, va, vb, vc):
        """Recompute node boxes bottom-up for moved vertices (fixed topology)."""
        tri_min = np.minimum(np.minimum(va, vb), vc)[self.order]
        tri_max = np.maximum(np.maximum(va, vb), vc)[self.order]
        starts = self.start[self._leaf_ids]
        self.node_min[self._leaf_ids] = np.minimum.reduceat(tri_min, starts)
        self.node_max[self._leaf_ids] = np.maximum.reduceat(tri_max, starts)
        nm, nx, lf, rt = self.node_min, self.node_max, self.left, self.right
        for i in self._internal_ids[::-1]:
            l, r = lf[i], rt[i]
            np.minimum(nm[l], nm[r], out=nm[i])
            np.maximum(nx[l], nx[r], out=nx[i])


def build_bvh(va, vb, vc, leaf_size=_LEAF_SIZE) -> _Bvh:
    """Median-split BVH in preorder layout (every parent index < children)."""
    f = va.shape[0]
    tri_min = np.minimum(np.minimum(va, vb), vc)
    tri_max = np.maximum(np.maximum(va, vb), vc)
    cent = 0.5 * (tri_min + tri_max)

    order = np.arange(f, dtype=np.int64)
    nmax = max(1, 2 * f)
    left = np.full(nmax, -1, dtype=np.int64)
    right = np.full(nmax, -1, dtype=np.int64)
    start = np.zeros(nmax, dtype=np.int64)
    count = np.zeros(nmax, dtype=np.int64)

    n_nodes = 0
    stack = [(0, f, -1, False)]
    while stack:
        lo, cnt, parent, is_right = stack.pop()
        me = n_nodes
        n_nodes += 1
        if parent >= 0:
            (right if is_right else left)[parent] = me
        if cnt <= leaf_size:
            start[me] = lo
            count[me] = cnt
            continue
        seg = order[lo : lo + cnt]
        c = cent[seg]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        seg_sorted = seg[np.argsort(c[:, axis], kind="stable")]
        order[lo : lo + cnt] = seg_sorted
        half = cnt // 2
        left[me] = -2  # provisional: marks internal before children exist
        stack.append((lo + half, cnt - half, me, True))
        stack.append((lo, half, me, False))

    bvh = _Bvh(
        node_min=np.empty((n_nodes, 3)),
        node_max=np.empty((n_nodes, 3)),
        left=left[:n_nodes].copy(),
        right=right[:n_nodes].copy(),
        start=start[:n_nodes].copy(),
        count=count[:n_nodes].copy(),
        order=order,
    )
    bvh.refit(va, vb, vc)
    return bvh


class MeshIndex:
    """Closest-point-on-mesh queries, backend-accelerated.

    The compiled backend traverses a BVH; the fallback tests every face that
    a nearest-vertex bound cannot exclude.  Both return the brute-force
    answer exactly, ties going to the lowest face index.
    """

    def __init__(self, mesh: TriangleMesh, backend=None):
        if mesh.n_faces == 0:
            raise InvalidInputError("mesh closest-point query needs at least one face")
        self.mesh = mesh
        self.faces = mesh.faces
        self.backend = _kernels.resolve(backend)
        self._set_vertices(mesh.vertices, rebuild=True)

    def _set_vertices(self, vertices, rebuild):
        self.vertices = vertices
        f = self.faces
        self.va = np.ascontiguousarray(vertices[f[:, 0]])
        self.vb = np.ascontiguousarray(vertices[f[:, 1]])
        self.vc = np.ascontiguousarray(vertices[f[:, 2]])
        if self.backend == "compiled":
            if rebuild:
                self._bvh = build_bvh(self.va, self.vb, self.vc)
            else:
                self._bvh.refit(self.va, self.vb, self.vc)
        else:
            if rebuild:
                self._accel = py_backend.PyMeshAccel(vertices, f)
            else:
                self._accel.update(vertices)

    def refit(self, vertices):
        """Move vertices, keeping topology; boxes are refit, not rebuilt."""
        vertices = as_points(vertices, "vertices")
        if vertices.shape != self.vertices.shape:
            raise InvalidInputError("refit vertices must match the original shape")
        self.mesh = self.mesh.with_vertices(vertices)
        self._set_vertices(self.mesh.vertices, rebuild=False)

    def query(self, queries, workers: int = 1):
        """Exact closest mesh points.

        Returns (dist, foot, fid, bary) with shapes (M,), (M,3), (M,), (M,3).
        """
        q = as_points(np.atleast_2d(np.asarray(queries, dtype=np.float64)), "queries")
        if self.backend == "compiled":
            d2, foot, fid, bary = _kernels.fast.bvh_query(
                q,
                self.va,
                self.vb,
                self.vc,
                self._bvh.node_min,
                self._bvh.node_max,
                self._bvh.left,
                self._bvh.right,
                self._bvh.start,
                self._bvh.count,
                self._bvh.order,
            )
        else:
            d2, foot, fid, bary = self._accel.query(q, workers=workers)
        return np.sqrt(d2), foot, fid, bary


def build_index(surface: Surface):
    """Spatial index for a surface: CloudIndex or MeshIndex."""
    if isinstance(surface, PointCloud):
        return CloudIndex(surface)
    if isinstance(surface, TriangleMesh):
        return MeshIndex(surface)
    raise InvalidInputError(f"not a surface: {type(surface).__name__}")


def closest_point_on_mesh(mesh, q) -> BarycentricFoot:
    """Single-query convenience wrapper returning a BarycentricFoot.

    Accepts a TriangleMesh or a prebuilt MeshIndex.
    """
    index = mesh if isinstance(mesh, MeshIndex) else MeshIndex(mesh)
    _, foot, fid, bary = index.query(np.asarray(q, dtype=np.float64)[None, :])
    return BarycentricFoot(int(fid[0]), tuple(bary[0]), foot[0])


@dataclasses.dataclass
class SurfaceSamples:
    """Points sampled on a mesh plus where they came from."""

    points: np.ndarray
    face_index: np.ndarray
    bary: np.ndarray


def sample_surface(mesh: TriangleMesh, n: int, rng: np.random.Generator) -> SurfaceSamples:
    """n area-weighted samples with uniform barycentric placement."""
    if n < 1:
        raise InvalidInputError("sample count must be positive")
    areas = mesh.face_areas
    total = areas.sum()
    if not total > 0.0:
        raise InvalidInputError("mesh has zero surface area")
    fid = rng.choice(mesh.n_faces, size=n, p=areas / total)
    uv = rng.random((n, 2))
    s = np.sqrt(uv[:, 0])
    w0 = 1.0 - s
    w1 = s * (1.0 - uv[:, 1])
    w2 = s * uv[:, 1]
    v, f = mesh.vertices, mesh.faces
    pts = (
        w0[:, None] * v[f[fid, 0]]
        + w1[:, None] * v[f[fid, 1]]
        + w2[:, None] * v[f[fid, 2]]
    )
    return SurfaceSamples(pts, fid.astype(np.int64), np.stack([w0, w1, w2], axis=1))


def sample_points_on_mesh(mesh: TriangleMesh, n: int, rng: np.random.Generator) -> PointCloud:
    return PointCloud(sample_surface(mesh, n, rng).points)


def geodesic_distance_matrix(mesh: TriangleMesh, sources, cutoff=np.inf) -> np.ndarray:
    """Edge-graph shortest-path distances from each source vertex.

    Returns (S, V) distances with inf beyond the cutoff.  This is the
    graph approximation of surface geodesics used for node construction.
    """
    sources = np.atleast_1d(np.asarray(sources, dtype=np.int64))
    if sources.size and (sources.min() < 0 or sources.max() >= mesh.n_vertices):
        raise InvalidInputError("source vertex out of range")
    d = dijkstra(mesh.edge_graph, directed=False, indices=sources, limit=cutoff)
    return np.atleast_2d(d)


def geodesic_distances(mesh: TriangleMesh, source_vertex: int, cutoff=np.inf) -> dict:
    """Map vertex -> distance for vertices within cutoff of the source."""
    d = geodesic_distance_matrix(mesh, [source_vertex], cutoff)[0]
    hit = np.nonzero(np.isfinite(d))[0]
    return {int(i): float(d[i]) for i in hit}


def vertex_mean_incident_edge_length(vertices, edges) -> np.ndarray:
    """Per-vertex mean length of incident edges; isolated vertices get 0."""
    lengths = np.linalg.norm(vertices[edges[:, 0]] - vertices[edges[:, 1]], axis=1)
    n = vertices.shape[0]
    sums = np.zeros(n)
    counts = np.zeros(n)
    np.add.at(sums, edges[:, 0], lengths)
    np.add.at(sums, edges[:, 1], lengths)
    np.add.at(counts, edges[:, 0], 1.0)
    np.add.at(counts, edges[:, 1], 1.0)
    return sums / np.where(counts == 0.0, 1.0, counts)


def combinatorial_laplacian(n_vertices: int, edges) -> csr_matrix:
    """L = D - A over the given undirected edges."""
    e = np.asarray(edges, dtype=np.int64)
    ones = np.ones(len(e))
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    a = csr_matrix((np.concatenate([ones, ones]), (rows, cols)), shape=(n_vertices, n_vertices))
    deg = np.asarray(a.sum(axis=1)).ravel()
    d = csr_matrix((deg, (np.arange(n_vertices), np.arange(n_vertices))), shape=a.shape)
    return (d - a).tocsr()
