"""Reference-point generation and the directional distance field (f, h).

The field of a surface at a query q is the 4-vector [f, h] where q-hat is
the surface's closest-point estimate, f = ||q-hat - q|| and h = q-hat - q.
Gradients are taken with respect to the surface's own coordinates (cloud
points or mesh vertices) with neighbor selection held fixed.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from . import _kernels
from .errors import InvalidInputError
from .geometry import (
    CloudIndex,
    MeshIndex,
    PointCloud,
    TriangleMesh,
    as_points,
    sample_surface,
)

SINGULAR_EPS = 1e-12
F_GRAD_EPS = 1e-12

_SOURCE_MODES = ("fixed-only", "both-surfaces")


@dataclasses.dataclass
class RefGenConfig:
    """How to build the frozen reference point set Q.

    Attributes:
        m: total number of reference points (fixed-only mode).
        sigma: per-coordinate Gaussian noise std-dev; 0 keeps base points.
        seed: RNG seed; same seed gives identical output.
        sources: "fixed-only" (base points from the fixed surface) or
            "both-surfaces" (union of base points from both surfaces).
    """

    m: int
    sigma: float = 0.0
    seed: int = 0
    sources: str = "fixed-only"

    def __post_init__(self):
        if self.m < 1:
            raise InvalidInputError("reference point count must be >= 1")
        if not np.isfinite(self.sigma) or self.sigma < 0:
            raise InvalidInputError("sigma must be finite and >= 0")
        if self.sources not in _SOURCE_MODES:
            raise InvalidInputError(f"sources must be one of {_SOURCE_MODES}")


@dataclasses.dataclass
class ReferencePointSet:
    """Frozen reference points plus how many came from each surface."""

    points: np.ndarray
    config: RefGenConfig
    source_sizes: tuple = (0, 0)

    def __post_init__(self):
        self.points = as_points(self.points, "reference points")

    @property
    def m(self) -> int:
        return self.points.shape[0]


@dataclasses.dataclass
class DdfConfig:
    """Point-cloud DDF evaluation settings."""

    k: int = 5
    distance_only: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise InvalidInputError("K must be >= 1")


@dataclasses.dataclass
class DdfSample:
    """Field value at one query: unsigned distance f and offset h (= qhat - q)."""

    f: float
    h: np.ndarray


@dataclasses.dataclass
class DdfGradient:
    """Sparse field Jacobian at one query.

    indices: the supporting coordinate owners (K neighbors or 3 face vertices).
    df: (S, 3) rows of df/d(owner coords); dh: (S, 3, 3) with
    dh[s, i, j] = d h_i / d coord_j of owner s.
    """

    indices: np.ndarray
    df: np.ndarray
    dh: np.ndarray


def _cycled_indices(n: int, m: int, rng) -> np.ndarray:
    """Indices 0..n-1 repeated to length m; remainder from a seeded shuffle."""
    reps = m // n
    rem = m - reps * n
    parts = [np.tile(np.arange(n, dtype=np.int64), reps)] if reps else []
    if rem:
        parts.append(rng.permutation(n)[:rem].astype(np.int64))
    return np.concatenate(parts) if len(parts) > 1 else parts[0]


def _base_points_cloud(cloud: PointCloud, m: int, rng) -> np.ndarray:
    return cloud.points[_cycled_indices(cloud.n, m, rng)]


def _base_points(surface, m: int, rng) -> np.ndarray:
    if isinstance(surface, PointCloud):
        return _base_points_cloud(surface, m, rng)
    if isinstance(surface, TriangleMesh):
        return sample_surface(surface, m, rng).points
    raise InvalidInputError(f"not a surface: {type(surface).__name__}")


def generate_reference_points(fixed, cfg: RefGenConfig, moving=None) -> ReferencePointSet:
    """Build Q near the fixed surface (or near both, for the union mode).

    fixed-only: base points come from the fixed surface, cycled or sampled
    to exactly cfg.m.  both-surfaces: clouds contribute every point once
    and meshes contribute an even split of cfg.m; sigma=0 then leaves the
    points exactly on their surfaces.  Deterministic in cfg.seed.
    """
    rng = np.random.default_rng(cfg.seed)
    if cfg.sources == "fixed-only":
        base = _base_points(fixed, cfg.m, rng)
        sizes = (len(base), 0)
    else:
        if moving is None:
            raise InvalidInputError("both-surfaces mode needs the second surface")
        halves = (cfg.m // 2, cfg.m - cfg.m // 2)
        parts = []
        for surface, half in zip((fixed, moving), halves):
            if isinstance(surface, PointCloud):
                parts.append(surface.points.copy())
            else:
                parts.append(_base_points(surface, max(half, 1), rng))
        sizes = (len(parts[0]), len(parts[1]))
        base = np.concatenate(parts)
    if cfg.sigma > 0:
        base = base + rng.normal(0.0, cfg.sigma, size=base.shape)
    return ReferencePointSet(base, cfg, sizes)


def generate_adaptive_reference_points(
    cloud: PointCloud, m: int, scale: float, seed: int = 0
) -> ReferencePointSet:
    """Q from a cloud with per-point noise scaled by local spacing.

    Each base point i gets sigma_i = scale * (distance from point i to its
    nearest other cloud point), so dense regions get tight reference points.
    """
    if cloud.n < 2:
        raise InvalidInputError("adaptive noise needs at least two points")
    rng = np.random.default_rng(seed)
    idx = _cycled_indices(cloud.n, m, rng)
    base = cloud.points[idx]
    index = CloudIndex(cloud)
    d, _ = index.knn(cloud.points, 2)
    sigma = scale * d[:, 1][idx]
    pts = base + rng.normal(size=base.shape) * sigma[:, None]
    cfg = RefGenConfig(m=m, sigma=0.0, seed=seed)
    return ReferencePointSet(pts, cfg, (m, 0))


@dataclasses.dataclass(eq=False)
class CloudDdf:
    """Batched cloud field values plus everything the backward pass reuses."""

    f: np.ndarray
    h: np.ndarray
    qhat: np.ndarray
    queries: np.ndarray
    points: np.ndarray
    idx: np.ndarray
    neighbors: np.ndarray
    w: np.ndarray
    wsum: np.ndarray
    nearest_col: np.ndarray
    singular: np.ndarray


@dataclasses.dataclass(eq=False)
class MeshDdf:
    """Batched mesh field values; qhat is the exact foot point."""

    f: np.ndarray
    h: np.ndarray
    qhat: np.ndarray
    queries: np.ndarray
    fid: np.ndarray
    bary: np.ndarray


def ddf_cloud_batch(
    index: CloudIndex, queries, cfg: DdfConfig, workers: int = 1, backend=None
) -> CloudDdf:
    """Field of a point cloud at each query row (neighbors re-selected)."""
    q = as_points(queries, "queries")
    _, idx = index.knn(q, cfg.k, workers=workers)
    k = _kernels.impl(backend)
    qhat, neighbors, w, wsum, nearest_col, singular = k.cloud_qhat_forward(
        q, index.points, idx, SINGULAR_EPS
    )
    h = qhat - q
    f = np.sqrt(h[:, 0] ** 2 + h[:, 1] ** 2 + h[:, 2] ** 2)
    return CloudDdf(f, h, qhat, q, index.points, idx, neighbors, w, wsum, nearest_col, singular)


def cloud_ddf_backward(res: CloudDdf, g_f, g_h, backend=None) -> np.ndarray:
    """dL/d(cloud points) given upstream dL/df and dL/dh.

    dh/dp = dqhat/dp and df/dp = (h/f)^T dqhat/dp, so the combined
    cotangent at qhat is g_h + g_f * h / f (f-term dropped when f is
    numerically zero).
    """
    g_qhat = np.array(g_h, dtype=np.float64, copy=True)
    live = res.f > F_GRAD_EPS
    scale = np.where(live, np.asarray(g_f) / np.where(live, res.f, 1.0), 0.0)
    g_qhat += scale[:, None] * res.h
    k = _kernels.impl(backend)
    return k.cloud_qhat_backward(
        res.queries,
        res.points,
        res.idx,
        res.neighbors,
        res.w,
        res.wsum,
        res.nearest_col,
        res.singular,
        res.qhat,
        g_qhat,
    )


def ddf_mesh_batch(index: MeshIndex, queries, workers: int = 1) -> MeshDdf:
    """Field of a mesh at each query row via exact closest points."""
    q = as_points(queries, "queries")
    _, foot, fid, bary = index.query(q, workers=workers)
    h = foot - q
    f = np.sqrt(h[:, 0] ** 2 + h[:, 1] ** 2 + h[:, 2] ** 2)
    return MeshDdf(f, h, foot, q, fid, bary)


def mesh_ddf_backward(res: MeshDdf, faces, n_vertices: int, g_f, g_h) -> np.ndarray:
    """dL/d(mesh vertices); barycentric weights are treated as constants.

    With the foot's face and weights detached, dqhat/dv_j = w_j * I, which
    is the exact first-order gradient for feet interior to a region.
    """
    g_qhat = np.array(g_h, dtype=np.float64, copy=True)
    live = res.f > F_GRAD_EPS
    scale = np.where(live, np.asarray(g_f) / np.where(live, res.f, 1.0), 0.0)
    g_qhat += scale[:, None] * res.h
    out = np.zeros((n_vertices, 3))
    tri = faces[res.fid]
    for j in range(3):
        np.add.at(out, tri[:, j], res.bary[:, j : j + 1] * g_qhat)
    return out


def _sample_of(res, row: int) -> DdfSample:
    return DdfSample(float(res.f[row]), res.h[row].copy())


def ddf_point_cloud(index: CloudIndex, q, cfg: DdfConfig):
    """Single-query convenience wrapper; returns (DdfSample, qhat)."""
    res = ddf_cloud_batch(index, np.asarray(q, dtype=np.float64)[None, :], cfg)
    return _sample_of(res, 0), res.qhat[0]


def ddf_mesh(index: MeshIndex, q):
    """Single-query convenience wrapper; returns (DdfSample, BarycentricFoot)."""
    from .geometry import BarycentricFoot

    res = ddf_mesh_batch(index, np.asarray(q, dtype=np.float64)[None, :])
    foot = BarycentricFoot(int(res.fid[0]), tuple(res.bary[0]), res.qhat[0])
    return _sample_of(res, 0), foot


def ddf_grad_point_cloud(index: CloudIndex, q, cfg: DdfConfig):
    """Field plus its sparse Jacobian over the K supporting neighbors.

    dqhat/dp_j = (w_j/W) I + (2 w_j^2/W) (p_j - qhat)(q - p_j)^T for the
    regular case; the singular (coincident-point) case snaps to the nearest
    neighbor with identity Jacobian there.
    """
    res = ddf_cloud_batch(index, np.asarray(q, dtype=np.float64)[None, :], cfg)
    k = cfg.k
    idx = res.idx[0]
    dh = np.zeros((k, 3, 3))
    if res.singular[0]:
        dh[res.nearest_col[0]] = np.eye(3)
    else:
        w = res.w[0]
        wsum = res.wsum[0]
        eye = np.eye(3)
        for j in range(k):
            u = res.neighbors[0, j] - res.qhat[0]
            v = res.queries[0] - res.neighbors[0, j]
            dh[j] = (w[j] / wsum) * eye + (2.0 * w[j] ** 2 / wsum) * np.outer(u, v)
    f = float(res.f[0])
    if f > F_GRAD_EPS:
        df = np.einsum("i,jik->jk", res.h[0] / f, dh)
    else:
        df = np.zeros((k, 3))
    return _sample_of(res, 0), DdfGradient(idx.copy(), df, dh)


def ddf_grad_mesh(index: MeshIndex, q):
    """Field plus its sparse Jacobian over the closest face's 3 vertices."""
    res = ddf_mesh_batch(index, np.asarray(q, dtype=np.float64)[None, :])
    tri = index.faces[res.fid[0]]
    dh = np.zeros((3, 3, 3))
    for j in range(3):
        dh[j] = res.bary[0, j] * np.eye(3)
    f = float(res.f[0])
    if f > F_GRAD_EPS:
        df = np.einsum("i,jik->jk", res.h[0] / f, dh)
    else:
        df = np.zeros((3, 3))
    return _sample_of(res, 0), DdfGradient(tri.copy(), df, dh)
