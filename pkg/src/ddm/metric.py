"""The shape discrepancy metric with gradients, plus Chamfer and
point-to-face baselines used as equivalence oracles.

For each reference point q the two surfaces' fields are compared with an
L1 norm over the concatenated [f, h] vector, d(q) = ||F1(q) - F2(q)||_1,
weighted by the confidence score s(q) = exp(-beta * d(q)); the metric is
the mean (or sum) of s * d over the reference set.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .ddf import (
    CloudDdf,
    DdfConfig,
    MeshDdf,
    ReferencePointSet,
    cloud_ddf_backward,
    ddf_cloud_batch,
    ddf_mesh_batch,
    mesh_ddf_backward,
)
from .errors import InvalidInputError
from .geometry import CloudIndex, MeshIndex, PointCloud, TriangleMesh, as_points

_REDUCTIONS = ("mean", "sum")


@dataclasses.dataclass
class MetricConfig:
    """Metric settings: score sharpness beta, DDF settings, reduction mode."""

    beta: float = 0.0
    ddf: DdfConfig = dataclasses.field(default_factory=DdfConfig)
    reduction: str = "mean"

    def __post_init__(self):
        if not np.isfinite(self.beta) or self.beta < 0:
            raise InvalidInputError("beta must be finite and >= 0")
        if self.reduction not in _REDUCTIONS:
            raise InvalidInputError(f"reduction must be one of {_REDUCTIONS}")


@dataclasses.dataclass
class MetricValue:
    """Reduced metric plus the per-reference-point (d, s) pairs."""

    value: float
    per_point_d: np.ndarray = None
    per_point_s: np.ndarray = None


@dataclasses.dataclass
class MetricGradient:
    """Dense d(value)/d(coordinate) for the moving surface's coordinates."""

    coords: np.ndarray


def _resolve_index(surface, backend=None):
    if isinstance(surface, (CloudIndex, MeshIndex)):
        return surface
    if isinstance(surface, PointCloud):
        return CloudIndex(surface)
    if isinstance(surface, TriangleMesh):
        return MeshIndex(surface, backend=backend)
    raise InvalidInputError(f"not a surface or index: {type(surface).__name__}")


def evaluate_field(surface, q_points, cfg: MetricConfig, workers: int = 1, backend=None):
    """DDF of one surface over the reference points; cacheable by callers."""
    index = _resolve_index(surface, backend)
    if isinstance(index, CloudIndex):
        return ddf_cloud_batch(index, q_points, cfg.ddf, workers=workers, backend=backend)
    return ddf_mesh_batch(index, q_points, workers=workers)


def _q_points(q):
    if isinstance(q, ReferencePointSet):
        return q.points
    return as_points(q, "reference points")


def _per_point(res1, res2, cfg: MetricConfig):
    d = np.abs(res2.f - res1.f)
    if not cfg.ddf.distance_only:
        dh = np.abs(res2.h - res1.h)
        d = d + dh[:, 0] + dh[:, 1] + dh[:, 2]
    s = np.exp(-cfg.beta * d)
    return d, s


def _reduce(z, reduction):
    return float(np.mean(z)) if reduction == "mean" else float(np.sum(z))


def ddm(s1, s2, q, cfg: MetricConfig, workers: int = 1, backend=None) -> MetricValue:
    """The discrepancy between two surfaces over a frozen reference set.

    Symmetric in (s1, s2), non-negative, and zero when both arguments are
    the same object.
    """
    pts = _q_points(q)
    res1 = evaluate_field(s1, pts, cfg, workers, backend)
    res2 = evaluate_field(s2, pts, cfg, workers, backend)
    d, s = _per_point(res1, res2, cfg)
    return MetricValue(_reduce(s * d, cfg.reduction), d, s)


def ddm_grad(fixed, moving, q, cfg: MetricConfig, workers: int = 1, backend=None,
             fixed_field=None):
    """Metric value and its gradient in the moving surface's coordinates.

    ``fixed_field`` may carry a precomputed field of the fixed surface over
    the same reference points (it never changes during optimization).
    The score participates in the gradient: with z(d) = d * exp(-beta d),
    dz/dd = exp(-beta d) (1 - beta d); L1 subgradients use sign(0) = 0.
    """
    pts = _q_points(q)
    if fixed_field is None:
        fixed_field = evaluate_field(fixed, pts, cfg, workers, backend)
    moving_index = _resolve_index(moving, backend)
    res2 = evaluate_field(moving_index, pts, cfg, workers, backend)
    d, s = _per_point(fixed_field, res2, cfg)
    value = MetricValue(_reduce(s * d, cfg.reduction), d, s)

    scale = 1.0 / len(pts) if cfg.reduction == "mean" else 1.0
    coef = scale * s * (1.0 - cfg.beta * d)
    g_f = coef * np.sign(res2.f - fixed_field.f)
    if cfg.ddf.distance_only:
        g_h = np.zeros_like(res2.h)
    else:
        g_h = coef[:, None] * np.sign(res2.h - fixed_field.h)

    if isinstance(res2, CloudDdf):
        grad = cloud_ddf_backward(res2, g_f, g_h, backend=backend)
    else:
        grad = mesh_ddf_backward(
            res2, moving_index.faces, moving_index.vertices.shape[0], g_f, g_h
        )
    return value, MetricGradient(grad)


def chamfer(p1: PointCloud, p2: PointCloud, workers: int = 1) -> float:
    """Sum of nearest-neighbor distances in both directions."""
    if not isinstance(p1, PointCloud):
        p1 = PointCloud(p1)
    if not isinstance(p2, PointCloud):
        p2 = PointCloud(p2)
    d12, _ = CloudIndex(p2).knn(p1.points, 1, workers=workers)
    d21, _ = CloudIndex(p1).knn(p2.points, 1, workers=workers)
    return float(d12.sum() + d21.sum())


def p2f(samples, target, workers: int = 1, backend=None) -> float:
    """One-sided sum of exact point-to-mesh distances."""
    pts = samples.points if isinstance(samples, PointCloud) else as_points(samples)
    index = target if isinstance(target, MeshIndex) else MeshIndex(target, backend=backend)
    dist, _, _, _ = index.query(pts, workers=workers)
    return float(dist.sum())


def p2f_symmetric(mesh1, mesh2, samples_on_1, samples_on_2, workers: int = 1,
                  backend=None) -> float:
    """Two-sided point-to-face sum with caller-provided per-side samples."""
    return p2f(samples_on_1, mesh2, workers, backend) + p2f(
        samples_on_2, mesh1, workers, backend
    )
