"""Scene flow as direct optimization of per-point offsets.

The moved cloud src + delta is compared to the target through the metric;
a K-NN smoothness term over the undeformed source keeps the field coherent.
Reference points take per-point noise scaled by local target spacing.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .ddf import RefGenConfig, generate_adaptive_reference_points
from .errors import InvalidInputError
from .geometry import CloudIndex, PointCloud
from .metric import MetricConfig, ddm_grad, evaluate_field
from .optim import OptimConfig, optimize


@dataclasses.dataclass
class FlowField:
    """Per-source-point offsets, shape (N_src, 3)."""

    delta: np.ndarray

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=np.float64)
        if self.delta.ndim != 2 or self.delta.shape[1] != 3:
            raise InvalidInputError("flow must have shape (N, 3)")
        if not np.isfinite(self.delta).all():
            raise InvalidInputError("flow contains non-finite values")


@dataclasses.dataclass
class FlowConfig:
    metric: MetricConfig
    refgen: RefGenConfig
    optim: OptimConfig
    lambda_smooth: float = 1.0
    k_s: int = 8
    adaptive_sigma_scale: float = 3.0

    def __post_init__(self):
        if self.k_s < 1:
            raise InvalidInputError("K_s must be >= 1")
        if self.lambda_smooth < 0:
            raise InvalidInputError("lambda_smooth must be >= 0")


def smoothness_neighbors(src: PointCloud, k_s: int) -> np.ndarray:
    """(N, K_s) nearest-neighbor indices excluding each point itself."""
    if src.n < k_s + 1:
        raise InvalidInputError("need at least K_s + 1 source points")
    _, idx = CloudIndex(src).knn(src.points, k_s + 1)
    n = src.n
    out = np.empty((n, k_s), dtype=np.int64)
    for i in range(n):
        row = idx[i]
        keep = row[row != i]
        out[i] = keep[:k_s]
    return out


def flow_smooth_reg(src: PointCloud, flow: FlowField, k_s: int,
                    neighbors=None) -> float:
    value, _ = flow_smooth_reg_grad(src, flow.delta, k_s, neighbors)
    return value


def flow_smooth_reg_grad(src: PointCloud, delta: np.ndarray, k_s: int,
                         neighbors=None):
    """Mean squared offset difference over fixed source neighborhoods.

    value = (1 / (3 N K_s)) sum_i sum_{j in N(i)} ||delta_i - delta_j||^2,
    with N(i) taken from the undeformed source.  Returns (value, grad).
    """
    if neighbors is None:
        neighbors = smoothness_neighbors(src, k_s)
    n = src.n
    scale = 1.0 / (3.0 * n * k_s)
    e = delta[:, None, :] - delta[neighbors]  # (N, K_s, 3)
    value = scale * float((e**2).sum())
    grad = np.zeros_like(delta)
    ge = 2.0 * scale * e
    grad += ge.sum(axis=1)
    np.add.at(grad, neighbors.ravel(), -ge.reshape(-1, 3))
    return value, grad


def estimate_scene_flow(src: PointCloud, tgt: PointCloud, cfg: FlowConfig,
                        workers: int = 1, backend=None):
    """Optimize per-point offsets moving src onto tgt.

    Returns (FlowField, OptimTrace).  The flow starts at zero; reference
    points come from the target with sigma_i = adaptive_sigma_scale times
    the distance from base point i to its nearest target neighbor.
    """
    if src.n < cfg.metric.ddf.k or tgt.n < cfg.metric.ddf.k:
        raise InvalidInputError("both clouds need at least K points")
    q = generate_adaptive_reference_points(
        tgt, cfg.refgen.m, cfg.adaptive_sigma_scale, cfg.refgen.seed
    )
    tgt_field = evaluate_field(CloudIndex(tgt), q.points, cfg.metric, workers, backend)
    neighbors = smoothness_neighbors(src, cfg.k_s) if cfg.lambda_smooth > 0 else None
    p = src.points

    def objective(x):
        if not np.isfinite(x).all():
            return np.inf, np.zeros_like(x)
        delta = x.reshape(-1, 3)
        shifted = p + delta
        if not np.isfinite(shifted).all():
            return np.inf, np.zeros_like(x)
        moved = PointCloud(shifted)
        value, grad = ddm_grad(
            None, moved, q, cfg.metric, workers, backend, fixed_field=tgt_field
        )
        total = value.value
        g = grad.coords
        if cfg.lambda_smooth > 0:
            sval, sgrad = flow_smooth_reg_grad(src, delta, cfg.k_s, neighbors)
            total += cfg.lambda_smooth * sval
            g = g + cfg.lambda_smooth * sgrad
        return total, g.ravel()

    trace = optimize(objective, np.zeros(3 * src.n), cfg.optim)
    return FlowField(trace.final_params.reshape(-1, 3)), trace
