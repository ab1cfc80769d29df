"""Rigid point-cloud registration by metric descent over SE(3).

Parameters are (omega, t) in R^6 with R = exp(hat(omega)); the rotation
gradient is chained through the exact left-Jacobian relation
d(R(omega) p)/d omega = -hat(R p) J_l(omega).
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .ddf import RefGenConfig, generate_reference_points
from .errors import InvalidInputError
from .geometry import CloudIndex, PointCloud
from .metric import MetricConfig, ddm_grad, evaluate_field
from .optim import OptimConfig, OptimTrace, optimize
from .rotation import is_rotation, so3_exp, so3_left_jacobian, so3_log


@dataclasses.dataclass
class RigidTransform:
    """Rotation matrix plus translation, applied as p -> R p + t."""

    rotation: np.ndarray = dataclasses.field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = dataclasses.field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not is_rotation(self.rotation, tol=1e-9):
            raise InvalidInputError("rotation must be orthonormal with determinant 1")

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: (self o other)(p) = self(other(p))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.rotation.T, -(self.rotation.T @ self.translation))


@dataclasses.dataclass
class RigidRegConfig:
    metric: MetricConfig
    refgen: RefGenConfig
    optim: OptimConfig
    init: RigidTransform = dataclasses.field(default_factory=RigidTransform.identity)


def apply_rigid(cloud: PointCloud, transform: RigidTransform) -> PointCloud:
    return PointCloud(cloud.points @ transform.rotation.T + transform.translation)


def rigid_param_grads(points, omega, t, point_grads):
    """Pull per-moved-point coordinate gradients back to (omega, t).

    For moved_i = R(omega) p_i + t: dL/dt is the plain sum, and dL/domega
    routes each cross(R p_i, g_i) through the transposed left Jacobian of
    the exponential map.
    """
    rot = so3_exp(omega)
    d_t = point_grads.sum(axis=0)
    d_omega = so3_left_jacobian(omega).T @ np.cross(
        points @ rot.T, point_grads
    ).sum(axis=0)
    return d_omega, d_t


def register_rigid(src: PointCloud, tgt: PointCloud, cfg: RigidRegConfig,
                   workers: int = 1, backend=None):
    """Align src to tgt; returns (RigidTransform, OptimTrace).

    Reference points are generated once from the target (which never
    moves), the target field over them is precomputed, and only the
    transformed source is re-evaluated per iteration.
    """
    if src.n < cfg.metric.ddf.k or tgt.n < cfg.metric.ddf.k:
        raise InvalidInputError("both clouds need at least K points")
    q = generate_reference_points(tgt, cfg.refgen)
    tgt_field = evaluate_field(CloudIndex(tgt), q.points, cfg.metric, workers, backend)
    p = src.points

    x0 = np.concatenate([so3_log(cfg.init.rotation), cfg.init.translation])

    def objective(x):
        if not np.isfinite(x).all():
            return np.inf, np.zeros_like(x)
        omega, t = x[:3], x[3:]
        rot = so3_exp(omega)
        moved = p @ rot.T + t
        # finite params can still overflow into non-finite geometry
        if not np.isfinite(moved).all():
            return np.inf, np.zeros_like(x)
        value, grad = ddm_grad(
            None, PointCloud(moved), q, cfg.metric, workers, backend,
            fixed_field=tgt_field,
        )
        d_omega, d_t = rigid_param_grads(p, omega, t, grad.coords)
        return value.value, np.concatenate([d_omega, d_t])

    trace = optimize(objective, x0, cfg.optim)
    omega, t = trace.final_params[:3], trace.final_params[3:]
    return RigidTransform(so3_exp(omega), t), trace
