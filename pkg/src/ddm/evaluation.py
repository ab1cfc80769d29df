"""Quantitative evaluation: registration errors, flow accuracy, surface scores.

Flow accuracy convention (absolute-or-relative thresholds): a point counts
for Acc-0.05 when its error norm is < 0.05 or < 5% of the true flow norm,
for Acc-0.1 at 0.1 / 10%, and as an outlier when the error is > 0.3 or
> 10% of the true norm.  Reports carry this convention in their header.
"""

from __future__ import annotations

import dataclasses
import json

import numpy as np

from .errors import InvalidInputError
from .geometry import CloudIndex, PointCloud, TriangleMesh, sample_surface

FLOW_CONVENTION = (
    "acc: err<abs or err<rel*gt; acc05=0.05/5%, acc1=0.1/10%; outlier: err>0.3 or >10%"
)


@dataclasses.dataclass
class EvalReport:
    """Named scalar metrics plus optional threshold-recall curves."""

    metrics: dict
    curves: dict = dataclasses.field(default_factory=dict)
    header: str = ""

    def to_json(self) -> str:
        doc = {"metrics": self.metrics}
        if self.header:
            doc["convention"] = self.header
        if self.curves:
            doc["curves"] = {
                name: [[float(t), float(r)] for t, r in curve]
                for name, curve in self.curves.items()
            }
        return json.dumps(doc, indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = []
        if self.header:
            lines.append(f"# {self.header}")
        for k in sorted(self.metrics):
            lines.append(f"{k} = {self.metrics[k]:.9g}")
        for name, curve in sorted(self.curves.items()):
            pts = " ".join(f"{t:g}:{r:.6g}" for t, r in curve)
            lines.append(f"{name} = {pts}")
        return "\n".join(lines)


def rotation_error(r_hat, r_gt) -> float:
    """Geodesic angle between rotations, degrees."""
    r_hat = np.asarray(r_hat, dtype=np.float64)
    r_gt = np.asarray(r_gt, dtype=np.float64)
    cos = np.clip((np.trace(r_gt.T @ r_hat) - 1.0) / 2.0, -1.0, 1.0)
    return float(np.degrees(np.arccos(cos)))


def translation_error(t_hat, t_gt) -> float:
    return float(np.linalg.norm(np.asarray(t_hat) - np.asarray(t_gt)))


def success_rate(results, re_thresh: float = 15.0, te_thresh: float = 0.3) -> dict:
    """Fraction of (RE, TE) pairs under both thresholds.

    Mean errors are computed over the successful results only; they come
    out as NaN when nothing succeeds.
    """
    if len(results) == 0:
        raise InvalidInputError("no registration results to score")
    arr = np.asarray(results, dtype=np.float64)
    ok = (arr[:, 0] < re_thresh) & (arr[:, 1] < te_thresh)
    out = {"sr": float(ok.mean())}
    if ok.any():
        out["mean_re"] = float(arr[ok, 0].mean())
        out["mean_te"] = float(arr[ok, 1].mean())
    else:
        out["mean_re"] = float("nan")
        out["mean_te"] = float("nan")
    return out


def recall_curve(results, re_thresholds, te_thresholds) -> list:
    """[(re_t, te_t, recall)] over the paired threshold lists."""
    if len(results) == 0:
        raise InvalidInputError("no registration results to score")
    arr = np.asarray(results, dtype=np.float64)
    curve = []
    for re_t, te_t in zip(re_thresholds, te_thresholds):
        ok = (arr[:, 0] < re_t) & (arr[:, 1] < te_t)
        curve.append((float(re_t), float(te_t), float(ok.mean())))
    return curve


def vertex_rmse(v_hat, v_gt) -> float:
    """Root of the mean squared per-vertex Euclidean error."""
    d = np.asarray(v_hat, dtype=np.float64) - np.asarray(v_gt, dtype=np.float64)
    return float(np.sqrt((d**2).sum(axis=1).mean()))


def v2v(v_hat, v_gt) -> float:
    """Mean per-vertex Euclidean error."""
    d = np.asarray(v_hat, dtype=np.float64) - np.asarray(v_gt, dtype=np.float64)
    return float(np.linalg.norm(d, axis=1).mean())


def flow_metrics(flow_hat, flow_gt) -> dict:
    """EPE plus the documented absolute-or-relative Acc/Outlier fractions."""
    err = np.linalg.norm(
        np.asarray(flow_hat, dtype=np.float64) - np.asarray(flow_gt, dtype=np.float64),
        axis=1,
    )
    gt = np.linalg.norm(np.asarray(flow_gt, dtype=np.float64), axis=1)
    # zero true flow: any nonzero error exceeds every relative threshold,
    # and a zero error passes them all
    rel = np.divide(err, gt, out=np.where(err == 0.0, 0.0, np.inf), where=gt != 0.0)
    return {
        "epe": float(err.mean()),
        "acc05": float(((err < 0.05) | (rel < 0.05)).mean()),
        "acc1": float(((err < 0.1) | (rel < 0.1)).mean()),
        "outliers": float(((err > 0.3) | (rel > 0.1)).mean()),
    }


def fscore(pred_points, gt_points, threshold: float) -> dict:
    """F = 2PR/(P+R); precision/recall are NN-within-threshold fractions."""
    pred = PointCloud(pred_points) if not isinstance(pred_points, PointCloud) else pred_points
    gt = PointCloud(gt_points) if not isinstance(gt_points, PointCloud) else gt_points
    d_pg, _ = CloudIndex(gt).knn(pred.points, 1)
    d_gp, _ = CloudIndex(pred).knn(gt.points, 1)
    precision = float((d_pg[:, 0] < threshold).mean())
    recall = float((d_gp[:, 0] < threshold).mean())
    f = 0.0 if precision + recall == 0.0 else 2.0 * precision * recall / (precision + recall)
    return {"fscore": f, "precision": precision, "recall": recall}


def normal_consistency(pred: TriangleMesh, gt: TriangleMesh, n_samples: int,
                       seed: int = 0) -> float:
    """Mean |cos| between face normals at bidirectional nearest sample pairs."""
    rng = np.random.default_rng(seed)
    sp = sample_surface(pred, n_samples, rng)
    sg = sample_surface(gt, n_samples, rng)
    np_pred = pred.face_normals[sp.face_index]
    np_gt = gt.face_normals[sg.face_index]
    total = 0.0
    for a_pts, a_n, b_pts, b_n in (
        (sp.points, np_pred, sg.points, np_gt),
        (sg.points, np_gt, sp.points, np_pred),
    ):
        _, idx = CloudIndex(PointCloud(b_pts)).knn(a_pts, 1)
        dots = np.abs((a_n * b_n[idx[:, 0]]).sum(axis=1))
        total += float(dots.mean())
    return total / 2.0
