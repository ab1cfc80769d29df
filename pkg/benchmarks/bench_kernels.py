#!/usr/bin/env python3
"""Timing comparison between the compiled and pure-Python kernel backends.

Runs the hot paths (mesh closest-point queries, cloud DDF forward and
backward, full metric evaluation) on both backends and prints a table.
Also cross-checks that both backends return identical mesh query results.
"""

import argparse
import time

import numpy as np

from ddm import HAVE_EXT, DdfConfig, MetricConfig, PointCloud, ddm
from ddm._kernels import resolve
from ddm.ddf import cloud_ddf_backward, ddf_cloud_batch, ddf_mesh_batch
from ddm.geometry import CloudIndex, MeshIndex, sample_points_on_mesh
from ddm.shapes import make_icosphere


def _time(fn, reps):
    best = np.inf
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--queries", type=int, default=20000)
    ap.add_argument("--points", type=int, default=5000)
    ap.add_argument("--subdiv", type=int, default=4, help="icosphere subdivision level")
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    mesh = make_icosphere(args.subdiv)
    cloud = PointCloud(sample_points_on_mesh(mesh, args.points, rng).points)
    cloud2 = PointCloud(sample_points_on_mesh(mesh, args.points, rng).points)
    queries = sample_points_on_mesh(mesh, args.queries, rng).points
    queries = queries + rng.normal(scale=0.05, size=queries.shape)
    cfg = MetricConfig(beta=20.0, ddf=DdfConfig(k=5))

    backends = ["python"] + (["compiled"] if HAVE_EXT else [])
    print(f"mesh: {len(mesh.vertices)} vertices / {len(mesh.faces)} faces, "
          f"{args.queries} queries, cloud N={args.points}, reps={args.reps} (best shown)")
    print(f"{'timing (s)':<34}" + "".join(f"{b:>12}" for b in backends))

    rows = {}
    results = {}
    for b in backends:
        resolve(b)  # raises early if unavailable
        mindex = MeshIndex(mesh, backend=b)
        cindex = CloudIndex(cloud)

        rows.setdefault("mesh index build", {})[b] = _time(
            lambda: MeshIndex(mesh, backend=b), args.reps
        )
        rows.setdefault("mesh closest-point queries", {})[b] = _time(
            lambda: mindex.query(queries), args.reps
        )
        results[b] = mindex.query(queries)
        rows.setdefault("cloud ddf forward", {})[b] = _time(
            lambda: ddf_cloud_batch(cindex, queries, cfg.ddf, backend=b), args.reps
        )
        res = ddf_cloud_batch(cindex, queries, cfg.ddf, backend=b)
        g_f = np.ones_like(res.f)
        g_h = np.ones_like(res.h)
        rows.setdefault("cloud ddf backward", {})[b] = _time(
            lambda: cloud_ddf_backward(res, g_f, g_h, backend=b), args.reps
        )
        rows.setdefault("full metric (cloud vs cloud)", {})[b] = _time(
            lambda: ddm(cloud, cloud2, queries, cfg, backend=b), args.reps
        )
        rows.setdefault("full metric (mesh vs mesh)", {})[b] = _time(
            lambda: ddm(mesh, mesh, queries, cfg, backend=b), args.reps
        )

    for name, vals in rows.items():
        line = f"{name:<34}" + "".join(f"{vals[b]:>12.4f}" for b in backends)
        if len(backends) == 2:
            line += f"   x{vals['python'] / max(vals['compiled'], 1e-12):.1f}"
        print(line)

    if len(backends) == 2:
        dp, fp, idp, _ = results["python"]
        dc, fc, idc, _ = results["compiled"]
        same = (
            np.array_equal(dp, dc) and np.array_equal(fp, fc) and np.array_equal(idp, idc)
        )
        print(f"mesh query results identical across backends: {same}")


if __name__ == "__main__":
    main()
