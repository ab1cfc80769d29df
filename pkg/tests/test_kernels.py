"""Kernel-level checks: triangle feet, backend parity, forced fallback."""

import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import brute_cloud_qhat, oracle_tri_foot, rel_err, triangle_soup

from ddm import HAVE_EXT
from ddm._kernels import py_backend, resolve
from ddm.errors import InvalidInputError
from ddm.geometry import MeshIndex, closest_point_on_triangle
from ddm.shapes import make_icosphere

needs_ext = pytest.mark.skipif(not HAVE_EXT, reason="compiled extension not built")


def test_triangle_feet_match_enumeration_oracle(rng):
    tris = rng.normal(size=(300, 3, 3))
    queries = rng.normal(size=(300, 3))
    foot, bary = py_backend.closest_point_on_triangles(
        queries, tris[:, 0], tris[:, 1], tris[:, 2]
    )
    for i in range(300):
        ref = oracle_tri_foot(queries[i], *tris[i])
        d_lib = np.linalg.norm(queries[i] - foot[i])
        d_ref = np.linalg.norm(queries[i] - ref)
        assert abs(d_lib - d_ref) < 1e-10
        # the foot really lies on the triangle at the stated coordinates
        recon = (
            bary[i, 0] * tris[i, 0] + bary[i, 1] * tris[i, 1] + bary[i, 2] * tris[i, 2]
        )
        assert np.linalg.norm(recon - foot[i]) < 1e-9
        assert bary[i].min() > -1e-12 and abs(bary[i].sum() - 1.0) < 1e-12


def test_triangle_feet_degenerate_cases(rng):
    a = np.array([0.0, 0.0, 0.0])
    # collinear triangle: falls back to the longest edge segment
    foot, bary = py_backend.closest_point_on_triangles(
        np.array([[0.5, 1.0, 0.0]]),
        a[None],
        np.array([[1.0, 0.0, 0.0]]),
        np.array([[2.0, 0.0, 0.0]]),
    )
    assert np.allclose(foot[0], [0.5, 0.0, 0.0])
    # fully coincident triangle
    foot, bary = py_backend.closest_point_on_triangles(
        np.array([[1.0, 1.0, 1.0]]), a[None], a[None], a[None]
    )
    assert np.allclose(foot[0], 0.0)
    assert abs(bary[0].sum() - 1.0) < 1e-12


def test_scalar_wrapper_matches_batch(rng):
    tri = rng.normal(size=(3, 3))
    q = rng.normal(size=3)
    res = closest_point_on_triangle(q, tri[0], tri[1], tri[2])
    ref = oracle_tri_foot(q, tri[0], tri[1], tri[2])
    assert abs(np.linalg.norm(q - res.point) - np.linalg.norm(q - ref)) < 1e-10


@needs_ext
def test_mesh_query_bitwise_parity_across_backends(rng):
    from ddm._kernels import fast

    for mesh in (make_icosphere(2), triangle_soup(rng, 80)):
        queries = rng.normal(scale=1.2, size=(400, 3))
        ip = MeshIndex(mesh, backend="python")
        ic = MeshIndex(mesh, backend="compiled")
        dp, fp, idp, bp = ip.query(queries)
        dc, fc, idc, bc = ic.query(queries)
        assert np.array_equal(idp, idc)
        assert np.array_equal(dp, dc)
        assert np.array_equal(fp, fc)
        assert np.array_equal(bp, bc)


@needs_ext
def test_cloud_kernels_parity_across_backends(rng):
    from ddm._kernels import fast

    pts = rng.normal(size=(200, 3))
    queries = rng.normal(size=(50, 3))
    d2 = ((queries[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    idx = np.argsort(d2, axis=1)[:, :5].astype(np.int64)
    idx = np.ascontiguousarray(idx)
    outs_py = py_backend.cloud_qhat_forward(queries, pts, idx, 1e-12)
    outs_c = fast.cloud_qhat_forward(queries, pts, idx, 1e-12)
    for a, b in zip(outs_py, outs_c):
        assert rel_err(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)) < 1e-13
    g_qhat = rng.normal(size=(50, 3))
    gp = py_backend.cloud_qhat_backward(
        queries, pts, idx, outs_py[1], outs_py[2], outs_py[3], outs_py[4],
        np.asarray(outs_py[5]), outs_py[0], g_qhat,
    )
    gc = fast.cloud_qhat_backward(
        queries, pts, idx, outs_c[1], outs_c[2], outs_c[3], outs_c[4],
        np.asarray(outs_c[5]), outs_c[0], g_qhat,
    )
    assert rel_err(gp, gc) < 1e-13


def test_cloud_forward_matches_loop_oracle(rng):
    pts = rng.normal(size=(60, 3))
    queries = rng.normal(size=(25, 3))
    d2 = ((queries[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    idx = np.ascontiguousarray(np.argsort(d2, axis=1)[:, :4].astype(np.int64))
    qhat = py_backend.cloud_qhat_forward(queries, pts, idx, 1e-12)[0]
    for i in range(25):
        ref = brute_cloud_qhat(pts, queries[i], 4)
        assert rel_err(qhat[i], ref) < 1e-12


def test_singular_rule_snaps_to_first_nearest():
    pts = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 1.0, 0.0]])
    q = np.array([[0.0, 1.0, 0.0]])
    idx = np.array([[1, 2, 0]], dtype=np.int64)
    qhat, neighbors, w, wsum, nearest_col, singular = py_backend.cloud_qhat_forward(
        q, pts, idx, 1e-12
    )
    assert singular[0]
    assert np.array_equal(qhat[0], pts[1])
    # gradient routes to the snapped neighbor only
    g = py_backend.cloud_qhat_backward(
        q, pts, idx, neighbors, w, wsum, nearest_col, np.asarray(singular), qhat,
        np.array([[1.0, 2.0, 3.0]]),
    )
    assert np.array_equal(g[1], [1.0, 2.0, 3.0])
    assert np.count_nonzero(g) == 3


def test_resolve_backend_names():
    assert resolve("python") == "python"
    assert resolve(None) in ("python", "compiled")
    with pytest.raises(InvalidInputError):
        resolve("gpu")
    if not HAVE_EXT:
        with pytest.raises(InvalidInputError):
            resolve("compiled")


def test_forced_python_fallback_subprocess():
    env = dict(os.environ, DDM_FORCE_PYTHON="1")
    code = (
        "import ddm, numpy as np\n"
        "assert ddm.DEFAULT_BACKEND == 'python'\n"
        "m = ddm.TriangleMesh(np.eye(3), np.array([[0, 1, 2]]))\n"
        "d, foot, fid, bary = ddm.MeshIndex(m).query(np.zeros((1, 3)))\n"
        "assert abs(d[0] - 1.0 / np.sqrt(3.0)) < 1e-12\n"
        "print('fallback ok')\n"
    )
    out = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True
    )
    assert out.returncode == 0, out.stderr
    assert "fallback ok" in out.stdout
