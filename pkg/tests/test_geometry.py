"""Geometry containers, spatial indices, sampling, and graph utilities."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_knn, brute_mesh_closest, tetrahedron, triangle_soup

from ddm.errors import InvalidInputError
from ddm.geometry import (
    CloudIndex,
    MeshIndex,
    PointCloud,
    TriangleMesh,
    build_index,
    closest_point_on_mesh,
    combinatorial_laplacian,
    geodesic_distance_matrix,
    geodesic_distances,
    sample_points_on_mesh,
    sample_surface,
    vertex_mean_incident_edge_length,
)
from ddm.shapes import make_cube, make_grid_sheet, make_icosphere


# ---------------------------------------------------------------------------
# containers


def test_point_cloud_validation():
    with pytest.raises(InvalidInputError):
        PointCloud(np.zeros((0, 3)))
    with pytest.raises(InvalidInputError):
        PointCloud(np.array([[1.0, np.nan, 0.0]]))
    with pytest.raises(InvalidInputError):
        PointCloud(np.zeros((3, 2)))


def test_mesh_validation():
    v = np.eye(3)
    with pytest.raises(InvalidInputError):
        TriangleMesh(v, np.array([[0, 1, 3]]))  # out of range
    with pytest.raises(InvalidInputError):
        TriangleMesh(v, np.array([[0, 1, 1]]))  # repeated corner
    mesh = TriangleMesh(v, np.array([[0, 1, 2]]))
    assert mesh.faces.dtype == np.int64


def test_face_areas_and_normals():
    mesh = TriangleMesh(
        np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [4.0, 0.0, 0.0]]),
        np.array([[0, 1, 2], [0, 1, 3]]),  # second face is degenerate (collinear)
    )
    assert np.allclose(mesh.face_areas, [2.0, 0.0])
    assert np.allclose(mesh.face_normals[0], [0.0, 0.0, 1.0])
    assert np.allclose(mesh.face_normals[1], 0.0)


def test_edges_and_lengths_tetrahedron():
    mesh = tetrahedron()
    assert len(mesh.unique_edges) == 6
    lengths = np.linalg.norm(
        mesh.vertices[mesh.unique_edges[:, 0]] - mesh.vertices[mesh.unique_edges[:, 1]],
        axis=1,
    )
    expect = (3 * 1.0 + 3 * np.sqrt(2.0)) / 6.0
    assert abs(mesh.mean_edge_length - expect) < 1e-12
    assert abs(lengths.mean() - expect) < 1e-12


def test_with_vertices_keeps_faces():
    mesh = tetrahedron()
    moved = mesh.with_vertices(mesh.vertices + 1.0)
    assert moved.faces is not mesh.faces or np.array_equal(moved.faces, mesh.faces)
    assert np.array_equal(moved.faces, mesh.faces)
    assert np.allclose(moved.vertices, mesh.vertices + 1.0)


# ---------------------------------------------------------------------------
# cloud index


def test_knn_matches_brute_force(rng):
    pts = rng.normal(size=(120, 3))
    index = CloudIndex(PointCloud(pts))
    queries = rng.normal(size=(40, 3))
    dist, idx = index.knn(queries, k=7)
    for i, q in enumerate(queries):
        ref = brute_knn(pts, q, 7)
        assert np.array_equal(idx[i], ref)
        d_ref = np.linalg.norm(pts[ref] - q, axis=1)
        assert np.allclose(dist[i], d_ref, rtol=0, atol=1e-12)


def test_knn_exact_ties_lowest_index_first():
    pts = np.array(
        [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0],
            [2.0, 0.0, 0.0],
        ]
    )
    index = CloudIndex(PointCloud(pts))
    _, idx = index.knn(np.zeros((1, 3)), k=3)
    assert idx[0].tolist() == [0, 1, 2]
    _, idx = index.knn(np.zeros((1, 3)), k=5)
    assert idx[0].tolist() == [0, 1, 2, 3, 4]


def test_knn_k_bounds(rng):
    index = CloudIndex(PointCloud(rng.normal(size=(5, 3))))
    with pytest.raises(InvalidInputError):
        index.knn(np.zeros((1, 3)), k=0)
    with pytest.raises(InvalidInputError):
        index.knn(np.zeros((1, 3)), k=6)
    _, idx = index.knn(np.zeros((1, 3)), k=5)
    assert sorted(idx[0].tolist()) == [0, 1, 2, 3, 4]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 6))
def test_knn_property_sorted_and_exact(seed, k):
    r = np.random.default_rng(seed)
    pts = r.normal(size=(30, 3))
    index = CloudIndex(PointCloud(pts))
    q = r.normal(size=(3, 3))
    dist, idx = index.knn(q, k=k)
    assert (np.diff(dist, axis=1) >= 0).all()
    for i in range(3):
        assert np.array_equal(idx[i], brute_knn(pts, q[i], k))


# ---------------------------------------------------------------------------
# mesh index


@pytest.mark.parametrize("backend", ["python", "compiled"])
def test_mesh_query_matches_brute(rng, backend):
    from ddm import HAVE_EXT

    if backend == "compiled" and not HAVE_EXT:
        pytest.skip("compiled extension not built")
    for mesh in (make_icosphere(1), triangle_soup(rng, 40)):
        index = MeshIndex(mesh, backend=backend)
        queries = rng.normal(scale=1.3, size=(60, 3))
        dist, foot, fid, bary = index.query(queries)
        for i, q in enumerate(queries):
            d2_ref, fid_ref, _ = brute_mesh_closest(mesh, q)
            assert abs(dist[i] ** 2 - d2_ref) < 1e-10
            recon = (bary[i][:, None] * mesh.vertices[mesh.faces[fid[i]]]).sum(axis=0)
            assert np.linalg.norm(recon - foot[i]) < 1e-9


def test_mesh_refit_tracks_moved_vertices(rng):
    mesh = make_icosphere(1)
    index = MeshIndex(mesh)
    moved = mesh.vertices * 1.5 + np.array([0.3, -0.1, 0.2])
    index.refit(moved)
    queries = rng.normal(size=(30, 3))
    dist, _, fid, _ = index.query(queries)
    moved_mesh = TriangleMesh(moved, mesh.faces)
    for i, q in enumerate(queries):
        d2_ref, _, _ = brute_mesh_closest(moved_mesh, q)
        assert abs(dist[i] ** 2 - d2_ref) < 1e-10


def test_mesh_refit_shape_check():
    mesh = tetrahedron()
    index = MeshIndex(mesh)
    with pytest.raises(InvalidInputError):
        index.refit(np.zeros((3, 3)))


def test_closest_point_on_mesh_single():
    mesh = tetrahedron()
    res = closest_point_on_mesh(mesh, np.array([0.25, 0.25, -1.0]))
    # below the z=0 face, the foot is straight up
    assert np.allclose(res.point, [0.25, 0.25, 0.0], atol=1e-12)


def test_build_index_dispatch(rng):
    cloud = PointCloud(rng.normal(size=(10, 3)))
    assert isinstance(build_index(cloud), CloudIndex)
    assert isinstance(build_index(tetrahedron()), MeshIndex)


def test_on_surface_queries_return_zero(rng):
    mesh = make_icosphere(1)
    samples = sample_surface(mesh, 50, rng)
    dist, _, _, _ = MeshIndex(mesh).query(samples.points)
    assert dist.max() < 1e-12


# ---------------------------------------------------------------------------
# sampling


def test_sampling_deterministic_and_on_surface():
    mesh = make_icosphere(2)
    a = sample_surface(mesh, 500, np.random.default_rng(7))
    b = sample_surface(mesh, 500, np.random.default_rng(7))
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(a.face_index, b.face_index)
    recon = np.einsum(
        "sk,skd->sd", a.bary, mesh.vertices[mesh.faces[a.face_index]]
    )
    assert np.abs(recon - a.points).max() < 1e-12
    assert np.abs(a.bary.sum(axis=1) - 1.0).max() < 1e-12


def test_sampling_area_weighted(rng):
    # two faces with a 9:1 area ratio
    mesh = TriangleMesh(
        np.array(
            [
                [0.0, 0.0, 0.0],
                [3.0, 0.0, 0.0],
                [0.0, 3.0, 0.0],
                [10.0, 0.0, 0.0],
                [11.0, 0.0, 0.0],
                [10.0, 1.0, 0.0],
            ]
        ),
        np.array([[0, 1, 2], [3, 4, 5]]),
    )
    samples = sample_surface(mesh, 20000, rng)
    frac = (samples.face_index == 0).mean()
    assert abs(frac - 0.9) < 0.02


def test_sample_points_on_mesh_returns_cloud(rng):
    cloud = sample_points_on_mesh(make_icosphere(1), 100, rng)
    assert isinstance(cloud, PointCloud)
    assert cloud.points.shape == (100, 3)
    assert np.abs(np.linalg.norm(cloud.points, axis=1) - 1.0).max() < 0.2


# ---------------------------------------------------------------------------
# geodesics and graph utilities


def _bellman_ford(mesh, source):
    # independent of the csgraph path the library uses
    n = len(mesh.vertices)
    dist = np.full(n, np.inf)
    dist[source] = 0.0
    edges = mesh.unique_edges
    w = np.linalg.norm(mesh.vertices[edges[:, 0]] - mesh.vertices[edges[:, 1]], axis=1)
    for _ in range(n):
        changed = False
        for (a, b), ww in zip(edges, w):
            if dist[a] + ww < dist[b]:
                dist[b] = dist[a] + ww
                changed = True
            if dist[b] + ww < dist[a]:
                dist[a] = dist[b] + ww
                changed = True
        if not changed:
            break
    return dist


def test_geodesic_matches_bellman_ford():
    mesh = make_icosphere(1)
    ref = _bellman_ford(mesh, 0)
    got = geodesic_distances(mesh, 0)
    for v, d in got.items():
        assert abs(d - ref[v]) < 1e-12
    full = geodesic_distance_matrix(mesh, np.array([0]))
    assert np.allclose(full[0], ref)


def test_geodesic_cutoff_limits_reach():
    mesh = make_icosphere(1)
    ref = _bellman_ford(mesh, 3)
    cut = 0.9
    got = geodesic_distances(mesh, 3, cutoff=cut)
    for v, d in ref_items(ref):
        if d <= cut - 1e-9:
            assert v in got
    for v, d in got.items():
        assert d <= cut + 1e-9


def ref_items(arr):
    return [(i, float(v)) for i, v in enumerate(arr) if np.isfinite(v)]


def test_vertex_mean_incident_edge_length():
    mesh = tetrahedron()
    lengths = vertex_mean_incident_edge_length(mesh.vertices, mesh.unique_edges)
    # vertex 0 touches three unit edges; each other vertex touches one
    # unit edge and two sqrt(2) edges
    assert abs(lengths[0] - 1.0) < 1e-12
    assert abs(lengths[1] - (1.0 + 2.0 * np.sqrt(2.0)) / 3.0) < 1e-12


def test_combinatorial_laplacian_structure():
    mesh = tetrahedron()
    lap = combinatorial_laplacian(len(mesh.vertices), mesh.unique_edges).toarray()
    assert np.allclose(lap.sum(axis=1), 0.0)
    assert np.allclose(lap, lap.T)
    assert np.allclose(np.diag(lap), 3.0)  # every tetra vertex has degree 3


# ---------------------------------------------------------------------------
# shapes


def test_icosphere_closed_and_unit():
    mesh = make_icosphere(2)
    assert np.abs(np.linalg.norm(mesh.vertices, axis=1) - 1.0).max() < 1e-12
    edge_count = {}
    for f in mesh.faces:
        for e in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            key = (min(e), max(e))
            edge_count[key] = edge_count.get(key, 0) + 1
    assert set(edge_count.values()) == {2}
    # Euler characteristic of a sphere
    assert len(mesh.vertices) - len(edge_count) + len(mesh.faces) == 2


def test_cube_closed_and_sized():
    mesh = make_cube(2.0, 4)
    assert np.abs(mesh.vertices).max() == 1.0
    edge_count = {}
    for f in mesh.faces:
        for e in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            key = (min(e), max(e))
            edge_count[key] = edge_count.get(key, 0) + 1
    assert set(edge_count.values()) == {2}
    assert abs(mesh.face_areas.sum() - 24.0) < 1e-9


def test_grid_sheet_open():
    mesh = make_grid_sheet(4, 4, (1.0, 1.0))
    assert np.allclose(mesh.vertices[:, 2], 0.0)
    # nx x ny quads, two triangles each
    assert len(mesh.faces) == 2 * 4 * 4
    assert len(mesh.vertices) == 5 * 5
