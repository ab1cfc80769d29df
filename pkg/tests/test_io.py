"""Surface and record file formats: OBJ, PLY, XYZ, JSON transforms and flows."""

import numpy as np
import pytest

from ddm.errors import InvalidInputError, SurfaceFormatError
from ddm.geometry import PointCloud, TriangleMesh
from ddm.io import (
    load_flow_json,
    load_surface,
    load_transform_json,
    save_flow_json,
    save_surface,
    save_transform_json,
)
from ddm.rigid import RigidTransform
from ddm.rotation import so3_exp
from ddm.shapes import make_icosphere

from conftest import tetrahedron


# ------------------------------------------------------------------------- OBJ


def test_obj_mesh_round_trip(tmp_path):
    mesh = tetrahedron()
    p = tmp_path / "tet.obj"
    save_surface(mesh, p)
    back = load_surface(p)
    assert isinstance(back, TriangleMesh)
    assert np.array_equal(back.faces, mesh.faces)
    assert np.abs(back.vertices - mesh.vertices).max() == 0.0


def test_obj_round_trip_preserves_9_digits(tmp_path):
    v = np.array([[0.123456789, -1.23456789e-4, 3.14159265],
                  [1.0, 2.0, 3.0],
                  [0.1, 0.2, 0.3],
                  [7.0, 8.0, 9.0]])
    mesh = TriangleMesh(v, np.array([[0, 1, 2], [0, 1, 3]]))
    p = tmp_path / "m.obj"
    save_surface(mesh, p)
    back = load_surface(p)
    assert np.abs(back.vertices - v).max() < 1e-8


def test_obj_polygon_fan_triangulation(tmp_path):
    p = tmp_path / "quad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    mesh = load_surface(p)
    assert np.array_equal(mesh.faces, [[0, 1, 2], [0, 2, 3]])


def test_obj_negative_and_slash_indices(tmp_path):
    p = tmp_path / "neg.obj"
    p.write_text(
        "v 0 0 0\nv 1 0 0\nv 0 1 0\n"
        "f -3/1/1 -2/2/2 -1/3/3\n"
    )
    mesh = load_surface(p)
    assert np.array_equal(mesh.faces, [[0, 1, 2]])


def test_obj_without_faces_is_point_cloud(tmp_path):
    p = tmp_path / "pts.obj"
    p.write_text("v 0 0 0\nv 1 2 3\n# comment\nvn 0 0 1\n")
    cloud = load_surface(p)
    assert isinstance(cloud, PointCloud)
    assert cloud.n == 2


def test_obj_bad_vertex_line_reports_position(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0 0\nv 1 oops 0\n")
    with pytest.raises(SurfaceFormatError) as err:
        load_surface(p)
    assert "bad.obj:2" in str(err.value)


def test_obj_face_index_out_of_range(tmp_path):
    p = tmp_path / "oob.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
    with pytest.raises(SurfaceFormatError) as err:
        load_surface(p)
    assert "oob.obj:4" in str(err.value)


# ------------------------------------------------------------------------- PLY


def test_ply_ascii_point_cloud(tmp_path):
    p = tmp_path / "c.ply"
    p.write_text(
        "ply\nformat ascii 1.0\nelement vertex 3\n"
        "property float x\nproperty float y\nproperty float z\n"
        "end_header\n0 0 0\n1 0 0\n0 1 0\n"
    )
    cloud = load_surface(p)
    assert isinstance(cloud, PointCloud)
    assert np.array_equal(cloud.points, [[0, 0, 0], [1, 0, 0], [0, 1, 0]])


def test_ply_ascii_mesh_round_trip(tmp_path):
    mesh = make_icosphere(1)
    p = tmp_path / "s.ply"
    save_surface(mesh, p)
    back = load_surface(p)
    assert isinstance(back, TriangleMesh)
    assert np.array_equal(back.faces, mesh.faces)
    # text output keeps 9 significant digits
    assert np.abs(back.vertices - mesh.vertices).max() < 1e-8


def test_ply_binary_round_trip_byte_identical(tmp_path):
    mesh = make_icosphere(1)
    p1 = tmp_path / "a.ply"
    p2 = tmp_path / "b.ply"
    save_surface(mesh, p1, binary=True)
    back = load_surface(p1)
    # doubles survive a binary round trip exactly
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.faces, mesh.faces)
    save_surface(back, p2, binary=True)
    assert p1.read_bytes() == p2.read_bytes()


def test_ply_quad_faces_are_fanned(tmp_path):
    p = tmp_path / "q.ply"
    p.write_text(
        "ply\nformat ascii 1.0\nelement vertex 4\n"
        "property double x\nproperty double y\nproperty double z\n"
        "element face 1\nproperty list uchar int vertex_indices\n"
        "end_header\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n"
    )
    mesh = load_surface(p)
    assert np.array_equal(mesh.faces, [[0, 1, 2], [0, 2, 3]])


def test_ply_rejects_missing_xyz(tmp_path):
    p = tmp_path / "nx.ply"
    p.write_text(
        "ply\nformat ascii 1.0\nelement vertex 1\n"
        "property float x\nproperty float y\n"
        "end_header\n0 0\n"
    )
    with pytest.raises(SurfaceFormatError):
        load_surface(p)


def test_ply_rejects_unknown_element(tmp_path):
    p = tmp_path / "uk.ply"
    p.write_text(
        "ply\nformat ascii 1.0\nelement vertex 1\n"
        "property float x\nproperty float y\nproperty float z\n"
        "element edge 2\nproperty int vertex1\nproperty int vertex2\n"
        "end_header\n0 0 0\n0 1\n1 0\n"
    )
    with pytest.raises(SurfaceFormatError):
        load_surface(p)


def test_ply_ascii_bad_row_reports_line(tmp_path):
    p = tmp_path / "row.ply"
    p.write_text(
        "ply\nformat ascii 1.0\nelement vertex 2\n"
        "property float x\nproperty float y\nproperty float z\n"
        "end_header\n0 0 0\n1 nope 0\n"
    )
    with pytest.raises(SurfaceFormatError) as err:
        load_surface(p)
    # seven header lines, then two data rows; the bad one is file line 9
    assert "row.ply:9" in str(err.value)


def test_ply_binary_truncated_payload(tmp_path):
    mesh = tetrahedron()
    p = tmp_path / "t.ply"
    save_surface(mesh, p, binary=True)
    blob = p.read_bytes()
    p.write_bytes(blob[:-7])
    with pytest.raises(SurfaceFormatError):
        load_surface(p)


# ------------------------------------------------------------------------- XYZ


def test_xyz_round_trip(tmp_path):
    cloud = PointCloud([[0.5, -1.25, 2.0], [3.5, 4.0, -0.125]])
    p = tmp_path / "c.xyz"
    save_surface(cloud, p)
    back = load_surface(p)
    assert isinstance(back, PointCloud)
    assert np.abs(back.points - cloud.points).max() == 0.0


def test_xyz_refuses_mesh(tmp_path):
    with pytest.raises(InvalidInputError):
        save_surface(tetrahedron(), tmp_path / "m.xyz")


def test_xyz_bad_column_count(tmp_path):
    p = tmp_path / "b.xyz"
    p.write_text("0 0 0\n1 2\n")
    with pytest.raises(SurfaceFormatError) as err:
        load_surface(p)
    assert "b.xyz:2" in str(err.value)


def test_unknown_extension(tmp_path):
    with pytest.raises(SurfaceFormatError):
        load_surface(tmp_path / "surface.stl")
    with pytest.raises(SurfaceFormatError):
        save_surface(PointCloud(np.zeros((1, 3))), tmp_path / "surface.stl")


# ----------------------------------------------------------------------- JSON


def test_transform_json_round_trip(tmp_path):
    t = RigidTransform(so3_exp(np.array([0.1, -0.2, 0.3])), np.array([1.0, 2.0, 3.0]))
    p = tmp_path / "t.json"
    save_transform_json(p, t, provenance={"task": "demo", "seed": 7})
    back, meta = load_transform_json(p)
    assert np.array_equal(back.rotation, t.rotation)
    assert np.array_equal(back.translation, t.translation)
    assert meta == {"task": "demo", "seed": 7}


def test_transform_json_rejects_non_rotation(tmp_path):
    p = tmp_path / "bad.json"
    doc = {
        "rotation": [2.0, 0, 0, 0, 1, 0, 0, 0, 1],
        "translation": [0.0, 0.0, 0.0],
    }
    import json

    p.write_text(json.dumps(doc))
    with pytest.raises(SurfaceFormatError):
        load_transform_json(p)


def test_transform_json_rejects_malformed(tmp_path):
    p = tmp_path / "nojson.json"
    p.write_text("{not json")
    with pytest.raises(SurfaceFormatError):
        load_transform_json(p)
    p2 = tmp_path / "short.json"
    p2.write_text('{"rotation": [1, 0, 0], "translation": [0, 0, 0]}')
    with pytest.raises(SurfaceFormatError):
        load_transform_json(p2)


def test_flow_json_round_trip(tmp_path):
    delta = np.array([[0.1, 0.2, 0.3], [-0.4, 0.5, -0.6]])
    p = tmp_path / "f.json"
    save_flow_json(p, delta, source="src.xyz", provenance={"iterations": 12})
    back, meta = load_flow_json(p)
    assert np.array_equal(back, delta)
    assert meta["source"] == "src.xyz"
    assert meta["iterations"] == 12


def test_flow_json_rejects_bad_shape(tmp_path):
    p = tmp_path / "bad.json"
    import json

    p.write_text(json.dumps({"flow": [[1.0, 2.0]]}))
    with pytest.raises(SurfaceFormatError):
        load_flow_json(p)
