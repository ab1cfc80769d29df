"""Surface file I/O (OBJ, PLY, XYZ) and JSON result records.

Text formats write coordinates with "%.9g", which round-trips to better
than 1e-6 relative. Binary PLY stores float64 and round-trips exactly.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from .errors import InvalidInputError, SurfaceFormatError
from .geometry import PointCloud, Surface, TriangleMesh
from .rigid import RigidTransform

_FLOAT = "%.9g"

# PLY scalar types we accept for vertex coordinates and face lists.
_PLY_FLOAT_TYPES = {"float": "<f4", "float32": "<f4", "double": "<f8", "float64": "<f8"}
_PLY_COUNT_TYPES = {"uchar": "<u1", "uint8": "<u1", "char": "<i1", "int8": "<i1"}
_PLY_INDEX_TYPES = {"int": "<i4", "int32": "<i4", "uint": "<u4", "uint32": "<u4"}


def load_surface(path: Union[str, Path]) -> Surface:
    """Load a mesh or point cloud; the format is picked by file extension."""
    path = Path(path)
    ext = path.suffix.lower()
    if ext == ".obj":
        return _load_obj(path)
    if ext == ".ply":
        return _load_ply(path)
    if ext == ".xyz":
        return _load_xyz(path)
    raise SurfaceFormatError(f"unsupported surface extension {ext!r}", path=str(path))


def save_surface(surface: Surface, path: Union[str, Path], binary: bool = False) -> None:
    """Write a surface; ``binary`` selects binary-little-endian PLY output."""
    path = Path(path)
    ext = path.suffix.lower()
    if ext == ".obj":
        _save_obj(surface, path)
    elif ext == ".ply":
        _save_ply(surface, path, binary=binary)
    elif ext == ".xyz":
        if isinstance(surface, TriangleMesh):
            raise InvalidInputError("xyz files cannot store faces; save the mesh as .obj or .ply")
        _save_xyz(surface, path)
    else:
        raise SurfaceFormatError(f"unsupported surface extension {ext!r}", path=str(path))


# ---------------------------------------------------------------------------
# OBJ


def _parse_obj_index(token: str, n_vertices: int, path: str, lineno: int) -> int:
    head = token.split("/", 1)[0]
    try:
        idx = int(head)
    except ValueError:
        raise SurfaceFormatError(f"bad face index {token!r}", path=path, line=lineno)
    if idx > 0:
        idx -= 1
    elif idx < 0:
        idx += n_vertices
    else:
        raise SurfaceFormatError("face index 0 is not valid in OBJ", path=path, line=lineno)
    if not 0 <= idx < n_vertices:
        raise SurfaceFormatError(
            f"face index {token!r} out of range for {n_vertices} vertices",
            path=path,
            line=lineno,
        )
    return idx


def _load_obj(path: Path) -> Surface:
    vertices = []
    faces = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            key = parts[0]
            if key == "v":
                if len(parts) < 4:
                    raise SurfaceFormatError(
                        "vertex line needs 3 coordinates", path=str(path), line=lineno
                    )
                try:
                    vertices.append((float(parts[1]), float(parts[2]), float(parts[3])))
                except ValueError:
                    raise SurfaceFormatError(
                        f"bad vertex coordinate in {line!r}", path=str(path), line=lineno
                    )
            elif key == "f":
                if len(parts) < 4:
                    raise SurfaceFormatError(
                        "face line needs at least 3 indices", path=str(path), line=lineno
                    )
                idx = [
                    _parse_obj_index(tok, len(vertices), str(path), lineno)
                    for tok in parts[1:]
                ]
                # fan-triangulate polygons
                for j in range(1, len(idx) - 1):
                    faces.append((idx[0], idx[j], idx[j + 1]))
            # vn/vt/s/o/g/usemtl/mtllib carry no geometry we use
    if not vertices:
        raise SurfaceFormatError("no vertices found", path=str(path))
    verts = np.asarray(vertices, dtype=np.float64)
    if not faces:
        return PointCloud(verts)
    return TriangleMesh(verts, np.asarray(faces, dtype=np.int64))


def _save_obj(surface: Surface, path: Path) -> None:
    lines = []
    for x, y, z in np.asarray(surface.points if isinstance(surface, PointCloud) else surface.vertices):
        lines.append("v %s %s %s" % (_FLOAT % x, _FLOAT % y, _FLOAT % z))
    if isinstance(surface, TriangleMesh):
        for a, b, c in surface.faces:
            lines.append("f %d %d %d" % (a + 1, b + 1, c + 1))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# PLY


class _PlyHeader:
    def __init__(self):
        self.fmt = None
        self.n_vertices = 0
        self.n_faces = 0
        self.vertex_dtypes = []  # per-property numpy dtype strings, in order
        self.vertex_names = []
        self.count_dtype = None
        self.index_dtype = None
        self.has_faces = False
        self.data_start = 0
        self.header_lines = 0


def _parse_ply_header(blob: bytes, path: str) -> _PlyHeader:
    hdr = _PlyHeader()
    end = blob.find(b"end_header")
    if end < 0:
        raise SurfaceFormatError("missing end_header", path=path)
    nl = blob.find(b"\n", end)
    if nl < 0:
        raise SurfaceFormatError("truncated header", path=path)
    hdr.data_start = nl + 1
    text = blob[:nl].decode("ascii", errors="replace")
    lines = text.splitlines()
    # the slice above keeps the end_header line, so this is the header size
    hdr.header_lines = len(lines)
    if not lines or lines[0].strip() != "ply":
        raise SurfaceFormatError("not a PLY file (missing 'ply' magic)", path=path, line=1)
    current = None
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts or parts[0] == "comment" or parts[0] == "obj_info":
            continue
        key = parts[0]
        if key == "format":
            if len(parts) < 3:
                raise SurfaceFormatError("malformed format line", path=path, line=lineno)
            if parts[1] not in ("ascii", "binary_little_endian"):
                raise SurfaceFormatError(
                    f"unsupported PLY format {parts[1]!r}", path=path, line=lineno
                )
            hdr.fmt = parts[1]
        elif key == "element":
            if len(parts) != 3:
                raise SurfaceFormatError("malformed element line", path=path, line=lineno)
            name = parts[1]
            try:
                count = int(parts[2])
            except ValueError:
                raise SurfaceFormatError("bad element count", path=path, line=lineno)
            if name == "vertex":
                hdr.n_vertices = count
                current = "vertex"
            elif name == "face":
                hdr.n_faces = count
                hdr.has_faces = True
                current = "face"
            else:
                if count > 0:
                    raise SurfaceFormatError(
                        f"unsupported PLY element {name!r}", path=path, line=lineno
                    )
                current = None
        elif key == "property":
            if current == "vertex":
                if len(parts) != 3 or parts[1] == "list":
                    raise SurfaceFormatError(
                        "vertex properties must be scalar x, y, z", path=path, line=lineno
                    )
                if parts[1] not in _PLY_FLOAT_TYPES:
                    raise SurfaceFormatError(
                        f"unsupported vertex property type {parts[1]!r}", path=path, line=lineno
                    )
                hdr.vertex_dtypes.append(_PLY_FLOAT_TYPES[parts[1]])
                hdr.vertex_names.append(parts[2])
            elif current == "face":
                if len(parts) != 5 or parts[1] != "list":
                    raise SurfaceFormatError(
                        "face element must have a single list property", path=path, line=lineno
                    )
                if parts[2] not in _PLY_COUNT_TYPES or parts[3] not in _PLY_INDEX_TYPES:
                    raise SurfaceFormatError(
                        f"unsupported face list types {parts[2]!r}/{parts[3]!r}",
                        path=path,
                        line=lineno,
                    )
                if parts[4] not in ("vertex_indices", "vertex_index"):
                    raise SurfaceFormatError(
                        f"unsupported face property {parts[4]!r}", path=path, line=lineno
                    )
                hdr.count_dtype = _PLY_COUNT_TYPES[parts[2]]
                hdr.index_dtype = _PLY_INDEX_TYPES[parts[3]]
            else:
                raise SurfaceFormatError(
                    "property outside vertex/face element", path=path, line=lineno
                )
        elif key == "end_header":
            break
        else:
            raise SurfaceFormatError(f"unknown header keyword {key!r}", path=path, line=lineno)
    if hdr.fmt is None:
        raise SurfaceFormatError("missing format line", path=path)
    if hdr.vertex_names != ["x", "y", "z"]:
        raise SurfaceFormatError(
            f"vertex properties must be exactly x, y, z (got {hdr.vertex_names})", path=path
        )
    if hdr.has_faces and hdr.n_faces > 0 and hdr.count_dtype is None:
        raise SurfaceFormatError("face element is missing its list property", path=path)
    return hdr


def _fan(idx, path, lineno=None):
    if len(idx) < 3:
        raise SurfaceFormatError("face needs at least 3 indices", path=path, line=lineno)
    return [(idx[0], idx[j], idx[j + 1]) for j in range(1, len(idx) - 1)]


def _load_ply(path: Path) -> Surface:
    blob = path.read_bytes()
    hdr = _parse_ply_header(blob, str(path))
    if hdr.fmt == "ascii":
        verts, faces = _read_ply_ascii(blob, hdr, str(path))
    else:
        verts, faces = _read_ply_binary(blob, hdr, str(path))
    if hdr.has_faces and hdr.n_faces > 0:
        return TriangleMesh(verts, np.asarray(faces, dtype=np.int64))
    return PointCloud(verts)


def _read_ply_ascii(blob: bytes, hdr: _PlyHeader, path: str):
    body = blob[hdr.data_start:].decode("ascii", errors="replace").splitlines()
    rows = [(i, ln.split()) for i, ln in enumerate(body) if ln.strip()]
    need = hdr.n_vertices + hdr.n_faces
    if len(rows) < need:
        raise SurfaceFormatError(
            f"expected {need} data rows, found {len(rows)}", path=path
        )
    verts = np.empty((hdr.n_vertices, 3), dtype=np.float64)
    for r in range(hdr.n_vertices):
        off, parts = rows[r]
        lineno = hdr.header_lines + off + 1
        if len(parts) != 3:
            raise SurfaceFormatError("vertex row needs 3 values", path=path, line=lineno)
        try:
            verts[r] = [float(parts[0]), float(parts[1]), float(parts[2])]
        except ValueError:
            raise SurfaceFormatError("bad vertex value", path=path, line=lineno)
    faces = []
    for r in range(hdr.n_faces):
        off, parts = rows[hdr.n_vertices + r]
        lineno = hdr.header_lines + off + 1
        try:
            count = int(parts[0])
            idx = [int(t) for t in parts[1:]]
        except ValueError:
            raise SurfaceFormatError("bad face value", path=path, line=lineno)
        if count != len(idx):
            raise SurfaceFormatError(
                f"face row declares {count} indices but has {len(idx)}", path=path, line=lineno
            )
        for tri in _fan(idx, path, lineno):
            faces.append(tri)
    return verts, faces


def _read_ply_binary(blob: bytes, hdr: _PlyHeader, path: str):
    vdtype = np.dtype(
        [(name, dt) for name, dt in zip(("x", "y", "z"), hdr.vertex_dtypes)]
    )
    offset = hdr.data_start
    need = vdtype.itemsize * hdr.n_vertices
    if len(blob) - offset < need:
        raise SurfaceFormatError("truncated vertex data", path=path)
    raw = np.frombuffer(blob, dtype=vdtype, count=hdr.n_vertices, offset=offset)
    verts = np.column_stack(
        [raw["x"].astype(np.float64), raw["y"].astype(np.float64), raw["z"].astype(np.float64)]
    )
    offset += need
    faces = []
    if hdr.has_faces and hdr.n_faces > 0:
        cdt = np.dtype(hdr.count_dtype)
        idt = np.dtype(hdr.index_dtype)
        for _ in range(hdr.n_faces):
            if len(blob) - offset < cdt.itemsize:
                raise SurfaceFormatError("truncated face data", path=path)
            count = int(np.frombuffer(blob, dtype=cdt, count=1, offset=offset)[0])
            offset += cdt.itemsize
            if len(blob) - offset < idt.itemsize * count:
                raise SurfaceFormatError("truncated face data", path=path)
            idx = np.frombuffer(blob, dtype=idt, count=count, offset=offset).tolist()
            offset += idt.itemsize * count
            for tri in _fan(idx, path):
                faces.append(tri)
    return verts, faces


def _save_ply(surface: Surface, path: Path, binary: bool) -> None:
    if isinstance(surface, TriangleMesh):
        verts, tris = surface.vertices, surface.faces
    else:
        verts, tris = surface.points, None
    fmt = "binary_little_endian" if binary else "ascii"
    header = ["ply", f"format {fmt} 1.0", f"element vertex {len(verts)}"]
    header += [f"property double {ax}" for ax in "xyz"]
    if tris is not None:
        header.append(f"element face {len(tris)}")
        header.append("property list uchar int vertex_indices")
    header.append("end_header")
    if binary:
        parts = [("\n".join(header) + "\n").encode("ascii")]
        parts.append(np.ascontiguousarray(verts, dtype="<f8").tobytes())
        if tris is not None:
            face_dtype = np.dtype([("n", "<u1"), ("idx", "<i4", (3,))])
            packed = np.empty(len(tris), dtype=face_dtype)
            packed["n"] = 3
            packed["idx"] = tris.astype("<i4")
            parts.append(packed.tobytes())
        path.write_bytes(b"".join(parts))
    else:
        lines = list(header)
        for x, y, z in verts:
            lines.append("%s %s %s" % (_FLOAT % x, _FLOAT % y, _FLOAT % z))
        if tris is not None:
            for a, b, c in tris:
                lines.append("3 %d %d %d" % (a, b, c))
        path.write_text("\n".join(lines) + "\n", encoding="ascii")


# ---------------------------------------------------------------------------
# XYZ


def _load_xyz(path: Path) -> PointCloud:
    pts = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 3:
                raise SurfaceFormatError("row needs 3 coordinates", path=str(path), line=lineno)
            try:
                pts.append((float(parts[0]), float(parts[1]), float(parts[2])))
            except ValueError:
                raise SurfaceFormatError("bad coordinate value", path=str(path), line=lineno)
    if not pts:
        raise SurfaceFormatError("no points found", path=str(path))
    return PointCloud(np.asarray(pts, dtype=np.float64))


def _save_xyz(cloud: PointCloud, path: Path) -> None:
    lines = [
        "%s %s %s" % (_FLOAT % x, _FLOAT % y, _FLOAT % z) for x, y, z in cloud.points
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# JSON records


def save_transform_json(
    path: Union[str, Path], transform: RigidTransform, provenance: Optional[dict] = None
) -> None:
    doc = {
        "rotation": [float(v) for v in np.asarray(transform.rotation).reshape(9)],
        "translation": [float(v) for v in np.asarray(transform.translation)],
    }
    if provenance:
        doc.update(provenance)
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_transform_json(path: Union[str, Path]) -> Tuple[RigidTransform, dict]:
    """Read a transform record; the rotation block is re-checked on load."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SurfaceFormatError(f"bad JSON: {exc}", path=str(path))
    if not isinstance(doc, dict) or "rotation" not in doc or "translation" not in doc:
        raise SurfaceFormatError("record needs 'rotation' and 'translation'", path=str(path))
    rot = np.asarray(doc["rotation"], dtype=np.float64)
    trans = np.asarray(doc["translation"], dtype=np.float64)
    if rot.shape != (9,):
        raise SurfaceFormatError("rotation must hold 9 row-major numbers", path=str(path))
    if trans.shape != (3,):
        raise SurfaceFormatError("translation must hold 3 numbers", path=str(path))
    try:
        transform = RigidTransform(rot.reshape(3, 3), trans)
    except InvalidInputError as exc:
        raise SurfaceFormatError(f"rotation block rejected: {exc}", path=str(path))
    meta = {k: v for k, v in doc.items() if k not in ("rotation", "translation")}
    return transform, meta


def save_flow_json(
    path: Union[str, Path],
    delta: np.ndarray,
    source: str,
    provenance: Optional[dict] = None,
) -> None:
    doc = {
        "flow": [[float(v) for v in row] for row in np.asarray(delta)],
        "source": source,
    }
    if provenance:
        doc.update(provenance)
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_flow_json(path: Union[str, Path]) -> Tuple[np.ndarray, dict]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SurfaceFormatError(f"bad JSON: {exc}", path=str(path))
    if not isinstance(doc, dict) or "flow" not in doc:
        raise SurfaceFormatError("record needs a 'flow' array", path=str(path))
    delta = np.asarray(doc["flow"], dtype=np.float64)
    if delta.ndim != 2 or delta.shape[1] != 3:
        raise SurfaceFormatError("flow must be an N x 3 array", path=str(path))
    meta = {k: v for k, v in doc.items() if k != "flow"}
    return delta, meta
