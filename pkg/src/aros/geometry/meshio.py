"""OBJ and PLY mesh file reading/writing.

PLY support covers ASCII and little-endian binary; writes are binary with
float64 coordinates so load -> save -> load round-trips bit-exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import DegenerateMesh, ParseError
from .mesh import TriangleMesh, _unit

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def load_mesh(path) -> TriangleMesh:
    """Load an OBJ or PLY file into a TriangleMesh.

    Vertex normals are taken from the file when present, otherwise computed
    by area-weighted face averaging.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    suffix = path.suffix.lower()
    if suffix == ".obj":
        return _load_obj(path)
    if suffix == ".ply":
        return _load_ply(path)
    with path.open("rb") as fh:
        head = fh.read(4)
    if head.startswith(b"ply"):
        return _load_ply(path)
    return _load_obj(path)


def save_mesh(mesh: TriangleMesh, path, binary=True, vertex_scalars=None):
    """Write a PLY (binary little-endian by default) or OBJ file.

    vertex_scalars: optional {name: (V,) float array} extra PLY properties.
    """
    path = Path(path)
    if path.suffix.lower() == ".obj":
        _save_obj(mesh, path)
    else:
        _save_ply(mesh, path, binary=binary, vertex_scalars=vertex_scalars or {})


# --- OBJ -------------------------------------------------------------------


def _load_obj(path: Path) -> TriangleMesh:
    verts = []
    normals = []
    faces = []
    face_normal_ids = []
    with path.open("r", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise ParseError("vertex record needs 3 coordinates", lineno)
                try:
                    verts.append((float(parts[1]), float(parts[2]), float(parts[3])))
                except ValueError:
                    raise ParseError("bad vertex coordinate", lineno) from None
            elif tag == "vn":
                if len(parts) < 4:
                    raise ParseError("normal record needs 3 components", lineno)
                try:
                    normals.append((float(parts[1]), float(parts[2]), float(parts[3])))
                except ValueError:
                    raise ParseError("bad normal component", lineno) from None
            elif tag == "f":
                if len(parts) < 4:
                    raise ParseError("face record needs at least 3 vertices", lineno)
                vids = []
                nids = []
                for token in parts[1:]:
                    fields = token.split("/")
                    try:
                        vi = int(fields[0])
                    except ValueError:
                        raise ParseError(f"bad face index {token!r}", lineno) from None
                    vi = vi - 1 if vi > 0 else len(verts) + vi
                    if vi < 0 or vi >= len(verts):
                        raise ParseError(f"face index {fields[0]} out of range", lineno)
                    vids.append(vi)
                    if len(fields) == 3 and fields[2]:
                        try:
                            ni = int(fields[2])
                        except ValueError:
                            raise ParseError(f"bad normal index {token!r}", lineno) from None
                        ni = ni - 1 if ni > 0 else len(normals) + ni
                        if ni < 0 or ni >= len(normals):
                            raise ParseError(f"normal index {fields[2]} out of range", lineno)
                        nids.append(ni)
                    else:
                        nids.append(-1)
                for k in range(1, len(vids) - 1):
                    faces.append((vids[0], vids[k], vids[k + 1]))
                    face_normal_ids.append((nids[0], nids[k], nids[k + 1]))
    if not faces:
        raise DegenerateMesh(f"no faces in {path}")
    verts = np.asarray(verts, dtype=np.float64)
    vertex_normals = None
    if normals and any(n >= 0 for row in face_normal_ids for n in row):
        normals = np.asarray(normals, dtype=np.float64)
        acc = np.zeros_like(verts)
        for (a, b, c), (na, nb, nc) in zip(faces, face_normal_ids):
            for vid, nid in ((a, na), (b, nb), (c, nc)):
                if nid >= 0:
                    acc[vid] += normals[nid]
        if (np.linalg.norm(acc, axis=1) > 1e-12).all():
            vertex_normals = _unit(acc)
    return TriangleMesh.from_arrays(verts, np.asarray(faces, dtype=np.int64),
                                    vertex_normals)


def _save_obj(mesh: TriangleMesh, path: Path):
    with path.open("w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for n in mesh.vertex_normals:
            fh.write(f"vn {float(n[0])!r} {float(n[1])!r} {float(n[2])!r}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0]+1}//{f[0]+1} {f[1]+1}//{f[1]+1} {f[2]+1}//{f[2]+1}\n")


# --- PLY -------------------------------------------------------------------


def _load_ply(path: Path) -> TriangleMesh:
    with path.open("rb") as fh:
        magic = fh.readline()
        if not magic.strip().startswith(b"ply"):
            raise ParseError("not a PLY file", 1)
        fmt = None
        elements = []  # (name, count, [(prop_name, dtype | ('list', count_t, item_t))])
        lineno = 1
        while True:
            line = fh.readline()
            lineno += 1
            if not line:
                raise ParseError("unterminated PLY header", lineno)
            tokens = line.decode("ascii", errors="replace").strip().split()
            if not tokens or tokens[0] == "comment":
                continue
            if tokens[0] == "format":
                fmt = tokens[1]
                if fmt not in ("ascii", "binary_little_endian"):
                    raise ParseError(f"unsupported PLY format {fmt!r}", lineno)
            elif tokens[0] == "element":
                elements.append([tokens[1], int(tokens[2]), []])
            elif tokens[0] == "property":
                if not elements:
                    raise ParseError("property before element", lineno)
                if tokens[1] == "list":
                    if tokens[2] not in _PLY_TYPES or tokens[3] not in _PLY_TYPES:
                        raise ParseError("unknown PLY list types", lineno)
                    elements[-1][2].append(
                        (tokens[4], ("list", _PLY_TYPES[tokens[2]], _PLY_TYPES[tokens[3]])))
                else:
                    if tokens[1] not in _PLY_TYPES:
                        raise ParseError(f"unknown PLY type {tokens[1]!r}", lineno)
                    elements[-1][2].append((tokens[2], _PLY_TYPES[tokens[1]]))
            elif tokens[0] == "end_header":
                break
        if fmt is None:
            raise ParseError("PLY header missing format line", lineno)

        data = {}
        if fmt == "ascii":
            text = fh.read().decode("ascii", errors="replace").split()
            pos = 0
            for name, count, props in elements:
                rows = []
                for _ in range(count):
                    row = {}
                    for pname, ptype in props:
                        if isinstance(ptype, tuple):
                            n = int(float(text[pos])); pos += 1
                            row[pname] = [float(text[pos + i]) for i in range(n)]
                            pos += n
                        else:
                            row[pname] = float(text[pos]); pos += 1
                    rows.append(row)
                data[name] = rows
        else:
            for name, count, props in elements:
                fixed = all(not isinstance(pt, tuple) for _, pt in props)
                if fixed:
                    dt = np.dtype([(pname, "<" + pt) for pname, pt in props])
                    arr = np.frombuffer(fh.read(dt.itemsize * count), dtype=dt, count=count)
                    data[name] = arr
                else:
                    rows = []
                    for _ in range(count):
                        row = {}
                        for pname, ptype in props:
                            if isinstance(ptype, tuple):
                                _, count_t, item_t = ptype
                                cdt = np.dtype("<" + count_t)
                                n = int(np.frombuffer(fh.read(cdt.itemsize), dtype=cdt)[0])
                                idt = np.dtype("<" + item_t)
                                row[pname] = np.frombuffer(
                                    fh.read(idt.itemsize * n), dtype=idt, count=n)
                            else:
                                pdt = np.dtype("<" + ptype)
                                row[pname] = np.frombuffer(fh.read(pdt.itemsize), dtype=pdt)[0]
                        rows.append(row)
                    data[name] = rows

    if "vertex" not in data:
        raise ParseError("PLY file has no vertex element", 0)
    vrows = data["vertex"]
    if isinstance(vrows, np.ndarray):
        verts = np.column_stack([vrows["x"], vrows["y"], vrows["z"]]).astype(np.float64)
        names = vrows.dtype.names
        normals = None
        if all(k in names for k in ("nx", "ny", "nz")):
            normals = np.column_stack([vrows["nx"], vrows["ny"], vrows["nz"]]).astype(np.float64)
    else:
        verts = np.array([[r["x"], r["y"], r["z"]] for r in vrows], dtype=np.float64)
        normals = None
        if vrows and all(k in vrows[0] for k in ("nx", "ny", "nz")):
            normals = np.array([[r["nx"], r["ny"], r["nz"]] for r in vrows], dtype=np.float64)

    faces = []
    for row in data.get("face", []):
        idx = row["vertex_indices"] if "vertex_indices" in row else row["vertex_index"]
        idx = [int(i) for i in idx]
        for i in idx:
            if i < 0 or i >= len(verts):
                raise ParseError(f"face index {i} out of range", 0)
        for k in range(1, len(idx) - 1):
            faces.append((idx[0], idx[k], idx[k + 1]))
    if not faces:
        raise DegenerateMesh(f"no faces in {path}")
    if normals is not None and (np.linalg.norm(normals, axis=1) < 1e-12).any():
        normals = None
    return TriangleMesh.from_arrays(verts, np.asarray(faces, dtype=np.int64), normals)


def _save_ply(mesh: TriangleMesh, path: Path, binary: bool, vertex_scalars: dict):
    scalar_items = [(k, np.asarray(v, dtype=np.float32)) for k, v in vertex_scalars.items()]
    header = ["ply",
              "format binary_little_endian 1.0" if binary else "format ascii 1.0",
              f"element vertex {mesh.n_vertices}"]
    header += [f"property double {k}" for k in ("x", "y", "z", "nx", "ny", "nz")]
    header += [f"property float {k}" for k, _ in scalar_items]
    header += [f"element face {mesh.n_faces}",
               "property list uchar int vertex_indices",
               "end_header"]
    with path.open("wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            vdt = [(k, "<f8") for k in ("x", "y", "z", "nx", "ny", "nz")]
            vdt += [(k, "<f4") for k, _ in scalar_items]
            varr = np.empty(mesh.n_vertices, dtype=np.dtype(vdt))
            for i, k in enumerate(("x", "y", "z")):
                varr[k] = mesh.vertices[:, i]
            for i, k in enumerate(("nx", "ny", "nz")):
                varr[k] = mesh.vertex_normals[:, i]
            for k, v in scalar_items:
                varr[k] = v
            fh.write(varr.tobytes())
            fdt = np.dtype([("n", "u1"), ("a", "<i4"), ("b", "<i4"), ("c", "<i4")])
            farr = np.empty(mesh.n_faces, dtype=fdt)
            farr["n"] = 3
            farr["a"] = mesh.faces[:, 0]
            farr["b"] = mesh.faces[:, 1]
            farr["c"] = mesh.faces[:, 2]
            fh.write(farr.tobytes())
        else:
            for i in range(mesh.n_vertices):
                row = list(mesh.vertices[i]) + list(mesh.vertex_normals[i])
                row += [float(v[i]) for _, v in scalar_items]
                fh.write((" ".join(repr(float(x)) for x in row) + "\n").encode("ascii"))
            for f in mesh.faces:
                fh.write(f"3 {f[0]} {f[1]} {f[2]}\n".encode("ascii"))
