import numpy as np
import pytest

from aros.errors import DegenerateMesh, ParseError
from aros.geometry.mesh import TriangleMesh, box_mesh, grid_mesh, icosphere
from aros.geometry.meshio import load_mesh, save_mesh

CUBE_OBJ = """\
# unit cube
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
"""


def test_load_obj_unit_cube(tmp_path):
    path = tmp_path / "cube.obj"
    path.write_text(CUBE_OBJ)
    mesh = load_mesh(path)
    assert mesh.n_vertices == 8
    assert mesh.n_faces == 12
    norms = np.linalg.norm(mesh.vertex_normals, axis=1)
    assert np.abs(norms - 1.0).max() < 1e-6


def test_load_obj_out_of_range_index(tmp_path):
    path = tmp_path / "bad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 10\n")
    with pytest.raises(ParseError) as exc:
        load_mesh(path)
    assert exc.value.line == 4


def test_load_obj_bad_float(tmp_path):
    path = tmp_path / "bad.obj"
    path.write_text("v 0 zero 0\n")
    with pytest.raises(ParseError):
        load_mesh(path)


def test_load_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_mesh(tmp_path / "nope.obj")


def test_load_zero_faces(tmp_path):
    path = tmp_path / "points.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\n")
    with pytest.raises(DegenerateMesh):
        load_mesh(path)


def test_scanlike_fixture_ply(tmp_path):
    """A procedurally generated 50k-face scan loads with unit normals."""
    rng = np.random.default_rng(3)
    base = grid_mesh(4.0, 4.0, nx=158, ny=158)
    v = base.vertices.copy()
    v[:, 2] += 0.2 * np.sin(2 * v[:, 0]) * np.sin(3 * v[:, 1])
    v += rng.normal(scale=1e-3, size=v.shape)
    scan = TriangleMesh.from_arrays(v, base.faces)
    assert scan.n_faces >= 49_000
    path = tmp_path / "scan.ply"
    save_mesh(scan, path)
    loaded = load_mesh(path)
    assert loaded.n_faces == scan.n_faces
    assert np.abs(np.linalg.norm(loaded.vertex_normals, axis=1) - 1.0).max() < 1e-6


def test_binary_ply_roundtrip_bit_exact(tmp_path):
    mesh = icosphere(0.37, center=(0.1, -0.2, 0.33), subdivisions=2)
    p1 = tmp_path / "a.ply"
    save_mesh(mesh, p1)
    m1 = load_mesh(p1)
    assert np.array_equal(m1.vertices, mesh.vertices)
    assert np.array_equal(m1.faces, mesh.faces)
    p2 = tmp_path / "b.ply"
    save_mesh(m1, p2)
    m2 = load_mesh(p2)
    assert np.array_equal(m2.vertices, m1.vertices)
    assert np.array_equal(m2.faces, m1.faces)
    assert np.array_equal(m2.vertex_normals, m1.vertex_normals)


def test_ascii_ply_roundtrip(tmp_path):
    mesh = box_mesh((0.3, 0.4, 0.5))
    path = tmp_path / "box.ply"
    save_mesh(mesh, path, binary=False)
    loaded = load_mesh(path)
    assert loaded.n_faces == mesh.n_faces
    assert np.allclose(loaded.vertices, mesh.vertices)


def test_obj_roundtrip(tmp_path):
    mesh = box_mesh((0.3, 0.4, 0.5))
    path = tmp_path / "box.obj"
    save_mesh(mesh, path)
    loaded = load_mesh(path)
    assert loaded.n_faces == mesh.n_faces
    assert np.allclose(loaded.vertices, mesh.vertices)
    assert np.allclose(loaded.vertex_normals, mesh.vertex_normals, atol=1e-9)


def test_ply_vertex_scalars(tmp_path):
    mesh = grid_mesh(1.0, 1.0, nx=2, ny=2)
    res = np.linspace(0, 1, mesh.n_vertices).astype(np.float32)
    path = tmp_path / "scalars.ply"
    save_mesh(mesh, path, vertex_scalars={"equidist_residual": res})
    loaded = load_mesh(path)  # extra properties are skippable
    assert loaded.n_faces == mesh.n_faces


def test_quad_obj_fan_triangulation(tmp_path):
    path = tmp_path / "quad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    mesh = load_mesh(path)
    assert mesh.n_faces == 2


def test_degenerate_faces_dropped():
    verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0]], dtype=float)
    faces = np.array([[0, 1, 2], [0, 1, 3]])  # second face is collinear
    mesh = TriangleMesh.from_arrays(verts, faces)
    assert mesh.n_faces == 1
