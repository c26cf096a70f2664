import numpy as np
import pytest

from aros.errors import BodyOutsideGrid, ChecksumMismatch, FormatVersionMismatch
from aros.geometry.bvh import signed_distances
from aros.geometry.mesh import box_mesh
from aros.geometry.sdf import SdfGrid, compute_sdf, load_sdf, save_sdf

from tests.oracles import brute_closest_point


def test_icosphere_center_value(unit_icosphere):
    grid = compute_sdf(unit_icosphere, dims=(64, 64, 64), padding=0.3)
    center = grid.interpolate(np.zeros((1, 3)))[0]
    assert center == pytest.approx(-1.0, abs=0.05)


def test_exterior_corner_positive(unit_icosphere):
    grid = compute_sdf(unit_icosphere, dims=(32, 32, 32), padding=0.3)
    assert grid.values[0, 0, 0] > 0
    assert grid.values[-1, -1, -1] > 0


def test_unsigned_matches_closest_point_oracle(bumpy_mesh):
    grid = compute_sdf(bumpy_mesh, dims=(24, 24, 24), padding=0.2)
    rng = np.random.default_rng(17)
    nx, ny, nz = grid.dims
    for _ in range(200):
        idx = (rng.integers(nx), rng.integers(ny), rng.integers(nz))
        node = grid.origin + np.array(idx) * grid.cell_size
        _, expected, _ = brute_closest_point(bumpy_mesh, node)
        assert abs(abs(grid.values[idx]) - expected) <= grid.cell_diagonal


def test_closed_mesh_sign_convention(unit_icosphere):
    grid = compute_sdf(unit_icosphere, dims=(48, 48, 48), padding=0.4)
    diag = grid.cell_diagonal
    rng = np.random.default_rng(23)
    dirs = rng.normal(size=(200, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = rng.uniform(0.05, 1.3, size=200)
    pts = dirs * radii[:, None]
    vals = grid.interpolate(pts)
    for r, v in zip(radii, vals):
        if r < 1.0 - diag:
            assert v < 0
        elif r > 1.0 + diag:
            assert v > 0


def test_grid_covers_padded_bounds(bumpy_mesh):
    pad = 0.25
    grid = compute_sdf(bumpy_mesh, dims=(16, 16, 16), padding=pad)
    lo, hi = bumpy_mesh.bounds
    assert (grid.origin <= lo - pad + 1e-12).all()
    assert (grid.max_corner >= hi + pad - 1e-12).all()


def test_dims_minimum():
    with pytest.raises(ValueError):
        compute_sdf(box_mesh((1, 1, 1)), dims=(4, 4, 4))


def test_interpolation_at_nodes_is_exact(bumpy_mesh):
    grid = compute_sdf(bumpy_mesh, dims=(12, 12, 12), padding=0.2)
    rng = np.random.default_rng(3)
    for _ in range(64):
        idx = tuple(rng.integers(0, d) for d in grid.dims)
        node = grid.origin + np.array(idx) * grid.cell_size
        assert grid.interpolate(node[None])[0] == grid.values[idx]


def test_outside_grid_raises(bumpy_mesh):
    grid = compute_sdf(bumpy_mesh, dims=(12, 12, 12), padding=0.1)
    with pytest.raises(BodyOutsideGrid):
        grid.interpolate(grid.origin[None] - 1.0)
    # clamped evaluation is allowed
    v = grid.interpolate(grid.origin[None] - 1.0, clamp=True)
    assert np.isfinite(v[0])


def test_gradient_matches_plane_slope(unit_square):
    grid = compute_sdf(unit_square, dims=(16, 16, 16), padding=0.3)
    g = grid.gradient(np.array([[0.0, 0.0, 0.2]]))[0]
    assert g[2] == pytest.approx(1.0, abs=1e-3)
    assert abs(g[0]) < 1e-3 and abs(g[1]) < 1e-3


def test_cache_roundtrip_bit_exact(tmp_path, bumpy_mesh):
    grid = compute_sdf(bumpy_mesh, dims=(16, 16, 16), padding=0.2)
    path = tmp_path / "grid.sdf"
    save_sdf(grid, path)
    loaded = load_sdf(path)
    assert np.array_equal(loaded.values, grid.values)
    assert np.array_equal(loaded.origin, grid.origin)
    assert loaded.cell_size == grid.cell_size
    assert loaded.dims == grid.dims


def test_cache_truncation_detected(tmp_path, bumpy_mesh):
    grid = compute_sdf(bumpy_mesh, dims=(12, 12, 12), padding=0.2)
    path = tmp_path / "grid.sdf"
    save_sdf(grid, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-40])
    with pytest.raises(ChecksumMismatch):
        load_sdf(path)


def test_cache_bad_magic(tmp_path):
    path = tmp_path / "bad.sdf"
    path.write_bytes(b"NOTANSDF" + b"\x00" * 64)
    with pytest.raises(FormatVersionMismatch):
        load_sdf(path)


def test_open_scan_negative_behind_surface(unit_square):
    sd = signed_distances(unit_square, [[0.0, 0.0, -0.3], [0.0, 0.0, 0.3]])
    assert sd[0] == pytest.approx(-0.3, abs=1e-9)
    assert sd[1] == pytest.approx(0.3, abs=1e-9)
