"""Property-based checks over the pure numeric kernels."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aros.descriptor import weighted_sample_without_replacement
from aros.detector import normal_gate
from aros.geometry.bvh import get_bvh
from aros.geometry.mesh import (RigidTransform, TriangleMesh, grid_mesh,
                                icosphere, min_enclosing_sphere)
from aros.geometry.sampling import poisson_disc_sample
from aros.geometry.sdf import compute_sdf
from aros.metrics import score_vertices

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@given(arrays(np.float64, st.integers(1, 60), elements=finite))
def test_score_vertices_bounds(values):
    m = score_vertices(values)
    assert 0.0 <= m.non_collision <= 1.0
    assert m.contact in (0, 1)
    assert m.collision_depth >= 0.0
    if m.contact == 0:
        assert m.collision_depth == 0.0


@given(arrays(np.float64, st.integers(1, 30), elements=finite),
       arrays(np.float64, st.integers(1, 30), elements=finite))
def test_score_vertices_decomposable(a, b):
    ma = score_vertices(a)
    mb = score_vertices(b)
    mc = score_vertices(np.concatenate([a, b]))
    n = len(a) + len(b)
    assert np.isclose(mc.non_collision,
                      (len(a) * ma.non_collision + len(b) * mb.non_collision) / n)
    assert mc.contact == int(ma.contact or mb.contact)


@given(st.floats(0, np.pi), st.floats(0.01, np.pi))
def test_normal_gate_matches_angle(angle, rho):
    n_train = np.array([0.0, 0.0, 1.0])
    n_test = np.array([np.sin(angle), 0.0, np.cos(angle)])
    expected = angle <= rho + 1e-12
    if abs(angle - rho) > 1e-9:  # away from the boundary the gate is exact
        assert normal_gate(n_test, n_train, rho) == expected


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-np.pi, np.pi),
       st.integers(0, 2**16))
def test_rigid_transforms_preserve_distances(tx, ty, theta, seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(12, 3))
    xf = RigidTransform(RigidTransform.rot_z(theta).rotation,
                        np.array([tx, ty, 0.1]))
    moved = xf.apply(pts)
    d0 = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
    d1 = np.linalg.norm(moved[:, None] - moved[None, :], axis=2)
    assert np.abs(d0 - d1).max() < 1e-9


@given(st.integers(0, 2**16), st.integers(5, 40))
def test_min_enclosing_sphere_contains_all(seed, n):
    pts = np.random.default_rng(seed).normal(size=(n, 3))
    c, r = min_enclosing_sphere(pts)
    d = np.linalg.norm(pts - c, axis=1)
    assert d.max() <= r * (1 + 1e-9) + 1e-12
    # minimality: strictly smaller spheres centred anywhere nearby fail
    assert d.max() >= r - 1e-6


@given(st.integers(0, 2**16))
@settings(max_examples=20, deadline=None)
def test_weighted_draw_is_permutation_free(seed):
    rng = np.random.default_rng(seed)
    weights = rng.random(20)
    pick = weighted_sample_without_replacement(weights, 8, rng)
    assert len(np.unique(pick)) == 8
    assert pick.min() >= 0 and pick.max() < 20


@given(st.integers(0, 2**16))
@settings(max_examples=10, deadline=None)
def test_poisson_seed_determinism(seed):
    mesh = grid_mesh(1.0, 1.0, nx=2, ny=2)
    a = poisson_disc_sample(mesh, 16, seed)
    b = poisson_disc_sample(mesh, 16, seed)
    assert np.array_equal(a.positions, b.positions)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**16))
def test_sdf_interpolation_within_cell_hull(seed):
    mesh = icosphere(0.5, subdivisions=1)
    grid = compute_sdf(mesh, dims=(10, 10, 10), padding=0.2)
    rng = np.random.default_rng(seed)
    pts = rng.uniform(grid.origin, grid.max_corner, size=(20, 3))
    vals = grid.interpolate(pts)
    assert (vals >= grid.values.min() - 1e-6).all()
    assert (vals <= grid.values.max() + 1e-6).all()


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**16))
def test_raycast_hit_lies_on_mesh(seed):
    mesh = icosphere(1.0, subdivisions=2)
    rng = np.random.default_rng(seed)
    origins = rng.normal(size=(20, 3)) * 2.5
    dirs = -origins / np.linalg.norm(origins, axis=1, keepdims=True)
    t, f = get_bvh(mesh).raycast(origins, dirs, np.full(20, 10.0))
    hits = f >= 0
    pts = origins[hits] + t[hits, None] * dirs[hits]
    d, _, _ = get_bvh(mesh).closest_point(pts)
    assert d.max() < 1e-9
