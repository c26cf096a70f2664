import numpy as np
import pytest
from scipy.spatial import cKDTree

from aros.config import IndexConfig
from aros.fixtures import FixtureKind, FixtureSpec, make_fixture
from aros.geometry.bvh import get_bvh
from aros.geometry.mesh import box_mesh, grid_mesh
from aros.geometry.sdf import grid_nodes
from aros.scene import (build_scene_index, generate_fillers, load_scene_index,
                        raw_sdf_grid, save_scene_index, tessellate_fillers)


@pytest.fixture(scope="module")
def floor():
    return grid_mesh(1.0, 1.0, nx=10, ny=10)


def test_floor_fillers_geometry(floor):
    fillers = generate_fillers(floor, radius=0.07, seed=3)
    assert len(fillers) > 0
    centers = np.array([f.center for f in fillers])
    # step 4: tangent spheres centred exactly r behind the surface
    assert np.abs(centers[:, 2] + 0.07).max() < 1e-6
    # step 1: separation ~6r/9
    spacing = 6 * 0.07 / 9
    d, _ = cKDTree(centers).query(centers, k=2)
    nn = d[:, 1]
    assert nn.min() >= spacing - 1e-6
    assert nn.mean() < 2.0 * spacing


def test_thin_closed_box_rejects_fillers():
    # interior thinner than 2r in every direction: the inward ray always
    # hits the far wall
    box = box_mesh((0.1, 0.1, 0.1), segments=2)
    fillers = generate_fillers(box, radius=0.07, seed=1)
    assert fillers == []


def test_fillers_stay_hidden(floor):
    """Rays that hit the raw scene are unchanged by augmentation."""
    spec = IndexConfig(filler_radii=(0.07,), sdf_dims=(24, 24, 24))
    index = build_scene_index(floor, spec, seed=2)
    assert len(index.fillers) > 0
    rng = np.random.default_rng(8)
    origins = np.column_stack([rng.uniform(-0.4, 0.4, (50, 2)),
                               np.full(50, 1.0)])
    dirs = np.tile([0.0, 0.0, -1.0], (50, 1))
    t_raw, f_raw = index.raycast(origins, dirs, np.full(50, 3.0), raw=True)
    t_aug, f_aug = index.raycast(origins, dirs, np.full(50, 3.0))
    assert np.allclose(t_raw, t_aug)  # the floor is hit first, never a filler
    assert np.allclose(t_aug, 1.0, atol=1e-9)


def test_augmented_contains_scene_unmodified(floor):
    spec = IndexConfig(filler_radii=(0.07,), sdf_dims=(24, 24, 24))
    index = build_scene_index(floor, spec, seed=2)
    n = floor.n_faces
    assert index.augmented.n_faces > n
    assert np.array_equal(index.augmented.triangles[:n], floor.triangles)


def test_holed_wall_ray_hits_filler():
    scene, _, _ = make_fixture(FixtureSpec(FixtureKind.HOLED_WALL,
                                           dimensions={"hole": 0.05}))
    cfg = IndexConfig(sdf_dims=(24, 24, 24))
    with_f = build_scene_index(scene, cfg, seed=4)
    without = build_scene_index(scene, IndexConfig(use_fillers=False,
                                                   sdf_dims=(24, 24, 24)), seed=4)
    origin = np.array([[0.0, 0.0, 1.0]])  # hole centre height, before the wall
    direction = np.array([[1.0, 0.0, 0.0]])
    t_raw, f_raw = without.raycast(origin, direction, [5.0])
    t_aug, f_aug = with_f.raycast(origin, direction, [5.0])
    wall_x = 0.7
    assert f_raw[0] < 0 or t_raw[0] > wall_x + 0.5  # slips through the hole
    assert f_aug[0] >= 0
    assert t_aug[0] <= wall_x + 2 * 0.07 + 1e-6  # caught within 2r


def test_augmented_sdf_pointwise_below_raw(floor):
    spec = IndexConfig(filler_radii=(0.07,), sdf_dims=(24, 24, 24))
    index = build_scene_index(floor, spec, seed=2)
    raw = raw_sdf_grid(index)
    assert (index.sdf.values <= raw.values + 1e-12).all()
    # beneath the floor the fillers cannot raise the field
    below = np.array([[0.0, 0.0, -0.10]])
    assert index.sdf.interpolate(below)[0] <= raw.interpolate(below)[0] + 1e-9


def test_filler_crop_drops_protrusions():
    """No tessellated filler triangle poking into visible free space."""
    scene, _, _ = make_fixture(FixtureSpec(FixtureKind.BOX_SEAT))
    fillers = generate_fillers(scene, 0.07, seed=5)
    mesh = tessellate_fillers(scene, fillers, subdivisions=2)
    sd = get_bvh(scene).signed_distance(mesh.vertices)
    assert sd.max() <= 1e-6


def test_determinism(floor):
    spec = IndexConfig(filler_radii=(0.07,), sdf_dims=(16, 16, 16))
    a = build_scene_index(floor, spec, seed=9)
    b = build_scene_index(floor, spec, seed=9)
    assert len(a.fillers) == len(b.fillers)
    assert np.array_equal(a.filler_centers, b.filler_centers)
    assert np.array_equal(a.sdf.values, b.sdf.values)


def test_cache_roundtrip(tmp_path, floor):
    spec = IndexConfig(filler_radii=(0.07,), sdf_dims=(16, 16, 16))
    index = build_scene_index(floor, spec, seed=9)
    save_scene_index(index, tmp_path / "idx")
    loaded = load_scene_index(tmp_path / "idx")
    assert loaded.scene.n_faces == index.scene.n_faces
    assert loaded.augmented.n_faces == index.augmented.n_faces
    assert len(loaded.fillers) == len(index.fillers)
    assert np.allclose(loaded.filler_centers, index.filler_centers, atol=1e-6)
    assert np.array_equal(loaded.sdf.values, index.sdf.values)
    assert np.array_equal(loaded.scene.vertices, index.scene.vertices)


def test_no_fillers_mode(floor):
    index = build_scene_index(floor, IndexConfig(use_fillers=False,
                                                 sdf_dims=(16, 16, 16)), seed=1)
    assert index.fillers == []
    assert index.augmented is floor
