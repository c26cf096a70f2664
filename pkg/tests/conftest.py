"""Shared fixtures. Heavy artifacts (trained descriptors, scene indexes) are
session-scoped so the pipeline is exercised once and inspected many times.
"""

import numpy as np
import pytest

from aros.config import IndexConfig, TrainConfig
from aros.descriptor import train
from aros.fixtures import FixtureKind, FixtureSpec, make_fixture
from aros.geometry.mesh import TriangleMesh, grid_mesh, icosphere
from aros.scene import build_scene_index

FAST_INDEX = IndexConfig(filler_radii=(0.07,), sdf_dims=(96, 96, 96))


@pytest.fixture(scope="session")
def unit_square():
    """1 m x 1 m sheet at z = 0, normals +z."""
    return grid_mesh(1.0, 1.0, nx=2, ny=2)


@pytest.fixture(scope="session")
def bumpy_mesh():
    """Irregular 450-face open surface for oracle comparisons."""
    rng = np.random.default_rng(42)
    base = grid_mesh(2.0, 2.0, nx=15, ny=15)
    v = base.vertices.copy()
    v[:, 2] += 0.3 * np.sin(3 * v[:, 0]) * np.cos(2 * v[:, 1])
    v[:, 2] += 0.05 * rng.normal(size=len(v))
    return TriangleMesh.from_arrays(v, base.faces)


@pytest.fixture(scope="session")
def unit_icosphere():
    return icosphere(1.0, subdivisions=3)


@pytest.fixture(scope="session")
def parallel_squares():
    """Body sheet at z = 1 over an environment sheet at z = 0."""
    body = grid_mesh(1.0, 1.0, nx=4, ny=4, z=1.0)
    env = grid_mesh(1.0, 1.0, nx=4, ny=4, z=0.0)
    return body, env


@pytest.fixture(scope="session")
def box_seat_fixture():
    return make_fixture(FixtureSpec(FixtureKind.BOX_SEAT))


@pytest.fixture(scope="session")
def sit_bundle(box_seat_fixture):
    """(scene, body, p_train, descriptor, index) for the seated interaction."""
    scene, body, p_train = box_seat_fixture
    descriptor = train(body, scene, p_train, TrainConfig(label="sit"), seed=11)
    index = build_scene_index(scene, FAST_INDEX, seed=5)
    return scene, body, p_train, descriptor, index


@pytest.fixture(scope="session")
def stand_bundle():
    scene, body, p_train = make_fixture(FixtureSpec(FixtureKind.FLOOR_ONLY))
    descriptor = train(body, scene, p_train, TrainConfig(label="stand"), seed=7)
    index = build_scene_index(scene, FAST_INDEX, seed=5)
    return scene, body, p_train, descriptor, index


@pytest.fixture(scope="session")
def chair_ibs(box_seat_fixture):
    """Bisector surface for the seated mannequin (shared, expensive)."""
    from aros.ibs import build_ibs
    scene, body, _ = box_seat_fixture
    return build_ibs(body, scene, seed=11), body, scene
