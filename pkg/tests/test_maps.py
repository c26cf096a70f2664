import numpy as np
import pytest

from aros.errors import Unreachable
from aros.maps import AffordanceMap, MapEntry, build_map, plan_milestones


def test_floor_map_interior_accepts_edge_rejects():
    """The accepted patch covers the floor interior; a body-radius band near
    the edge rejects (rays overshoot the scan boundary)."""
    from aros.config import IndexConfig, TrainConfig
    from aros.descriptor import train
    from aros.fixtures import FixtureKind, FixtureSpec, make_fixture
    from aros.scene import build_scene_index
    scene, body, p_train = make_fixture(
        FixtureSpec(FixtureKind.FLOOR_ONLY, dimensions={"floor": 3.0}))
    descriptor = train(body, scene, p_train,
                       TrainConfig(label="stand", max_kappa=5.0), seed=7)
    index = build_scene_index(scene, IndexConfig(filler_radii=(0.07,),
                                                 sdf_dims=(48, 48, 48)), seed=5)
    amap = build_map(descriptor, index, spacing=0.25, seed=3)
    assert len(amap.entries) > 40
    lo, hi = scene.bounds
    for e in amap.entries:
        r_edge = min(e.point[0] - lo[0], hi[0] - e.point[0],
                     e.point[1] - lo[1], hi[1] - e.point[1])
        if r_edge > 0.75:
            assert e.accepted, f"interior point {e.point} rejected"
        elif r_edge < 0.3:
            assert not e.accepted, f"edge point {e.point} accepted"


def test_map_determinism(stand_bundle):
    scene, body, p_train, descriptor, index = stand_bundle
    a = build_map(descriptor, index, spacing=0.3, seed=9)
    b = build_map(descriptor, index, spacing=0.3, seed=9)
    assert len(a.entries) == len(b.entries)
    for ea, eb in zip(a.entries, b.entries):
        assert np.array_equal(ea.point, eb.point)
        assert ea.accepted == eb.accepted
        assert ea.kappa == eb.kappa


def test_sit_map_clusters_on_seat(sit_bundle):
    scene, body, p_train, descriptor, index = sit_bundle
    # generalization across the seat needs a realistic alignment budget
    tolerant = descriptor.with_thresholds(max_kappa=12.0)
    amap = build_map(tolerant, index, spacing=0.1, seed=4)
    accepted = amap.accepted_points
    assert len(accepted) > 0
    # every accepted entry is on/near the seat top, none on the floor
    assert (np.abs(accepted[:, 2] - p_train[2]) < 0.02).all()
    dist_to_ref = np.linalg.norm(accepted[:, :2] - p_train[:2], axis=1)
    assert dist_to_ref.max() <= 0.15
    floor_entries = [e for e in amap.entries if abs(e.point[2]) < 0.01]
    assert floor_entries
    assert not any(e.accepted for e in floor_entries)


def _grid_map(points, accepted, spacing, label="walk"):
    entries = tuple(MapEntry(np.asarray(p, dtype=float), acc, 0.0, 0.0)
                    for p, acc in zip(points, accepted))
    return AffordanceMap(label, entries, spacing)


def test_plan_adjacent_goal():
    pts = [(0, 0, 0), (1, 0, 0)]
    walk = _grid_map(pts, [True, True], spacing=1.0)
    goal = _grid_map([(1.2, 0, 0)], [True], spacing=1.0, label="sit")
    path = plan_milestones(walk, [goal], start=(0, 0, 0))
    assert len(path) <= 3
    assert path[-1][1] == "sit"


def test_plan_empty_goal_unreachable():
    walk = _grid_map([(0, 0, 0)], [True], spacing=1.0)
    goal = AffordanceMap("sit", (), 1.0)
    with pytest.raises(Unreachable):
        plan_milestones(walk, [goal], start=(0, 0, 0))


def test_plan_through_doorway():
    """Walkable cells form two rooms joined by a one-cell doorway."""
    spacing = 1.0
    pts = []
    acc = []
    for x in range(7):
        for y in range(5):
            if x == 3 and y != 2:
                continue  # wall with a doorway at (3, 2)
            pts.append((x, y, 0))
            acc.append(True)
    walk = _grid_map(pts, acc, spacing)
    goal = _grid_map([(6.3, 2.0, 0.0)], [True], spacing, label="sit")
    path = plan_milestones(walk, [goal], start=(0, 2, 0))
    waypoints = np.array([p for p, _ in path])
    doorway = np.array([3.0, 2.0, 0.0])
    assert (np.linalg.norm(waypoints - doorway, axis=1) < 1e-9).any()
    assert path[-1][1] == "sit"


def test_plan_multi_goal_order():
    spacing = 1.0
    pts = [(x, 0, 0) for x in range(6)]
    walk = _grid_map(pts, [True] * 6, spacing)
    g1 = _grid_map([(2.2, 0.4, 0)], [True], spacing, label="sit")
    g2 = _grid_map([(5.2, -0.4, 0)], [True], spacing, label="reach")
    path = plan_milestones(walk, [g1, g2], start=(0, 0, 0))
    labels = [l for _, l in path]
    assert labels.index("sit") < labels.index("reach")


def test_plan_disconnected_unreachable():
    pts = [(0, 0, 0), (10, 0, 0)]
    walk = _grid_map(pts, [True, True], spacing=1.0)
    goal = _grid_map([(10.2, 0, 0)], [True], spacing=1.0, label="sit")
    with pytest.raises(Unreachable):
        plan_milestones(walk, [goal], start=(0, 0, 0))
