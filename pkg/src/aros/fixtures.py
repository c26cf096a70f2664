"""Procedural desk-scale fixtures: scenes, a rigid multi-box mannequin, and
the interaction reference point for each scenario.

The mannequin is a ~450-vertex humanoid assembled from axis-aligned boxes,
posed per fixture kind (standing, sitting, lying, reaching, walking). Scenes
are open scan-like sheets: floors have no underside and boxes no bottom face.
An optional per-vertex jitter mimics scan roughness.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .geometry.bvh import get_bvh
from .geometry.mesh import TriangleMesh, box_mesh, grid_mesh


class FixtureKind(Enum):
    FLOOR_ONLY = "FloorOnly"
    BOX_SEAT = "BoxSeat"
    CHAIR_BACK = "ChairBack"
    TABLE = "Table"
    HOLED_WALL = "HoledWall"
    CEILING_SLAB = "CeilingSlab"


_DEFAULT_POSE = {
    FixtureKind.FLOOR_ONLY: "standing",
    FixtureKind.BOX_SEAT: "sitting",
    FixtureKind.CHAIR_BACK: "sitting",
    FixtureKind.TABLE: "reaching",
    FixtureKind.HOLED_WALL: "walking",
    FixtureKind.CEILING_SLAB: "sitting",
}


@dataclass
class FixtureSpec:
    kind: FixtureKind
    dimensions: dict = field(default_factory=dict)
    seed: int = 0
    pose: Optional[str] = None

    def __post_init__(self):
        if isinstance(self.kind, str):
            self.kind = FixtureKind(self.kind)
        for v in self.dimensions.values():
            if isinstance(v, (int, float)) and v <= 0:
                raise ValueError("fixture dimensions must be positive")

    def dim(self, key, default):
        return float(self.dimensions.get(key, default))


# --- mannequin ---------------------------------------------------------------

_FOOT = (0.24, 0.10, 0.06)
_SHIN_W = 0.10
_THIGH_W = 0.14
_THIGH_LEN = 0.40
_PELVIS = (0.24, 0.32, 0.16)
_TORSO = (0.22, 0.34, 0.50)
_HEAD = (0.18, 0.16, 0.22)
_UPPER_ARM = (0.09, 0.09, 0.28)
_FOREARM = (0.08, 0.08, 0.30)
_NECK_GAP = 0.02
_HIP_Y = 0.10  # lateral leg offset


def _part(size, center, segments=2):
    return box_mesh(size, center=center, segments=segments)


def make_mannequin(pose: str, seat_height: float = 0.45,
                   clearance: float = 0.0005) -> TriangleMesh:
    """Rigid multi-box humanoid standing on (or seated at) z = clearance."""
    parts = []
    foot_l, foot_w, foot_h = _FOOT
    c = clearance

    def legs_standing(x_left=0.0, x_right=0.0):
        for side, dx in ((1, x_left), (-1, x_right)):
            y = side * _HIP_Y
            parts.append(_part(_FOOT, (dx + 0.05, y, c + foot_h / 2)))
            shin_len = 0.40
            parts.append(_part((_SHIN_W, _SHIN_W, shin_len),
                               (dx, y, c + foot_h + shin_len / 2)))
            parts.append(_part((_THIGH_W, _THIGH_W, _THIGH_LEN),
                               (dx, y, c + foot_h + 0.40 + _THIGH_LEN / 2)))
        return c + foot_h + 0.40 + _THIGH_LEN  # hip base height

    def upper_body(hip_top, arms="down", lean_x=0.0):
        pz = hip_top + _PELVIS[2] / 2
        parts.append(_part(_PELVIS, (lean_x, 0.0, pz)))
        tz = hip_top + _PELVIS[2] + _TORSO[2] / 2
        parts.append(_part(_TORSO, (lean_x, 0.0, tz), segments=3))
        hz = hip_top + _PELVIS[2] + _TORSO[2] + _NECK_GAP + _HEAD[2] / 2
        parts.append(_part(_HEAD, (lean_x + 0.02, 0.0, hz), segments=3))
        shoulder_z = hip_top + _PELVIS[2] + _TORSO[2] - _UPPER_ARM[2] / 2
        arm_y = _TORSO[1] / 2 + _UPPER_ARM[1] / 2 + 0.01
        for side in (1, -1):
            y = side * arm_y
            if arms == "reach" and side == -1:
                sz = hip_top + _PELVIS[2] + _TORSO[2] - 0.06
                parts.append(_part((_UPPER_ARM[2], _UPPER_ARM[1], _UPPER_ARM[0]),
                                   (lean_x + 0.11 + _UPPER_ARM[2] / 2, y, sz)))
                parts.append(_part((_FOREARM[2], _FOREARM[1], _FOREARM[0]),
                                   (lean_x + 0.11 + _UPPER_ARM[2] + _FOREARM[2] / 2,
                                    y, sz)))
            else:
                parts.append(_part(_UPPER_ARM, (lean_x, y, shoulder_z)))
                parts.append(_part(_FOREARM,
                                   (lean_x, y, shoulder_z - _UPPER_ARM[2] / 2
                                    - _FOREARM[2] / 2 + 0.01)))
        return hip_top

    if pose in ("standing", "reaching"):
        hip = legs_standing()
        upper_body(hip, arms="reach" if pose == "reaching" else "down")
    elif pose == "walking":
        hip = legs_standing(x_left=0.12, x_right=-0.12)
        upper_body(hip)
    elif pose == "sitting":
        h = seat_height
        for side in (1, -1):
            y = side * _HIP_Y
            # thigh horizontal, resting on the seat plane
            parts.append(_part((_THIGH_LEN, _THIGH_W, _THIGH_W),
                               (0.08 + _THIGH_LEN / 2 - 0.12, y,
                                h + c + _THIGH_W / 2)))
            knee_x = 0.08 + _THIGH_LEN - 0.12
            shin_len = max(h - foot_h, 0.05)
            parts.append(_part((_SHIN_W, _SHIN_W, shin_len),
                               (knee_x, y, c + foot_h + shin_len / 2)))
            parts.append(_part(_FOOT, (knee_x + 0.05, y, c + foot_h / 2)))
        hip_top = h + c + _THIGH_W
        upper_body(hip_top, lean_x=-0.05)
    elif pose == "lying":
        # supine along +x: depth axes point up
        zc = c
        parts.append(_part((_HEAD[2], _HEAD[1], _HEAD[0]),
                           (0.75, 0.0, zc + _HEAD[0] / 2)))
        parts.append(_part((_TORSO[2], _TORSO[1], _TORSO[0]),
                           (0.38, 0.0, zc + _TORSO[0] / 2), segments=3))
        parts.append(_part((_PELVIS[2], _PELVIS[1], _PELVIS[0]),
                           (0.05, 0.0, zc + _PELVIS[0] / 2)))
        for side in (1, -1):
            y = side * _HIP_Y
            parts.append(_part((_THIGH_LEN, _THIGH_W, _THIGH_W),
                               (-0.23, y, zc + _THIGH_W / 2)))
            parts.append(_part((0.40, _SHIN_W, _SHIN_W),
                               (-0.63, y, zc + _SHIN_W / 2)))
            parts.append(_part((foot_h, foot_w, foot_l),
                               (-0.86, y, zc + foot_l / 2)))
            ay = side * (_TORSO[1] / 2 + _UPPER_ARM[1] / 2 + 0.01)
            parts.append(_part((_UPPER_ARM[2], _UPPER_ARM[1], _UPPER_ARM[0]),
                               (0.45, ay, zc + _UPPER_ARM[0] / 2)))
            parts.append(_part((_FOREARM[2], _FOREARM[1], _FOREARM[0]),
                               (0.16, ay, zc + _FOREARM[0] / 2)))
    else:
        raise ValueError(f"unknown pose {pose!r}")
    return TriangleMesh.concatenate(parts)


# --- scenes ------------------------------------------------------------------


def _vertical_sheet(x_plane, y0, y1, z0, z1, cell):
    """Rectangular sheet in the x = const plane, normals -x."""
    ny = max(int(round((y1 - y0) / cell)), 1)
    nz = max(int(round((z1 - z0) / cell)), 1)
    ys = np.linspace(y0, y1, ny + 1)
    zs = np.linspace(z0, z1, nz + 1)
    gy, gz = np.meshgrid(ys, zs, indexing="ij")
    verts = np.column_stack([np.full(gy.size, float(x_plane)), gy.ravel(), gz.ravel()])
    faces = []
    for i in range(ny):
        for j in range(nz):
            a = i * (nz + 1) + j
            b = (i + 1) * (nz + 1) + j
            faces.append((a, b + 1, b))
            faces.append((a, a + 1, b + 1))
    return TriangleMesh.from_arrays(verts, np.array(faces))


def _holed_wall(x_plane, width, height, hole_y, hole_z, hole_size, cell):
    """Wall with an exactly hole_size x hole_size square opening."""
    hw = hole_size / 2
    panels = [
        _vertical_sheet(x_plane, -width / 2, hole_y - hw, 0.0, height, cell),
        _vertical_sheet(x_plane, hole_y + hw, width / 2, 0.0, height, cell),
        _vertical_sheet(x_plane, hole_y - hw, hole_y + hw, 0.0, hole_z - hw, cell),
        _vertical_sheet(x_plane, hole_y - hw, hole_y + hw, hole_z + hw, height, cell),
    ]
    return TriangleMesh.concatenate(panels)


def _apply_noise(mesh: TriangleMesh, amplitude: float, seed: int) -> TriangleMesh:
    if amplitude <= 0:
        return mesh
    rng = np.random.default_rng(seed)
    bump = rng.uniform(-amplitude, amplitude, size=(mesh.n_vertices, 1))
    return TriangleMesh.from_arrays(mesh.vertices + bump * mesh.vertex_normals,
                                    mesh.faces)


def make_fixture(spec: FixtureSpec):
    """Build (scene, body, p_train) for the requested scenario.

    The body floats `noise + 0.5 mm` above its rest surfaces so fixtures are
    interpenetration-free even with scan jitter; p_train is projected onto
    the final scene mesh.
    """
    kind = spec.kind
    pose = spec.pose or _DEFAULT_POSE[kind]
    noise = spec.dim("noise", 0.0)
    clearance = noise + 0.0005
    default_floor = 2.4 if pose == "lying" else 1.6
    floor_size = spec.dim("floor", default_floor)
    cell = spec.dim("cell", 0.1)
    floor = grid_mesh(floor_size, floor_size, nx=max(int(floor_size / cell), 2),
                      ny=max(int(floor_size / cell), 2))
    meshes = [floor]
    seat_h = spec.dim("seat_height", 0.45)
    seat_size = spec.dim("seat_size", 0.5)
    # seats sit off the floor centre so no scene is rotationally symmetric
    offset = np.array([spec.dim("offset_x", 0.10), spec.dim("offset_y", 0.07), 0.0])
    body_shift = np.zeros(3)

    if kind in (FixtureKind.BOX_SEAT, FixtureKind.CHAIR_BACK, FixtureKind.CEILING_SLAB):
        # centred under the pelvis; the knees and shins clear its front face
        seat = box_mesh((seat_size, seat_size, seat_h),
                        center=(offset[0], offset[1], seat_h / 2), segments=3,
                        skip_bottom=True)
        meshes.append(seat)
        p_target = np.array([offset[0], offset[1], seat_h])
        body_shift = offset.copy()
    else:
        p_target = np.array([0.0, 0.0, 0.0])

    if kind is FixtureKind.CHAIR_BACK:
        back_h = spec.dim("back_height", 0.5)
        back = box_mesh((0.05, seat_size, back_h),
                        center=(offset[0] - (seat_size / 2 + 0.025), offset[1],
                                seat_h + back_h / 2), segments=2,
                        skip_bottom=True)
        meshes.append(back)
    elif kind is FixtureKind.TABLE:
        top_h = spec.dim("table_height", 0.72)
        top = box_mesh((0.8, 0.8, 0.04), center=(0.75, 0.0, top_h - 0.02),
                       segments=2, skip_bottom=False)
        meshes.append(top)
        for sx, sy in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            leg = box_mesh((0.05, 0.05, top_h - 0.04),
                           center=(0.75 + sx * 0.35, sy * 0.35, (top_h - 0.04) / 2),
                           segments=1, skip_bottom=True)
            meshes.append(leg)
    elif kind is FixtureKind.HOLED_WALL:
        hole = spec.dim("hole", 0.05)
        wall_x = spec.dim("wall_distance", 0.7)
        meshes.append(_holed_wall(wall_x, floor_size, 1.8, 0.0,
                                  spec.dim("hole_height", 1.0), hole,
                                  cell=0.1))
    elif kind is FixtureKind.CEILING_SLAB:
        seated_head_top = seat_h + clearance + _THIGH_W + _PELVIS[2] + _TORSO[2] \
            + _NECK_GAP + _HEAD[2]
        slab_gap = spec.dim("slab_clearance", 1.0)
        slab = box_mesh((0.9, 0.9, 0.04),
                        center=(offset[0], offset[1],
                                seated_head_top + slab_gap + 0.02),
                        segments=2, skip_bottom=False)
        meshes.append(slab)

    scene = TriangleMesh.concatenate(meshes)
    scene = _apply_noise(scene, noise, spec.seed)

    body = make_mannequin(pose, seat_height=seat_h, clearance=clearance)
    if body_shift.any():
        body = body.translated(body_shift)

    _, cp, _ = get_bvh(scene).closest_point(p_target)
    p_train = cp[0]
    return scene, body, p_train
