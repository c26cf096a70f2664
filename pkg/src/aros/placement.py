"""Body placement after a positive detection, plus rigid gap-closing optimizers.

All optimizers are rigid: they compose exact rotations/translations, so the
body's pairwise vertex distances are preserved to machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

import numpy as np

from .descriptor import AffordanceDescriptor
from .detector import DetectionResult
from .errors import IcpDiverged, NoContactWithinRange, NotAccepted
from .geometry.bvh import get_bvh
from .geometry.mesh import RigidTransform, TriangleMesh
from .scene import SceneIndex


class OptimizerKind(Enum):
    NONE = "none"
    DOWNWARD = "downward"
    ICP = "icp"
    SDF_GAP = "sdfgap"


@dataclass
class OptimizerConfig:
    kind: OptimizerKind = OptimizerKind.NONE
    max_iters: int = 60
    step_size: float = 0.02
    collision_weight: float = 1.0
    contact_weight: float = 1.0
    convergence_eps: float = 1e-6

    def __post_init__(self):
        if isinstance(self.kind, str):
            self.kind = OptimizerKind(self.kind)
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.collision_weight < 0 or self.contact_weight < 0:
            raise ValueError("weights must be non-negative")


@dataclass
class PlacedBody:
    """A body snapshot instantiated in the world frame."""

    mesh: TriangleMesh
    source_descriptor: str
    contact_vertices: np.ndarray
    transform_history: List[RigidTransform] = field(default_factory=list)

    def apply(self, xf: RigidTransform) -> "PlacedBody":
        return PlacedBody(self.mesh.transformed(xf), self.source_descriptor,
                          self.contact_vertices, self.transform_history + [xf])


def place(descriptor: AffordanceDescriptor, result: DetectionResult,
          p_test) -> PlacedBody:
    """Instantiate the body snapshot at the detected pose."""
    if not result.accepted:
        raise NotAccepted("cannot place a body for a rejected detection")
    if descriptor.body_snapshot is None:
        raise ValueError("descriptor carries no body snapshot")
    xf = RigidTransform(RigidTransform.rot_z(result.best_phi).rotation,
                        np.asarray(p_test, dtype=np.float64))
    contacts = (descriptor.contact_vertices
                if descriptor.contact_vertices is not None
                else np.empty(0, dtype=np.int64))
    return PlacedBody(descriptor.body_snapshot.transformed(xf),
                      descriptor.label, np.asarray(contacts, dtype=np.int64),
                      [xf])


def optimize_downward(body: PlacedBody, index: SceneIndex,
                      step: float = 0.02, max_drop: float = 2.0,
                      tol: float = 1e-3) -> PlacedBody:
    """Translate straight down until first contact, bisecting the final step.

    Contact is judged by the minimum vertex SDF; the result has
    |min SDF| <= tol (1 mm default). Raises NoContactWithinRange after
    descending max_drop without touching anything.
    """
    verts = body.mesh.vertices

    def min_sdf(dz):
        return float(index.sdf.interpolate(verts + (0.0, 0.0, dz), clamp=True).min())

    if min_sdf(0.0) <= 0.0:
        return body.apply(RigidTransform.translation_of((0.0, 0.0, 0.0)))
    lo = 0.0
    hi = None
    drop = step
    while drop <= max_drop:
        if min_sdf(-drop) <= 0.0:
            hi = drop
            break
        lo = drop
        drop += step
    if hi is None:
        raise NoContactWithinRange(f"no contact within {max_drop} m below")
    # bisect well inside the documented tolerance so a re-run barely moves
    inner = tol / 10.0
    while True:
        mid = 0.5 * (lo + hi)
        s = min_sdf(-mid)
        if abs(s) <= inner:
            hi = mid
            break
        if s > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-9:
            break
    return body.apply(RigidTransform.translation_of((0.0, 0.0, -hi)))


def _rotvec_matrix(rvec):
    """Exact rotation matrix from an axis-angle vector (Rodrigues)."""
    theta = float(np.linalg.norm(rvec))
    if theta < 1e-15:
        return np.eye(3)
    k = np.asarray(rvec) / theta
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(theta) * kx + (1 - np.cos(theta)) * (kx @ kx)


def optimize_icp(body: PlacedBody, index: SceneIndex,
                 config: OptimizerConfig = None) -> PlacedBody:
    """Point-to-plane rigid ICP of the contact vertices onto the scan.

    Free limbs are deliberately excluded: only the trained contact region
    drives correspondences. Raises IcpDiverged when the RMS residual grows
    three iterations in a row.
    """
    config = config or OptimizerConfig(kind=OptimizerKind.ICP)
    contacts = body.contact_vertices
    if len(contacts) < 3:
        contacts = np.arange(body.mesh.n_vertices)
    src_all = body.mesh.vertices.copy()
    scene_bvh = get_bvh(index.scene)
    total = RigidTransform.identity()
    prev_rms = None
    rises = 0
    for _ in range(config.max_iters):
        src = total.apply(src_all[contacts])
        d, cp, f = scene_bvh.closest_point(src)
        normals = index.scene.face_normals[f]
        resid = np.einsum("ij,ij->i", src - cp, normals)
        rms = float(np.sqrt(np.mean(resid ** 2)))
        if prev_rms is not None:
            if rms > prev_rms + 1e-12:
                rises += 1
                if rises >= 3:
                    raise IcpDiverged(f"RMS rose for {rises} consecutive iterations")
            else:
                rises = 0
            if abs(prev_rms - rms) < config.convergence_eps:
                break
        prev_rms = rms
        # linearized point-to-plane solve for (rotation vector, translation)
        c = np.cross(src, normals)
        a = np.hstack([c, normals])  # (n, 6)
        b = -resid
        ata = a.T @ a + 1e-12 * np.eye(6)
        atb = a.T @ b
        x = np.linalg.solve(ata, atb)
        update = RigidTransform(_rotvec_matrix(x[:3]), x[3:])
        total = update.compose(total)
    return body.apply(total)


def optimize_sdfgap(body: PlacedBody, index: SceneIndex,
                    descriptor: Optional[AffordanceDescriptor] = None,
                    config: OptimizerConfig = None) -> PlacedBody:
    """Rigid gradient descent on an SDF contact/collision loss.

    L = contact_weight * mean over contact vertices of max(SDF, 0)
      + collision_weight * mean over all vertices of max(-SDF, 0)

    The search space is translation plus rotation about the vertical axis
    through the body centroid; backtracking line search only ever accepts
    non-increasing loss, and the best iterate is returned.
    """
    config = config or OptimizerConfig(kind=OptimizerKind.SDF_GAP)
    verts = body.mesh.vertices
    contacts = body.contact_vertices
    if len(contacts) == 0:
        contacts = np.arange(body.mesh.n_vertices)
    centroid = verts.mean(axis=0)
    sdf = index.sdf

    def params_to_xf(p):
        rot = RigidTransform.rot_z(p[3], pivot=centroid).rotation
        t = p[:3] + centroid - rot @ centroid
        return RigidTransform(rot, t)

    def loss_and_grad(p):
        xf = params_to_xf(p)
        v = xf.apply(verts)
        vals = sdf.interpolate(v, clamp=True)
        grads = sdf.gradient(v, clamp=True)
        contact_terms = np.maximum(vals[contacts], 0.0)
        collide_terms = np.maximum(-vals, 0.0)
        loss = (config.contact_weight * contact_terms.mean()
                + config.collision_weight * collide_terms.mean())
        dl_dv = np.zeros_like(v)
        active_c = vals[contacts] > 0
        if active_c.any():
            dl_dv[contacts[active_c]] += (config.contact_weight / len(contacts)) \
                * grads[contacts[active_c]]
        active_p = vals < 0
        if active_p.any():
            dl_dv[active_p] -= (config.collision_weight / len(verts)) * grads[active_p]
        g = np.empty(4)
        g[:3] = dl_dv.sum(axis=0)
        arm = np.cross(np.array([0.0, 0.0, 1.0]), v - (centroid + p[:3]))
        g[3] = np.einsum("ij,ij->i", dl_dv, arm).sum()
        return float(loss), g

    p = np.zeros(4)
    best_p = p.copy()
    loss, grad = loss_and_grad(p)
    best_loss = loss
    step = config.step_size
    for _ in range(config.max_iters):
        gn = np.linalg.norm(grad)
        if gn < 1e-12 or loss < config.convergence_eps:
            break
        direction = -grad / gn
        accepted = False
        trial_step = step
        for _ in range(20):
            trial = p + trial_step * direction
            trial_loss, trial_grad = loss_and_grad(trial)
            if trial_loss <= loss:
                p, loss, grad = trial, trial_loss, trial_grad
                accepted = True
                step = min(trial_step * 1.5, 10 * config.step_size)
                break
            trial_step *= 0.5
        if not accepted:
            break
        if loss < best_loss:
            best_loss = loss
            best_p = p.copy()
    return body.apply(params_to_xf(best_p))
