"""Detection: decide whether a test point supports a trained interaction.

A query passes through three gates: the normal gate (cheap angle test), the
provenance-ray alignment score kappa with its missing-ray budget, and the
clearance-ray collision budget. Orientations are swept at n_phi equally
spaced rotations about the vertical axis.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._scoring import score_rays
from .descriptor import AffordanceDescriptor
from .geometry.bvh import get_bvh
from .geometry.mesh import RigidTransform
from .scene import SceneIndex


@dataclass(frozen=True)
class OrientationScore:
    phi: float
    kappa: float
    missings: int
    collisions: int
    passes: bool


@dataclass(frozen=True)
class DetectionQuery:
    descriptor: AffordanceDescriptor
    point: np.ndarray
    normal: np.ndarray


@dataclass(frozen=True)
class DetectionResult:
    accepted: bool
    best_phi: float
    kappa: float
    missing_count: int
    collision_count: int
    per_phi: tuple
    transform: RigidTransform
    normal_gate_rejected: bool = False


def normal_gate(n_test, n_train, rho_n: float) -> bool:
    """True when the angle between the unit normals is within rho_n (inclusive)."""
    cos_a = float(np.clip(np.dot(np.asarray(n_test, dtype=np.float64),
                                 np.asarray(n_train, dtype=np.float64)), -1.0, 1.0))
    return np.arccos(cos_a) <= rho_n


def surface_normal_at(index: SceneIndex, point):
    """Normal of the scene face containing (nearest to) the point."""
    _, _, f = get_bvh(index.scene).closest_point(np.asarray(point, dtype=np.float64))
    return index.scene.face_normals[int(f[0])].copy()


def score_orientation(descriptor: AffordanceDescriptor, index: SceneIndex,
                      p_test, phi: float, raw=False):
    """(kappa, missing_count, collision_count) for one orientation."""
    def raycaster(origins, dirs, max_ts):
        return index.raycast(origins, dirs, max_ts, raw=raw)

    return score_rays(descriptor.provenance.origins, descriptor.provenance.deltas,
                      descriptor.clearance.origins, descriptor.clearance.vectors,
                      raycaster, p_test, phi, descriptor.thresholds.max_long)


def detect(descriptor: AffordanceDescriptor, index: SceneIndex, p_test,
           n_test=None, raw=False) -> DetectionResult:
    """Full gate: normal check, then the n_phi orientation sweep.

    Accepts when any orientation satisfies all three thresholds; the best
    orientation is the passing one with minimal kappa (ties to the smallest
    phi). With no passing orientation the minimal-kappa orientation is
    reported for diagnostics.
    """
    th = descriptor.thresholds
    p_test = np.asarray(p_test, dtype=np.float64)
    if n_test is None:
        n_test = surface_normal_at(index, p_test)
    if not normal_gate(n_test, descriptor.train_normal, th.rho_n):
        return DetectionResult(False, 0.0, np.inf, 0, 0, (),
                               RigidTransform.identity(),
                               normal_gate_rejected=True)
    scores = []
    for k in range(th.n_phi):
        phi = 2.0 * np.pi * k / th.n_phi
        kappa, missing, collisions = score_orientation(descriptor, index,
                                                       p_test, phi, raw=raw)
        passes = (kappa <= th.max_kappa and missing <= th.max_missings
                  and collisions <= th.max_collisions)
        scores.append(OrientationScore(phi, kappa, missing, collisions, passes))
    passing = [s for s in scores if s.passes]
    pool = passing if passing else scores
    # kappa values within a hair of the minimum count as ties -> smallest phi
    kappa_min = min(s.kappa for s in pool)
    best = min((s for s in pool if s.kappa <= kappa_min + 1e-9),
               key=lambda s: s.phi)
    return DetectionResult(
        accepted=bool(passing),
        best_phi=best.phi,
        kappa=best.kappa,
        missing_count=best.missings,
        collision_count=best.collisions,
        per_phi=tuple(scores),
        transform=RigidTransform(RigidTransform.rot_z(best.phi).rotation, p_test),
    )


def sweep(descriptor: AffordanceDescriptor, index: SceneIndex, test_points,
          threads: int = 1, raw=False):
    """Element-wise detect over (point, normal) pairs, order preserving.

    Thread-parallel execution returns exactly the serial results: each
    detection is pure with respect to the shared descriptor and index.
    """
    test_points = list(test_points)
    if not test_points:
        raise ValueError("sweep needs at least one test point")

    def one(item):
        point, normal = item
        return detect(descriptor, index, point, normal, raw=raw)

    if threads <= 1:
        return [one(item) for item in test_points]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, test_points))
