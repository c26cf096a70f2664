"""Shared ray-alignment scoring used by threshold calibration and detection."""

from __future__ import annotations

import numpy as np

from .geometry.mesh import RigidTransform


def score_rays(prov_origins, prov_deltas, clear_origins, clear_vectors,
               raycaster, point, phi, max_long):
    """Score one descriptor orientation at a point.

    Provenance rays are re-extended until they hit the scene: a ray with no
    hit within max_long counts as missing, and each hit contributes
    |hit distance - stored delta length| to kappa. Clearance rays count as
    collisions when the scene interrupts them within their stored length.

    `raycaster(origins, dirs, max_ts) -> (t, face)` with face < 0 for a miss.

    Returns (kappa, missing_count, collision_count).
    """
    rot = RigidTransform.rot_z(phi).rotation
    p = np.asarray(point, dtype=np.float64)

    po = np.asarray(prov_origins, dtype=np.float64) @ rot.T + p
    pv = np.asarray(prov_deltas, dtype=np.float64)
    norms = np.linalg.norm(pv, axis=1)
    pd = (pv / norms[:, None]) @ rot.T
    t, f = raycaster(po, pd, np.full(len(po), float(max_long)))
    hit = f >= 0
    missing = int((~hit).sum())
    kappa = float(np.abs(t[hit] - norms[hit]).sum())

    collisions = 0
    if len(clear_origins):
        co = np.asarray(clear_origins, dtype=np.float64) @ rot.T + p
        cv = np.asarray(clear_vectors, dtype=np.float64)
        cn = np.linalg.norm(cv, axis=1)
        cd = (cv / cn[:, None]) @ rot.T
        _, cf = raycaster(co, cd, cn)
        collisions = int((cf >= 0).sum())
    return kappa, missing, collisions
