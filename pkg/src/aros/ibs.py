"""Interaction bisector surface between a body mesh and an environment mesh.

The surface is extracted from the 3D Voronoi diagram of two sample sets, one
per mesh: ridges whose generator pair spans both sets approximate the locus
of points equidistant to the two surfaces. Sampling is adaptive: counter-part
rounds densify each set with the closest points to the other set, and
collision rounds add samples wherever a candidate surface still pierces
either mesh.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import Voronoi, cKDTree

from .errors import EmptyInterface, NoCollisions
from .geometry.bvh import get_bvh, intersect_meshes
from .geometry.mesh import TriangleMesh, min_enclosing_sphere, weld_vertices
from .geometry.sampling import Source, SurfaceSamples, poisson_disc_sample

MERGE_TOL = 1e-6


@dataclass
class IbsConfig:
    """Sampling and clipping parameters for surface construction."""

    ibs_ini: int = 400
    ibs_cs: int = 4
    ibs_rf: float = 1.2
    max_refine_rounds: int = 10
    collision_subsample: float = 0.25
    eps_eq_fraction: float = 0.01
    enforce_equidistance: bool = True
    clip_center: Optional[np.ndarray] = None
    clip_radius: Optional[float] = None

    def __post_init__(self):
        if self.ibs_ini < 4:
            raise ValueError("ibs_ini must be >= 4")
        if self.ibs_cs < 0:
            raise ValueError("ibs_cs must be >= 0")
        if self.ibs_rf < 1.0:
            raise ValueError("ibs_rf must be >= 1.0")
        if not 0.0 < self.collision_subsample <= 1.0:
            raise ValueError("collision_subsample must be in (0, 1]")


@dataclass(frozen=True)
class IbsSurface:
    """The extracted ridge surface plus the sample sets that generated it."""

    mesh: TriangleMesh
    body_samples: SurfaceSamples
    env_samples: SurfaceSamples
    clip_center: np.ndarray
    clip_radius: float
    pierce_count: int = 0
    refine_rounds: int = 0


def _closest_samples(mesh: TriangleMesh, points, source) -> SurfaceSamples:
    """Closest points on `mesh` to the given points, as surface samples."""
    bvh = get_bvh(mesh)
    d, p, f = bvh.closest_point(points)
    normals = mesh.interpolated_normals(f, p)
    return SurfaceSamples(p, normals, f, source)


def _merge_new(existing: SurfaceSamples, new: SurfaceSamples,
               tol=MERGE_TOL) -> SurfaceSamples:
    """Append new samples, dropping any within tol of existing or of each other."""
    if len(new) == 0:
        return existing
    keep = np.ones(len(new), dtype=bool)
    if len(existing):
        tree = cKDTree(existing.positions)
        d, _ = tree.query(new.positions, k=1)
        keep &= d > tol
    # in-batch dedup by rounded key, first occurrence wins
    key = np.round(new.positions / tol).astype(np.int64)
    _, first = np.unique(key, axis=0, return_index=True)
    batch_keep = np.zeros(len(new), dtype=bool)
    batch_keep[first] = True
    keep &= batch_keep
    if not keep.any():
        return existing
    return existing.extended(new.subset(keep))


def counterpart_sample(body: TriangleMesh, env: TriangleMesh,
                       body_samples: SurfaceSamples,
                       env_samples: SurfaceSamples):
    """One densification round: each set gains the closest points to the other.

    Returns (body_samples', env_samples'); duplicates within 1e-6 m merged.
    """
    if len(body_samples) == 0 or len(env_samples) == 0:
        raise ValueError("counterpart sampling needs non-empty sample sets")
    new_env = _closest_samples(env, body_samples.positions, Source.ENVIRONMENT)
    new_body = _closest_samples(body, env_samples.positions, Source.BODY)
    return (_merge_new(body_samples, new_body), _merge_new(env_samples, new_env))


def collision_sample(ibs: IbsSurface, body: TriangleMesh, env: TriangleMesh,
                     subsample: float, seed: int):
    """Samples where the candidate surface pierces either mesh.

    Every kept intersection midpoint is projected onto the pierced mesh and
    paired with its closest point on the other mesh. Returns
    (new body samples, new env samples).
    """
    pairs_b, segs_b = intersect_meshes(ibs.mesh, body)
    pairs_e, segs_e = intersect_meshes(ibs.mesh, env)
    mids = []
    pierced = []  # True -> body pierced
    if len(pairs_b):
        mids.append(segs_b.mean(axis=1))
        pierced.append(np.ones(len(pairs_b), dtype=bool))
    if len(pairs_e):
        mids.append(segs_e.mean(axis=1))
        pierced.append(np.zeros(len(pairs_e), dtype=bool))
    if not mids:
        raise NoCollisions("surface does not pierce either mesh")
    mids = np.vstack(mids)
    pierced = np.concatenate(pierced)

    rng = np.random.default_rng(seed)
    n_keep = max(1, int(round(subsample * len(mids))))
    if n_keep < len(mids):
        idx = rng.choice(len(mids), size=n_keep, replace=False)
        idx.sort()
        mids = mids[idx]
        pierced = pierced[idx]

    new_body = SurfaceSamples.empty(Source.BODY)
    new_env = SurfaceSamples.empty(Source.ENVIRONMENT)
    if pierced.any():
        on_body = _closest_samples(body, mids[pierced], Source.BODY)
        new_body = new_body.extended(on_body)
        new_env = new_env.extended(
            _closest_samples(env, on_body.positions, Source.ENVIRONMENT))
    if (~pierced).any():
        on_env = _closest_samples(env, mids[~pierced], Source.ENVIRONMENT)
        new_env = new_env.extended(on_env)
        new_body = new_body.extended(
            _closest_samples(body, on_env.positions, Source.BODY))
    return new_body, new_env


def _sentinel_points(center, radius):
    """Far generators that bound every real Voronoi ridge.

    Placed at 20x the working radius: the bisector between any real generator
    and a sentinel lies beyond ~10x the clip radius, far outside the clip
    sphere, so clipping sees only finite ridge polygons.
    """
    dirs = np.array([
        (1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1),
        (1, 1, 1), (1, 1, -1), (1, -1, 1), (1, -1, -1),
        (-1, 1, 1), (-1, 1, -1), (-1, -1, 1), (-1, -1, -1),
    ], dtype=np.float64)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return center + 20.0 * radius * dirs


def _order_convex_polygon(poly):
    """Sort a convex planar polygon's vertices by angle around its centroid."""
    centroid = poly.mean(axis=0)
    rel = poly - centroid
    # plane basis via the dominant normal direction
    _, _, vt = np.linalg.svd(rel, full_matrices=False)
    u, v = vt[0], vt[1]
    ang = np.arctan2(rel @ v, rel @ u)
    return poly[np.argsort(ang)]


def _clip_polygon_to_ball(poly, center, radius):
    """Intersect a convex polygon with a ball; curved arcs become chords."""
    d = np.linalg.norm(poly - center, axis=1)
    inside = d <= radius * (1.0 + 1e-12)
    if inside.all():
        return poly
    out = []
    k = len(poly)
    for i in range(k):
        a = poly[i]
        b = poly[(i + 1) % k]
        if inside[i]:
            out.append(a)
        ab = b - a
        ac = a - center
        qa = ab @ ab
        if qa <= 0:
            continue
        qb = 2.0 * (ab @ ac)
        qc = ac @ ac - radius * radius
        disc = qb * qb - 4 * qa * qc
        if disc <= 0:
            continue
        sq = np.sqrt(disc)
        for t in sorted(((-qb - sq) / (2 * qa), (-qb + sq) / (2 * qa))):
            if 1e-12 < t < 1.0 - 1e-12:
                out.append(a + t * ab)
    if len(out) >= 3:
        return np.asarray(out)
    # ball may poke through the polygon interior without touching any edge
    if k < 3:
        return np.empty((0, 3))
    n = np.cross(poly[1] - poly[0], poly[2] - poly[0])
    nn = np.linalg.norm(n)
    if nn <= 0:
        return np.empty((0, 3))
    n /= nn
    dist_plane = (center - poly[0]) @ n
    if abs(dist_plane) >= radius:
        return np.empty((0, 3))
    circle_c = center - dist_plane * n
    circle_r = np.sqrt(radius * radius - dist_plane * dist_plane)
    u = poly[1] - poly[0]
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    ang = np.linspace(0.0, 2 * np.pi, 16, endpoint=False)
    disc_poly = circle_c + circle_r * (np.outer(np.cos(ang), u) + np.outer(np.sin(ang), v))
    # clip the inscribed 16-gon against the convex polygon's edges in-plane
    clipped = disc_poly
    for i in range(k):
        a = poly[i]
        b = poly[(i + 1) % k]
        edge_n = np.cross(n, b - a)  # points toward the polygon interior or away
        # orient toward the polygon centroid
        if (poly.mean(axis=0) - a) @ edge_n < 0:
            edge_n = -edge_n
        keep = []
        m = len(clipped)
        if m == 0:
            break
        side = (clipped - a) @ edge_n
        for j in range(m):
            p0 = clipped[j]
            p1 = clipped[(j + 1) % m]
            s0 = side[j]
            s1 = side[(j + 1) % m]
            if s0 >= 0:
                keep.append(p0)
            if (s0 > 0 > s1) or (s0 < 0 < s1):
                t = s0 / (s0 - s1)
                keep.append(p0 + t * (p1 - p0))
        clipped = np.asarray(keep) if keep else np.empty((0, 3))
    return clipped if len(clipped) >= 3 else np.empty((0, 3))


def _ridge_surface(body_pos, env_pos, clip_center, clip_radius) -> TriangleMesh:
    """Voronoi ridges separating the two generator sets, clipped to the ball.

    Ridge polygons are triangulated by a fan from their centroid.
    """
    # near-coincident cross-set generators collapse into the environment set
    if len(body_pos) and len(env_pos):
        tree = cKDTree(env_pos)
        d, _ = tree.query(body_pos, k=1)
        body_pos = body_pos[d > MERGE_TOL]
    n_h = len(body_pos)
    pts = np.vstack([body_pos, env_pos])
    n_real = len(pts)
    if n_h == 0 or len(env_pos) == 0:
        raise EmptyInterface("a generator set is empty")
    extent = float(np.linalg.norm(pts - clip_center, axis=1).max())
    working_r = max(clip_radius, extent)
    all_pts = np.vstack([pts, _sentinel_points(clip_center, working_r)])

    vor = Voronoi(all_pts)
    verts = vor.vertices
    vert_inside = np.linalg.norm(verts - clip_center, axis=1) <= clip_radius * (1 + 1e-9)

    tris = []
    for ridge_idx in range(len(vor.ridge_points)):
        p, q = vor.ridge_points[ridge_idx]
        if p >= n_real or q >= n_real:
            continue
        if (p < n_h) == (q < n_h):
            continue
        vids = vor.ridge_vertices[ridge_idx]
        if -1 in vids or len(vids) < 3:
            continue
        poly = verts[vids]
        if not vert_inside[vids].any():
            # exact reject: the polygon lies in the bisector plane of (p, q);
            # if that plane misses the ball, so does the polygon
            pn = all_pts[q] - all_pts[p]
            pn_norm = np.linalg.norm(pn)
            if pn_norm > 0:
                mid = 0.5 * (all_pts[p] + all_pts[q])
                if abs((clip_center - mid) @ (pn / pn_norm)) > clip_radius:
                    continue
        poly = _order_convex_polygon(poly)
        clipped = _clip_polygon_to_ball(poly, clip_center, clip_radius)
        if len(clipped) < 3:
            continue
        if len(clipped) == 3:
            tris.append(clipped)
        else:
            centroid = clipped.mean(axis=0)
            m = len(clipped)
            for i in range(m):
                tris.append(np.stack([centroid, clipped[i], clipped[(i + 1) % m]]))
    if not tris:
        raise EmptyInterface("no bisector ridge survives clipping")
    tris = np.asarray(tris)
    flat = tris.reshape(-1, 3)
    faces = np.arange(len(flat)).reshape(-1, 3)
    v, f = weld_vertices(flat, faces, tol=1e-9)
    return TriangleMesh.from_arrays(v, f)


def pierce_counts(surface: TriangleMesh, body: TriangleMesh, env: TriangleMesh):
    """Distinct surface triangles intersecting the body and the environment."""
    pairs_b, _ = intersect_meshes(surface, body)
    pairs_e, _ = intersect_meshes(surface, env)
    faces = set()
    if len(pairs_b):
        faces.update(pairs_b[:, 0].tolist())
    if len(pairs_e):
        faces.update(pairs_e[:, 0].tolist())
    return len(faces)


def build_ibs(body: TriangleMesh, env: TriangleMesh, config: IbsConfig = None,
              seed: int = 0) -> IbsSurface:
    """Construct the bisector surface between body and environment.

    Pipeline: Poisson-disc seed sets, counter-part densification rounds,
    Voronoi ridge extraction clipped to the scaled body bounding sphere, then
    collision-driven refinement until the surface stops piercing either mesh
    (or the round cap is hit, which warns and returns the best surface with
    its diagnostic pierce count).
    """
    config = config or IbsConfig()
    seeds = np.random.SeedSequence(seed).generate_state(3)

    body_samples = poisson_disc_sample(body, config.ibs_ini, int(seeds[0]), Source.BODY)
    env_samples = poisson_disc_sample(env, config.ibs_ini, int(seeds[1]), Source.ENVIRONMENT)

    if config.clip_center is not None and config.clip_radius is not None:
        clip_center = np.asarray(config.clip_center, dtype=np.float64)
        clip_radius = float(config.clip_radius)
    else:
        center, radius = min_enclosing_sphere(body.vertices)
        clip_center = center
        clip_radius = config.ibs_rf * radius

    for _ in range(config.ibs_cs):
        body_samples, env_samples = counterpart_sample(body, env, body_samples, env_samples)

    surface = _ridge_surface(body_samples.positions, env_samples.positions,
                             clip_center, clip_radius)

    rounds = 0
    rng = np.random.default_rng(int(seeds[2]))
    while rounds < config.max_refine_rounds:
        current = IbsSurface(surface, body_samples, env_samples, clip_center,
                             clip_radius)
        try:
            new_body, new_env = collision_sample(
                current, body, env, config.collision_subsample,
                int(rng.integers(0, 2**31 - 1)))
        except NoCollisions:
            break
        body_samples = _merge_new(body_samples, new_body)
        env_samples = _merge_new(env_samples, new_env)
        body_samples, env_samples = counterpart_sample(body, env, body_samples,
                                                       env_samples)
        surface = _ridge_surface(body_samples.positions, env_samples.positions,
                                 clip_center, clip_radius)
        rounds += 1

    if config.enforce_equidistance:
        # drop ridge pieces that only exist because a crevice was undersampled:
        # their vertices are measurably closer to one mesh than the other
        db, _, _ = get_bvh(body).closest_point(surface.vertices)
        de, _, _ = get_bvh(env).closest_point(surface.vertices)
        bad = np.abs(db - de) > config.eps_eq_fraction * clip_radius
        if bad.any():
            keep = ~bad[surface.faces].any(axis=1)
            if not keep.any():
                raise EmptyInterface("no ridge triangle meets the "
                                     "equidistance tolerance")
            surface = _subset_mesh(surface, keep)

    pierce = pierce_counts(surface, body, env)
    if pierce > 0:
        warnings.warn(
            f"bisector surface still pierces {pierce} triangle(s) after "
            f"{rounds} refinement round(s)", stacklevel=2)
    return IbsSurface(surface, body_samples, env_samples, clip_center,
                      clip_radius, pierce_count=pierce, refine_rounds=rounds)


def _subset_mesh(mesh: TriangleMesh, face_mask) -> TriangleMesh:
    faces = mesh.faces[face_mask]
    used = np.unique(faces)
    remap = np.full(mesh.n_vertices, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return TriangleMesh.from_arrays(mesh.vertices[used], remap[faces])


def equidistance_residuals(ibs: IbsSurface, body: TriangleMesh,
                           env: TriangleMesh) -> np.ndarray:
    """|d(v, body) - d(v, env)| at every surface vertex."""
    db, _, _ = get_bvh(body).closest_point(ibs.mesh.vertices)
    de, _, _ = get_bvh(env).closest_point(ibs.mesh.vertices)
    return np.abs(db - de)


def export_debug_ply(ibs: IbsSurface, body: TriangleMesh, env: TriangleMesh,
                     path):
    """Write the surface as PLY with a per-vertex equidist_residual scalar."""
    from .geometry.meshio import save_mesh
    res = equidistance_residuals(ibs, body, env)
    save_mesh(ibs.mesh, path, binary=True,
              vertex_scalars={"equidist_residual": res})
