"""Spatial acceleration for mesh queries: raycast, closest point, signed distance.

A MeshBvh is built once per mesh (cached on the mesh) and is read-only
afterwards, so any number of threads may query it concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import _kernels
from .mesh import TriangleMesh, _unit

SELF_HIT_EPS = 1e-9  # hits closer than this are treated as the ray's own origin


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64))
        d = np.asarray(self.direction, dtype=np.float64)
        n = np.linalg.norm(d)
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"ray direction must be unit length, got |d| = {n}")
        object.__setattr__(self, "direction", d)


def _morton_order(centroids):
    lo = centroids.min(axis=0)
    span = centroids.max(axis=0) - lo
    span[span <= 0] = 1.0
    q = np.clip(((centroids - lo) / span * 1023.0).astype(np.uint64), 0, 1023)

    def spread(x):
        x = (x | (x << 16)) & np.uint64(0x30000FF)
        x = (x | (x << 8)) & np.uint64(0x300F00F)
        x = (x | (x << 4)) & np.uint64(0x30C30C3)
        x = (x | (x << 2)) & np.uint64(0x9249249)
        return x

    code = (spread(q[:, 0]) << np.uint64(2)) | (spread(q[:, 1]) << np.uint64(1)) | spread(q[:, 2])
    return np.argsort(code, kind="stable").astype(np.int64)


class MeshBvh:
    """Balanced BVH over a mesh's triangles plus pseudonormal tables."""

    def __init__(self, mesh: TriangleMesh):
        self.mesh = mesh
        tris = np.ascontiguousarray(mesh.triangles, dtype=np.float64)
        self.tris = tris
        prim_lo = tris.min(axis=1)
        prim_hi = tris.max(axis=1)
        centroids = tris.mean(axis=1)
        self.order = _morton_order(centroids)
        lo, hi, left, right = _kernels.build_topology(len(tris), _kernels.LEAF_SIZE)
        self.lo, self.hi, self.left, self.right = lo, hi, left, right
        self.node_lo, self.node_hi = _kernels.fill_bounds(
            lo, hi, left, right, self.order, prim_lo, prim_hi)
        self._pseudo = None

    # -- pseudonormals ------------------------------------------------------

    def _pseudonormals(self):
        if self._pseudo is None:
            mesh = self.mesh
            fn = mesh.face_normals
            faces = mesh.faces
            tri = mesh.triangles

            # angle-weighted vertex normals
            acc = np.zeros((mesh.n_vertices, 3))
            for c in range(3):
                e1 = tri[:, (c + 1) % 3] - tri[:, c]
                e2 = tri[:, (c + 2) % 3] - tri[:, c]
                cosang = np.einsum("ij,ij->i", _unit(e1), _unit(e2))
                ang = np.arccos(np.clip(cosang, -1.0, 1.0))
                np.add.at(acc, faces[:, c], ang[:, None] * fn)
            vn = _unit(acc)
            corner_normals = np.ascontiguousarray(vn[faces])

            # edge normals: sum of incident unit face normals
            edges = faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
            edges_sorted = np.sort(edges, axis=1)
            uniq, inverse = np.unique(edges_sorted, axis=0, return_inverse=True)
            eacc = np.zeros((len(uniq), 3))
            np.add.at(eacc, inverse, np.repeat(fn, 3, axis=0))
            edge_normals = np.ascontiguousarray(
                _unit(eacc)[inverse].reshape(len(faces), 3, 3))

            self._pseudo = (np.ascontiguousarray(fn), edge_normals, corner_normals)
        return self._pseudo

    # -- queries ------------------------------------------------------------

    def raycast(self, origins, dirs, max_ts, t_min=SELF_HIT_EPS):
        """Batch first-hit query. Returns (t, face); face -1 where missed."""
        origins = np.ascontiguousarray(np.atleast_2d(origins), dtype=np.float64)
        dirs = np.ascontiguousarray(np.atleast_2d(dirs), dtype=np.float64)
        max_ts = np.ascontiguousarray(
            np.broadcast_to(np.asarray(max_ts, dtype=np.float64), len(origins)))
        return _kernels.raycast(self.tris, self.node_lo, self.node_hi, self.lo,
                                self.hi, self.left, self.right, self.order,
                                origins, dirs, max_ts, t_min)

    def closest_point(self, queries):
        """Batch exact closest point. Returns (dist, point, face)."""
        queries = np.ascontiguousarray(np.atleast_2d(queries), dtype=np.float64)
        return _kernels.closest_point(self.tris, self.node_lo, self.node_hi,
                                      self.lo, self.hi, self.left, self.right,
                                      self.order, queries)

    def signed_distance(self, queries):
        """Pseudonormal-signed distance; negative behind the surface."""
        queries = np.ascontiguousarray(np.atleast_2d(queries), dtype=np.float64)
        fn, en, cn = self._pseudonormals()
        return _kernels.signed_distance(self.tris, self.node_lo, self.node_hi,
                                        self.lo, self.hi, self.left, self.right,
                                        self.order, fn, en, cn, queries)

    def box_pairs(self, q_lo, q_hi):
        """(tree face, query index) pairs with overlapping boxes."""
        q_lo = np.ascontiguousarray(q_lo, dtype=np.float64)
        q_hi = np.ascontiguousarray(q_hi, dtype=np.float64)
        cap = max(4 * len(q_lo), 1024)
        while True:
            pairs, cnt = _kernels.box_query_pairs(
                self.node_lo, self.node_hi, self.lo, self.hi, self.left,
                self.right, self.order, q_lo, q_hi, cap)
            if cnt >= 0:
                return pairs[:cnt]
            cap *= 4


def get_bvh(mesh: TriangleMesh) -> MeshBvh:
    if "bvh" not in mesh._cache:
        mesh._cache["bvh"] = MeshBvh(mesh)
    return mesh._cache["bvh"]


# -- one-shot convenience API (spec operations) ------------------------------


def closest_point(mesh: TriangleMesh, query):
    """Nearest point on the mesh: (point, distance, face_id)."""
    d, p, f = get_bvh(mesh).closest_point(np.asarray(query, dtype=np.float64))
    return p[0], float(d[0]), int(f[0])


def raycast(mesh: TriangleMesh, ray: Ray, max_t: float):
    """First mesh hit along the ray within (0, max_t], or None."""
    if max_t <= 0:
        raise ValueError("max_t must be positive")
    t, f = get_bvh(mesh).raycast(ray.origin, ray.direction, max_t)
    if f[0] < 0:
        return None
    return float(t[0]), int(f[0])


def signed_distances(mesh: TriangleMesh, queries) -> np.ndarray:
    return get_bvh(mesh).signed_distance(queries)


def intersect_meshes(mesh_a: TriangleMesh, mesh_b: TriangleMesh):
    """Triangle-triangle intersections between two meshes.

    Returns (pairs (n, 2) of [face_a, face_b], segments (n, 2, 3)).
    """
    bvh = get_bvh(mesh_a)
    tb = mesh_b.triangles
    pairs = bvh.box_pairs(tb.min(axis=1), tb.max(axis=1))
    if len(pairs) == 0:
        return np.empty((0, 2), dtype=np.int64), np.empty((0, 2, 3))
    hits, segs = _kernels.tri_tri_segments(
        np.ascontiguousarray(mesh_a.triangles), np.ascontiguousarray(tb),
        pairs, len(pairs))
    return pairs[hits], segs[hits]
