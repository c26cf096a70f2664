"""Triangle mesh container, rigid transforms, and mesh primitives."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateMesh

DEGENERATE_AREA = 1e-12


def _unit(v, axis=-1):
    n = np.linalg.norm(v, axis=axis, keepdims=True)
    return v / np.where(n > 0, n, 1.0)


@dataclass(frozen=True)
class RigidTransform:
    """Rotation followed by translation: x -> R @ x + t."""

    rotation: np.ndarray
    translation: np.ndarray

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    @staticmethod
    def rot_z(angle: float, pivot=None) -> "RigidTransform":
        c, s = np.cos(angle), np.sin(angle)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        if pivot is None:
            return RigidTransform(rot, np.zeros(3))
        pivot = np.asarray(pivot, dtype=np.float64)
        return RigidTransform(rot, pivot - rot @ pivot)

    @staticmethod
    def translation_of(t) -> "RigidTransform":
        return RigidTransform(np.eye(3), np.asarray(t, dtype=np.float64))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return points @ self.rotation.T + self.translation

    def apply_vectors(self, vecs: np.ndarray) -> np.ndarray:
        return vecs @ self.rotation.T

    def compose(self, inner: "RigidTransform") -> "RigidTransform":
        """self ∘ inner: apply `inner` first, then self."""
        return RigidTransform(self.rotation @ inner.rotation,
                              self.rotation @ inner.translation + self.translation)


@dataclass(frozen=True)
class TriangleMesh:
    """Indexed triangle surface with unit per-vertex normals.

    Invariants: all face indices valid, no face with area <= 1e-12 m²,
    every vertex normal unit length. Arrays are frozen after construction.
    """

    vertices: np.ndarray
    faces: np.ndarray
    vertex_normals: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @staticmethod
    def from_arrays(vertices, faces, vertex_normals=None) -> "TriangleMesh":
        vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        faces = np.ascontiguousarray(faces, dtype=np.int64)
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise DegenerateMesh("faces must be an (F, 3) index array")
        if faces.size and (faces.min() < 0 or faces.max() >= len(vertices)):
            raise DegenerateMesh("face index out of range")
        tri = vertices[faces]
        areas = 0.5 * np.linalg.norm(
            np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
        keep = areas > DEGENERATE_AREA
        if not keep.all():
            faces = faces[keep]
        if len(faces) == 0:
            raise DegenerateMesh("mesh has no non-degenerate faces")
        if vertex_normals is None:
            vertex_normals = _area_weighted_vertex_normals(vertices, faces)
        else:
            vertex_normals = _unit(np.ascontiguousarray(vertex_normals, dtype=np.float64))
        for a in (vertices, faces, vertex_normals):
            a.setflags(write=False)
        return TriangleMesh(vertices, faces, vertex_normals)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def triangles(self) -> np.ndarray:
        """(F, 3, 3) corner positions."""
        if "triangles" not in self._cache:
            t = np.ascontiguousarray(self.vertices[self.faces])
            t.setflags(write=False)
            self._cache["triangles"] = t
        return self._cache["triangles"]

    @property
    def face_normals(self) -> np.ndarray:
        if "face_normals" not in self._cache:
            tri = self.triangles
            n = _unit(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]))
            n.setflags(write=False)
            self._cache["face_normals"] = n
        return self._cache["face_normals"]

    @property
    def face_areas(self) -> np.ndarray:
        if "face_areas" not in self._cache:
            tri = self.triangles
            a = 0.5 * np.linalg.norm(
                np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
            a.setflags(write=False)
            self._cache["face_areas"] = a
        return self._cache["face_areas"]

    @property
    def area(self) -> float:
        return float(self.face_areas.sum())

    @property
    def bounds(self):
        """(min corner, max corner)."""
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def interpolated_normal(self, face_id, point) -> np.ndarray:
        """Barycentric-interpolated vertex normal at a point on a face."""
        u, v, w = barycentric(self.triangles[face_id], np.asarray(point, dtype=np.float64))
        n = (u * self.vertex_normals[self.faces[face_id, 0]]
             + v * self.vertex_normals[self.faces[face_id, 1]]
             + w * self.vertex_normals[self.faces[face_id, 2]])
        norm = np.linalg.norm(n)
        if norm < 1e-12:
            return self.face_normals[face_id].copy()
        return n / norm

    def interpolated_normals(self, face_ids, points) -> np.ndarray:
        """Vectorized interpolated_normal."""
        tris = self.triangles[face_ids]
        u, v, w = barycentric_many(tris, np.asarray(points, dtype=np.float64))
        nrm = (u[:, None] * self.vertex_normals[self.faces[face_ids, 0]]
               + v[:, None] * self.vertex_normals[self.faces[face_ids, 1]]
               + w[:, None] * self.vertex_normals[self.faces[face_ids, 2]])
        bad = np.linalg.norm(nrm, axis=1) < 1e-12
        if bad.any():
            nrm[bad] = self.face_normals[np.asarray(face_ids)[bad]]
        return _unit(nrm)

    def transformed(self, xf: RigidTransform) -> "TriangleMesh":
        return TriangleMesh.from_arrays(xf.apply(self.vertices), self.faces,
                                        xf.apply_vectors(self.vertex_normals))

    def translated(self, offset) -> "TriangleMesh":
        return self.transformed(RigidTransform.translation_of(offset))

    @staticmethod
    def concatenate(meshes) -> "TriangleMesh":
        verts, faces, normals = [], [], []
        off = 0
        for m in meshes:
            verts.append(m.vertices)
            faces.append(m.faces + off)
            normals.append(m.vertex_normals)
            off += m.n_vertices
        return TriangleMesh.from_arrays(np.vstack(verts), np.vstack(faces),
                                        np.vstack(normals))


def _area_weighted_vertex_normals(vertices, faces):
    tri = vertices[faces]
    fn = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])  # 2*area weighted
    acc = np.zeros_like(vertices)
    for k in range(3):
        np.add.at(acc, faces[:, k], fn)
    norms = np.linalg.norm(acc, axis=1)
    # isolated or balanced vertices get an arbitrary unit normal
    bad = norms < 1e-20
    acc[bad] = (0.0, 0.0, 1.0)
    norms[bad] = 1.0
    return acc / norms[:, None]


def barycentric(tri, p):
    """Barycentric coordinates (u, v, w) of p in triangle tri (3, 3)."""
    v0 = tri[1] - tri[0]
    v1 = tri[2] - tri[0]
    v2 = p - tri[0]
    d00 = v0 @ v0
    d01 = v0 @ v1
    d11 = v1 @ v1
    d20 = v2 @ v0
    d21 = v2 @ v1
    denom = d00 * d11 - d01 * d01
    if denom <= 0:
        return 1.0, 0.0, 0.0
    v = (d11 * d20 - d01 * d21) / denom
    w = (d00 * d21 - d01 * d20) / denom
    return 1.0 - v - w, v, w


def barycentric_many(tris, pts):
    v0 = tris[:, 1] - tris[:, 0]
    v1 = tris[:, 2] - tris[:, 0]
    v2 = pts - tris[:, 0]
    d00 = np.einsum("ij,ij->i", v0, v0)
    d01 = np.einsum("ij,ij->i", v0, v1)
    d11 = np.einsum("ij,ij->i", v1, v1)
    d20 = np.einsum("ij,ij->i", v2, v0)
    d21 = np.einsum("ij,ij->i", v2, v1)
    denom = d00 * d11 - d01 * d01
    safe = np.where(denom > 0, denom, 1.0)
    v = (d11 * d20 - d01 * d21) / safe
    w = (d00 * d21 - d01 * d20) / safe
    v[denom <= 0] = 0.0
    w[denom <= 0] = 0.0
    return 1.0 - v - w, v, w


def weld_vertices(vertices, faces, tol=1e-9):
    """Merge vertices closer than tol and drop collapsed faces."""
    if len(vertices) == 0:
        return vertices, faces
    key = np.round(np.asarray(vertices) / tol).astype(np.int64)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    new_faces = inverse[np.asarray(faces)]
    ok = ((new_faces[:, 0] != new_faces[:, 1])
          & (new_faces[:, 1] != new_faces[:, 2])
          & (new_faces[:, 0] != new_faces[:, 2]))
    return np.asarray(vertices)[first], new_faces[ok]


def min_enclosing_sphere(points, seed=12345):
    """Minimal enclosing sphere (center, radius) via Welzl's move-to-front."""
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    if n == 0:
        raise ValueError("no points")
    order = np.random.default_rng(seed).permutation(n)
    pts = pts[order]
    scale = max(float(np.abs(pts).max()), 1.0)
    eps = 1e-12 * scale * scale

    def sphere_of(support):
        k = len(support)
        if k == 0:
            return pts[0].copy(), 0.0
        if k == 1:
            return support[0].copy(), 0.0
        p0 = support[0]
        rows = [q - p0 for q in support[1:]]
        a = np.array(rows)
        b = 0.5 * np.einsum("ij,ij->i", a, a)
        m = a @ a.T
        try:
            lam = np.linalg.solve(m, b)
        except np.linalg.LinAlgError:
            return None
        c = p0 + lam @ a
        return c, float(np.max(np.linalg.norm(np.array(support) - c, axis=1)) ** 2)

    def contains(c, r2, p):
        d = p - c
        return d @ d <= r2 + eps

    def mes_with(limit, support):
        result = sphere_of(support)
        if result is None:
            result = (support[0].copy(), 0.0)
        c, r2 = result
        if len(support) == 4:
            return c, r2
        for i in range(limit):
            if not contains(c, r2, pts[i]):
                c, r2 = mes_with(i, support + [pts[i]])
        return c, r2

    c, r2 = mes_with(n, [])
    return c, float(np.sqrt(max(r2, 0.0)))


# --- primitives -----------------------------------------------------------


def grid_mesh(size_x, size_y, nx=8, ny=8, z=0.0, center=(0.0, 0.0)):
    """Single-sided rectangular sheet in the z-plane, normals +z."""
    xs = np.linspace(-size_x / 2, size_x / 2, nx + 1) + center[0]
    ys = np.linspace(-size_y / 2, size_y / 2, ny + 1) + center[1]
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, float(z))])
    faces = []
    for i in range(nx):
        for j in range(ny):
            a = i * (ny + 1) + j
            b = (i + 1) * (ny + 1) + j
            faces.append((a, b, b + 1))
            faces.append((a, b + 1, a + 1))
    return TriangleMesh.from_arrays(verts, np.array(faces))


def box_mesh(size, center=(0.0, 0.0, 0.0), segments=1, skip_bottom=False):
    """Axis-aligned box with outward normals; each side an n x n quad grid."""
    sx, sy, sz = (float(s) for s in np.broadcast_to(size, 3))
    cx, cy, cz = center
    n = max(int(segments), 1)
    verts = []
    faces = []

    def add_side(origin, du, dv):
        base = len(verts)
        for i in range(n + 1):
            for j in range(n + 1):
                verts.append(origin + du * (i / n) + dv * (j / n))
        for i in range(n):
            for j in range(n):
                a = base + i * (n + 1) + j
                b = base + (i + 1) * (n + 1) + j
                faces.append((a, b, b + 1))
                faces.append((a, b + 1, a + 1))

    hx, hy, hz = sx / 2, sy / 2, sz / 2
    o = np.array([cx, cy, cz])
    ex = np.array([sx, 0, 0])
    ey = np.array([0, sy, 0])
    ez = np.array([0, 0, sz])
    add_side(o + [-hx, -hy, hz], ex, ey)            # top (+z)
    if not skip_bottom:
        add_side(o + [-hx, -hy, -hz], ey, ex)       # bottom (-z)
    add_side(o + [-hx, -hy, -hz], ex, ez)           # -y
    add_side(o + [hx, -hy, -hz], ey, ez)            # +x
    add_side(o + [hx, hy, -hz], -ex, ez)            # +y
    add_side(o + [-hx, hy, -hz], -ey, ez)           # -x
    v, f = weld_vertices(np.array(verts, dtype=np.float64), np.array(faces))
    return TriangleMesh.from_arrays(v, f)


def icosphere(radius=1.0, center=(0.0, 0.0, 0.0), subdivisions=2):
    """Geodesic sphere from a subdivided icosahedron (20 * 4^s faces)."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ], dtype=np.float64)
    verts = _unit(verts)
    faces = np.array([
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ], dtype=np.int64)
    for _ in range(subdivisions):
        edge_mid = {}
        verts_list = list(verts)

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in edge_mid:
                m = verts_list[a] + verts_list[b]
                m = m / np.linalg.norm(m)
                edge_mid[key] = len(verts_list)
                verts_list.append(m)
            return edge_mid[key]

        new_faces = []
        for a, b, c in faces:
            ab = midpoint(a, b)
            bc = midpoint(b, c)
            ca = midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        verts = np.array(verts_list)
        faces = np.array(new_faces, dtype=np.int64)
    verts = verts * radius + np.asarray(center, dtype=np.float64)
    return TriangleMesh.from_arrays(verts, faces)
