"""Test-scene preparation: spherical fillers behind scan surfaces, the
filler-augmented mesh for ray queries, and a signed-distance grid.

Scans are open surfaces full of holes; fillers pad the space behind them so
collision rays and SDF lookups cannot slip through gaps. The augmented SDF is
the pointwise minimum of the raw-scene pseudonormal SDF and the analytic
sphere SDFs: a mesh-based signed distance over the union would report the
buried sphere surfaces and could *raise* values inside the scene, breaking
the guarantee that adding geometry never increases the field.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .config import IndexConfig
from .geometry.bvh import get_bvh
from .geometry.mesh import TriangleMesh, grid_mesh, icosphere
from .geometry.meshio import load_mesh, save_mesh
from .geometry.sampling import sample_surface_evenly
from .geometry.sdf import SdfGrid, compute_sdf, grid_nodes, load_sdf, save_sdf

FILLER_SPACING_FACTOR = 6.0 / 9.0  # sample spacing as a fraction of the radius


@dataclass(frozen=True)
class SphericalFiller:
    center: np.ndarray
    radius: float


class SceneIndex:
    """A scene bundled with everything detection needs, immutable once built."""

    def __init__(self, scene: TriangleMesh, fillers, augmented: TriangleMesh,
                 sdf: SdfGrid):
        self.scene = scene
        self.fillers = list(fillers)
        self.augmented = augmented
        self.sdf = sdf

    def raycast(self, origins, dirs, max_ts, raw=False):
        """First hit against the filler-augmented scene (or the raw scan)."""
        mesh = self.scene if raw else self.augmented
        return get_bvh(mesh).raycast(origins, dirs, max_ts)

    @property
    def filler_centers(self) -> np.ndarray:
        if not self.fillers:
            return np.empty((0, 3))
        return np.array([f.center for f in self.fillers])

    @property
    def filler_radii(self) -> np.ndarray:
        return np.array([f.radius for f in self.fillers])


def generate_fillers(scene: TriangleMesh, radius: float, seed: int,
                     base_mesh: TriangleMesh = None):
    """Spheres tangent to (and buried behind) the scanned surface.

    Surface samples spaced ~6r/9 apart keep only locations whose inward ray
    of length 2r is unobstructed; each survivor gets a sphere of the given
    radius centred r behind it.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    host = base_mesh if base_mesh is not None else scene
    samples = sample_surface_evenly(host, FILLER_SPACING_FACTOR * radius, seed)
    if len(samples) == 0:
        return []
    origins = samples.positions
    # face normals, not interpolated ones: a sphere pushed in along a normal
    # tilted at a crease would poke out above the neighbouring face
    inward = -host.face_normals[samples.face_ids]
    _, f = get_bvh(scene).raycast(origins, inward, np.full(len(samples), 2.0 * radius))
    clear = f < 0
    centers = origins[clear] + radius * inward[clear]
    return [SphericalFiller(c, radius) for c in centers]


def tessellate_fillers(scene: TriangleMesh, fillers, subdivisions=2):
    """Filler spheres as one mesh, cropped against the scene.

    Sphere triangles with any corner in visible free space (positive
    pseudonormal side of the scan) are discarded; everything hidden behind
    the surface stays, so the augmented mesh never shadows real geometry.
    """
    if not fillers:
        return None
    proto = {}
    scene_bvh = get_bvh(scene)
    verts = []
    faces = []
    off = 0
    for filler in fillers:
        r = float(filler.radius)
        if r not in proto:
            proto[r] = icosphere(r, subdivisions=subdivisions)
        sphere = proto[r]
        v = sphere.vertices + filler.center
        sd = scene_bvh.signed_distance(v)
        keep = (sd[sphere.faces] <= 1e-9).all(axis=1)
        if not keep.any():
            continue
        kept = sphere.faces[keep]
        used = np.unique(kept)
        remap = np.full(len(v), -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        verts.append(v[used])
        faces.append(remap[kept] + off)
        off += len(used)
    if not faces:
        return None
    return TriangleMesh.from_arrays(np.vstack(verts), np.vstack(faces))


def _filler_min_sdf(points, fillers) -> np.ndarray:
    """min over spheres of (|x - c| - r), grouped by radius for KD queries."""
    out = np.full(len(points), np.inf)
    if not fillers:
        return out
    by_radius = {}
    for f in fillers:
        by_radius.setdefault(float(f.radius), []).append(f.center)
    for r, centers in by_radius.items():
        d, _ = cKDTree(np.asarray(centers)).query(points, k=1)
        out = np.minimum(out, d - r)
    return out


def build_scene_index(scene: TriangleMesh, config: IndexConfig = None,
                      seed: int = 0) -> SceneIndex:
    """Prepare a scene for detection: fillers, augmented mesh, SDF grid.

    Default fillers: one set per radius in config.filler_radii over the scan,
    plus a coarse set tiling a plane below the scene bounding box to pad the
    scan boundary.
    """
    config = config or IndexConfig()
    fillers = []
    if config.use_fillers:
        seeds = np.random.SeedSequence(seed).generate_state(
            len(config.filler_radii) + 1)
        for i, r in enumerate(config.filler_radii):
            fillers.extend(generate_fillers(scene, float(r), int(seeds[i])))
        if config.base_filler_radius > 0:
            lo, hi = scene.bounds
            r = float(config.base_filler_radius)
            margin = 2 * r
            plane = grid_mesh(hi[0] - lo[0] + 2 * margin,
                              hi[1] - lo[1] + 2 * margin,
                              nx=max(2, int((hi[0] - lo[0]) / r) + 2),
                              ny=max(2, int((hi[1] - lo[1]) / r) + 2),
                              z=lo[2] - config.base_plane_drop,
                              center=((lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2))
            fillers.extend(generate_fillers(scene, r, int(seeds[-1]),
                                            base_mesh=plane))

    filler_mesh = tessellate_fillers(scene, fillers, config.sphere_subdivisions)
    if filler_mesh is not None:
        augmented = TriangleMesh.concatenate([scene, filler_mesh])
    else:
        augmented = scene

    lo, hi = augmented.bounds
    dims = tuple(int(d) for d in np.broadcast_to(config.sdf_dims, 3))
    pad = config.sdf_padding
    origin = lo - pad
    cell = float(max((hi + pad - origin) / (np.array(dims) - 1)))
    nodes = grid_nodes(origin, cell, dims)
    raw = np.empty(len(nodes))
    scene_bvh = get_bvh(scene)
    chunk = 65536
    for start in range(0, len(nodes), chunk):
        raw[start:start + chunk] = scene_bvh.signed_distance(nodes[start:start + chunk])
    raw32 = raw.astype(np.float32)
    if fillers:
        sphere32 = _filler_min_sdf(nodes, fillers).astype(np.float32)
        values = np.minimum(raw32, sphere32)
    else:
        values = raw32
    sdf = SdfGrid(origin, cell, dims, values.reshape(dims))
    return SceneIndex(scene, fillers, augmented, sdf)


def raw_sdf_grid(index: SceneIndex) -> SdfGrid:
    """The scene's own SDF on the index's grid layout (no fillers)."""
    nodes = grid_nodes(index.sdf.origin, index.sdf.cell_size, index.sdf.dims)
    scene_bvh = get_bvh(index.scene)
    raw = np.empty(len(nodes))
    chunk = 65536
    for start in range(0, len(nodes), chunk):
        raw[start:start + chunk] = scene_bvh.signed_distance(nodes[start:start + chunk])
    return SdfGrid(index.sdf.origin, index.sdf.cell_size, index.sdf.dims,
                   raw.astype(np.float32).reshape(index.sdf.dims))


# --- cache directory --------------------------------------------------------


def save_scene_index(index: SceneIndex, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_mesh(index.scene, directory / "scene.ply", binary=True)
    save_mesh(index.augmented, directory / "augmented.ply", binary=True)
    with (directory / "fillers.bin").open("wb") as fh:
        fh.write(struct.pack("<I", len(index.fillers)))
        for f in index.fillers:
            fh.write(np.asarray(f.center, dtype="<f4").tobytes())
            fh.write(struct.pack("<f", f.radius))
    save_sdf(index.sdf, directory / "sdf.bin")
    (directory / "meta.json").write_text(json.dumps({"version": 1}))


def load_scene_index(directory) -> SceneIndex:
    directory = Path(directory)
    scene = load_mesh(directory / "scene.ply")
    augmented = load_mesh(directory / "augmented.ply")
    raw = (directory / "fillers.bin").read_bytes()
    (count,) = struct.unpack_from("<I", raw, 0)
    fillers = []
    off = 4
    for _ in range(count):
        cx, cy, cz, r = struct.unpack_from("<4f", raw, off)
        off += 16
        fillers.append(SphericalFiller(np.array([cx, cy, cz]), r))
    sdf = load_sdf(directory / "sdf.bin")
    return SceneIndex(scene, fillers, augmented, sdf)
