"""Signed-distance grids over triangle meshes, with a binary cache format."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import BodyOutsideGrid, ChecksumMismatch, FormatVersionMismatch
from .bvh import get_bvh
from .mesh import TriangleMesh

SDF_MAGIC = b"AROSDF01"
_CHUNK = 65536


@dataclass(frozen=True)
class SdfGrid:
    """Uniform scalar grid of signed distances (negative inside the surface).

    values[ix, iy, iz] is sampled at origin + (ix, iy, iz) * cell_size.
    """

    origin: np.ndarray
    cell_size: float
    dims: tuple
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        v = np.ascontiguousarray(self.values, dtype=np.float32).reshape(self.dims)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def max_corner(self) -> np.ndarray:
        return self.origin + (np.array(self.dims) - 1) * self.cell_size

    @property
    def cell_diagonal(self) -> float:
        return float(np.sqrt(3.0) * self.cell_size)

    def contains(self, points) -> np.ndarray:
        p = np.atleast_2d(points)
        return ((p >= self.origin) & (p <= self.max_corner + 1e-12)).all(axis=1)

    def interpolate(self, points, clamp=False) -> np.ndarray:
        """Trilinear interpolation at the given points.

        With clamp=False a point outside the grid raises BodyOutsideGrid;
        with clamp=True it is evaluated at the nearest grid position.
        """
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        g = (p - self.origin) / self.cell_size
        hi = np.array(self.dims) - 1
        if clamp:
            g = np.clip(g, 0.0, hi)
        elif ((g < -1e-9) | (g > hi + 1e-9)).any():
            raise BodyOutsideGrid("query point outside SDF grid bounds")
        g = np.clip(g, 0.0, hi)
        # snap to exact nodes so grid points return their stored value exactly
        near = np.abs(g - np.round(g)) < 1e-9
        g[near] = np.round(g[near])
        i0 = np.minimum(g.astype(np.int64), hi - 1)
        f = g - i0
        v = self.values
        ix, iy, iz = i0[:, 0], i0[:, 1], i0[:, 2]
        fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]
        c000 = v[ix, iy, iz]
        c100 = v[ix + 1, iy, iz]
        c010 = v[ix, iy + 1, iz]
        c110 = v[ix + 1, iy + 1, iz]
        c001 = v[ix, iy, iz + 1]
        c101 = v[ix + 1, iy, iz + 1]
        c011 = v[ix, iy + 1, iz + 1]
        c111 = v[ix + 1, iy + 1, iz + 1]
        c00 = c000 * (1 - fx) + c100 * fx
        c10 = c010 * (1 - fx) + c110 * fx
        c01 = c001 * (1 - fx) + c101 * fx
        c11 = c011 * (1 - fx) + c111 * fx
        c0 = c00 * (1 - fy) + c10 * fy
        c1 = c01 * (1 - fy) + c11 * fy
        return c0 * (1 - fz) + c1 * fz

    def gradient(self, points, clamp=True) -> np.ndarray:
        """Central-difference gradient of the interpolated field."""
        h = 0.5 * self.cell_size
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        g = np.empty_like(p)
        for k in range(3):
            dp = np.zeros(3)
            dp[k] = h
            g[:, k] = (self.interpolate(p + dp, clamp=clamp)
                       - self.interpolate(p - dp, clamp=clamp)) / (2 * h)
        return g

    def node_points(self) -> np.ndarray:
        """(N, 3) coordinates of all grid nodes, x-fastest order."""
        nx, ny, nz = self.dims
        ix, iy, iz = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz),
                                 indexing="ij")
        idx = np.column_stack([ix.ravel(), iy.ravel(), iz.ravel()])
        return self.origin + idx * self.cell_size


def grid_nodes(origin, cell_size, dims) -> np.ndarray:
    nx, ny, nz = dims
    ix, iy, iz = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz),
                             indexing="ij")
    idx = np.column_stack([ix.ravel(), iy.ravel(), iz.ravel()]).astype(np.float64)
    return np.asarray(origin, dtype=np.float64) + idx * cell_size


def compute_sdf(mesh: TriangleMesh, dims=(64, 64, 64), padding=0.25) -> SdfGrid:
    """Pseudonormal-signed distance sampled over the padded bounding box."""
    dims = tuple(int(d) for d in np.broadcast_to(dims, 3))
    if min(dims) < 8:
        raise ValueError("SDF grid needs at least 8 nodes per axis")
    lo, hi = mesh.bounds
    lo = lo - padding
    hi = hi + padding
    cell = float((hi - lo).max() / (max(dims) - 1))
    cell = max(cell, 1e-9)
    # cover every axis: widen the cell until the grid spans the padded box
    cell = float(max(cell, *((hi - lo) / (np.array(dims) - 1))))
    bvh = get_bvh(mesh)
    pts = grid_nodes(lo, cell, dims)
    values = np.empty(len(pts), dtype=np.float64)
    for start in range(0, len(pts), _CHUNK):
        chunk = pts[start:start + _CHUNK]
        values[start:start + len(chunk)] = bvh.signed_distance(chunk)
    return SdfGrid(lo, cell, dims, values.reshape(dims).astype(np.float32))


def save_sdf(grid: SdfGrid, path):
    """Binary cache: magic, origin 3xf64, cell f64, dims 3xu32, values f32 x-fastest."""
    path = Path(path)
    payload = bytearray()
    payload += struct.pack("<3d", *grid.origin)
    payload += struct.pack("<d", grid.cell_size)
    payload += struct.pack("<3I", *grid.dims)
    payload += grid.values.transpose(2, 1, 0).astype("<f4").tobytes()
    import zlib
    crc = zlib.crc32(bytes(payload))
    with path.open("wb") as fh:
        fh.write(SDF_MAGIC)
        fh.write(payload)
        fh.write(struct.pack("<I", crc))


def load_sdf(path) -> SdfGrid:
    import zlib
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 8 or raw[:8] != SDF_MAGIC:
        raise FormatVersionMismatch(f"{path}: not an SDF cache (bad magic)")
    if len(raw) < 8 + 44 + 4:
        raise ChecksumMismatch(f"{path}: truncated SDF cache")
    payload = raw[8:-4]
    (crc,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(payload) != crc:
        raise ChecksumMismatch(f"{path}: SDF cache failed CRC check")
    origin = np.array(struct.unpack_from("<3d", payload, 0))
    (cell,) = struct.unpack_from("<d", payload, 24)
    dims = struct.unpack_from("<3I", payload, 32)
    n = dims[0] * dims[1] * dims[2]
    values = np.frombuffer(payload, dtype="<f4", count=n, offset=44)
    values = values.reshape(dims[2], dims[1], dims[0]).transpose(2, 1, 0)
    return SdfGrid(origin, cell, dims, np.ascontiguousarray(values))
