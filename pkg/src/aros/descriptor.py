"""The trained affordance descriptor: distance-weighted provenance vectors,
clearance vectors, training normal, body snapshot with contact regions, and a
compact binary serialization.

Vector data is quantized to float32 at extraction time so the in-memory
descriptor, the serialized descriptor, and the calibrated thresholds all see
exactly the same numbers.
"""

from __future__ import annotations

import math
import struct
import warnings
import zlib
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from ._scoring import score_rays
from .config import TrainConfig
from .errors import (ChecksumMismatch, FormatVersionMismatch,
                     InsufficientCandidates, ReferenceOffSurface)
from .geometry.bvh import get_bvh
from .geometry.mesh import RigidTransform, TriangleMesh
from .geometry.meshio import load_mesh, save_mesh
from .geometry.sampling import Source, poisson_disc_sample
from .ibs import IbsSurface, build_ibs

DESCRIPTOR_MAGIC = b"AROSAD01"
DESCRIPTOR_VERSION = 1
ENV_SNAP_TOL = 1e-4


@dataclass(frozen=True)
class DetectionThresholds:
    """Interaction-wise gates used at detection time."""

    max_kappa: float
    max_missings: int
    max_collisions: int
    max_long: float
    rho_n: float = math.pi / 3
    n_phi: int = 8

    def __post_init__(self):
        if min(self.max_kappa, self.max_missings, self.max_collisions,
               self.max_long) < 0:
            raise ValueError("thresholds must be non-negative")
        if not 0.0 < self.rho_n <= math.pi:
            raise ValueError("rho_n must be in (0, pi]")
        if self.n_phi < 1:
            raise ValueError("n_phi must be >= 1")


@dataclass(frozen=True)
class ProvenanceVector:
    origin: np.ndarray  # relative to the training reference point
    delta: np.ndarray   # to the nearest environment point


@dataclass(frozen=True)
class ClearanceVector:
    origin: np.ndarray  # relative to the training reference point
    vector: np.ndarray  # along the body normal, clamped


class _VectorSet:
    def __init__(self, origins, vectors):
        self.origins = np.ascontiguousarray(origins, dtype=np.float32)
        self.vectors = np.ascontiguousarray(vectors, dtype=np.float32)
        self.origins.setflags(write=False)
        self.vectors.setflags(write=False)

    def __len__(self):
        return len(self.origins)


class ProvenanceSet(_VectorSet):
    @property
    def deltas(self):
        return self.vectors

    def __getitem__(self, i):
        return ProvenanceVector(self.origins[i], self.vectors[i])


class ClearanceSet(_VectorSet):
    def __getitem__(self, i):
        return ClearanceVector(self.origins[i], self.vectors[i])


def weighted_sample_without_replacement(weights, k, rng) -> np.ndarray:
    """k distinct indices drawn with probability proportional to weight.

    Efraimidis-Spirakis keys: u^(1/w) ranks items; zero-weight items only
    fill out the draw after every positive-weight item.
    """
    weights = np.asarray(weights, dtype=np.float64)
    u = rng.random(len(weights))
    safe = np.where(weights > 0, weights, 1.0)
    keys = np.where(weights > 0, u ** (1.0 / safe), -1.0)
    return np.argsort(keys)[::-1][:k]


@dataclass(frozen=True)
class AffordanceDescriptor:
    """Everything needed to detect one trained interaction and place its body."""

    label: str
    provenance: ProvenanceSet
    clearance: ClearanceSet
    train_normal: np.ndarray
    thresholds: DetectionThresholds
    body_snapshot: Optional[TriangleMesh] = None
    contact_vertices: Optional[np.ndarray] = None

    @property
    def num_pv(self) -> int:
        return len(self.provenance)

    @property
    def num_cv(self) -> int:
        return len(self.clearance)

    def without_clearance(self) -> "AffordanceDescriptor":
        """Ablation variant: clearance collision gating disabled."""
        return replace(self, clearance=ClearanceSet(np.empty((0, 3)), np.empty((0, 3))))

    def with_thresholds(self, **kwargs) -> "AffordanceDescriptor":
        return replace(self, thresholds=replace(self.thresholds, **kwargs))


def _provenance_draw(ibs: IbsSurface, env: TriangleMesh, p_train, num_pv,
                     seed, max_long):
    """Candidate construction + weighted draw; float64, frame-faithful."""
    p_train = np.asarray(p_train, dtype=np.float64)
    origins = ibs.mesh.vertices
    d, cp, _ = get_bvh(env).closest_point(origins)

    ok = d > 0
    ok &= np.linalg.norm(origins - p_train, axis=1) <= max_long
    # end-on-a-sample membership: exact closest points land between samples,
    # so the snap tolerance follows each sample's own nearest-neighbor spacing
    env_pts = ibs.env_samples.positions
    tree = cKDTree(env_pts)
    nn_d, _ = tree.query(env_pts, k=2)
    spacing = nn_d[:, 1]
    snap_d, snap_i = tree.query(cp, k=1)
    ok &= snap_d <= np.maximum(ENV_SNAP_TOL, spacing[snap_i])

    rel = origins[ok] - p_train
    deltas = cp[ok] - origins[ok]
    norms = d[ok]

    # robustness filter: detection re-casts these rays after float32
    # rounding, so the hit must sit away from triangle edges and not graze
    good = norms > 0
    dirs = np.zeros_like(deltas)
    dirs[good] = deltas[good] / norms[good, None]
    t, f = get_bvh(env).raycast(origins[ok], dirs,
                                np.full(len(rel), float(max_long)))
    good &= (f >= 0) & (np.abs(t - norms) <= 1e-9)
    hit_f = np.where(f >= 0, f, 0)
    hit_pts = origins[ok] + t[:, None] * dirs
    margin = _edge_margins(env, hit_f, hit_pts)
    good &= margin >= 1e-6 * (1.0 + norms)
    incidence = np.abs(np.einsum("ij,ij->i", dirs, env.face_normals[hit_f]))
    good &= incidence >= 0.1

    rel = rel[good]
    deltas = deltas[good]
    norms = norms[good]
    n = len(rel)
    if n == 0:
        raise InsufficientCandidates("no provenance candidates qualify")

    # canonical candidate order (invariant keys) for a reproducible draw
    order = np.lexsort((rel[:, 2], np.linalg.norm(rel, axis=1), norms))
    rel = rel[order]
    deltas = deltas[order]
    norms = norms[order]

    vmin = norms.min()
    vmax = norms.max()
    if vmax - vmin <= 1e-12:
        weights = np.ones(n)
    else:
        weights = 1.0 - (norms - vmin) / (vmax - vmin)

    rng = np.random.default_rng(seed)
    if n >= num_pv:
        pick = weighted_sample_without_replacement(weights, num_pv, rng)
    else:
        warnings.warn(
            f"only {n} provenance candidates for num_pv={num_pv}; "
            "sampling with replacement", stacklevel=2)
        total = weights.sum()
        p = weights / total if total > 0 else None
        pick = rng.choice(n, size=num_pv, replace=True, p=p)
    return rel[pick], deltas[pick]


def _edge_margins(mesh: TriangleMesh, face_ids, points):
    """Distance from each point to the nearest edge of its triangle."""
    tris = mesh.triangles[face_ids]
    out = np.full(len(points), np.inf)
    for e in range(3):
        a = tris[:, e]
        b = tris[:, (e + 1) % 3]
        ab = b - a
        ap = points - a
        denom = np.einsum("ij,ij->i", ab, ab)
        tt = np.clip(np.einsum("ij,ij->i", ap, ab) / np.maximum(denom, 1e-300),
                     0.0, 1.0)
        closest = a + tt[:, None] * ab
        out = np.minimum(out, np.linalg.norm(points - closest, axis=1))
    return out


def extract_provenance(ibs: IbsSurface, env: TriangleMesh, p_train, num_pv,
                       seed, max_long=None) -> ProvenanceSet:
    """Distance-weighted draw of surface-to-environment vectors.

    Candidates start at the ridge surface vertices and end at their nearest
    environment point; only those ending on the sampled part of the
    environment qualify (within the local sample spacing, at least 1e-4 m),
    and origins beyond max_long of the reference are dropped (they could
    never score at detection time). Weights fall linearly from 1 at the
    shortest candidate to 0 at the longest; the draw is without replacement,
    falling back to replacement with a warning when fewer than num_pv
    candidates exist.
    """
    if max_long is None:
        max_long = 1.2 * ibs.clip_radius
    rel, deltas = _provenance_draw(ibs, env, p_train, num_pv, seed, max_long)
    return ProvenanceSet(rel, deltas)


def _clearance_rays(body: TriangleMesh, ibs: IbsSurface, p_train, num_cv,
                    d_max, seed):
    if num_cv < 1:
        raise ValueError("num_cv must be >= 1")
    if d_max <= 0:
        raise ValueError("d_max must be positive")
    p_train = np.asarray(p_train, dtype=np.float64)
    samples = poisson_disc_sample(body, num_cv, seed, Source.BODY)
    t, f = get_bvh(ibs.mesh).raycast(samples.positions, samples.normals,
                                     np.full(num_cv, float(d_max)))
    lengths = np.where(f >= 0, t, d_max)
    vectors = samples.normals * lengths[:, None]
    return samples.positions - p_train, vectors


def extract_clearance(body: TriangleMesh, ibs: IbsSurface, p_train, num_cv,
                      d_max, seed) -> ClearanceSet:
    """Free-space requirements: body-normal rays clamped at the ridge surface.

    Each of num_cv evenly distributed body samples casts along its normal;
    the vector length is the distance to the first ridge hit, clamped to
    d_max, and rays that miss the clipped surface entirely get d_max.
    """
    origins, vectors = _clearance_rays(body, ibs, p_train, num_cv, d_max, seed)
    return ClearanceSet(origins, vectors)


def _snap(mesh: TriangleMesh, grid=1e-8) -> TriangleMesh:
    return TriangleMesh.from_arrays(np.round(mesh.vertices / grid) * grid,
                                    mesh.faces)


def _canonical_frame(body: TriangleMesh, p_train) -> "RigidTransform":
    """World -> canonical: p_train at the origin, azimuth fixed by the body.

    Training runs in this frame so that rigidly moved examples make exactly
    the same discrete sampling decisions (grid hashes, welds, draws) and
    produce the same descriptor up to rotation.
    """
    p_train = np.asarray(p_train, dtype=np.float64)
    offset = body.vertices.mean(axis=0) - p_train
    if np.hypot(offset[0], offset[1]) > 1e-3:
        theta = np.arctan2(offset[1], offset[0])
    else:
        # body centred over the reference: use the dominant horizontal axis
        rel = body.vertices - p_train
        cov = rel[:, :2].T @ rel[:, :2]
        _, vecs = np.linalg.eigh(cov)
        axis = vecs[:, -1]
        skew = ((rel[:, :2] @ axis) ** 3).sum()
        if skew < 0:
            axis = -axis
        theta = np.arctan2(axis[1], axis[0])
    rot = RigidTransform.rot_z(-theta).rotation
    return RigidTransform(rot, -rot @ p_train)


def train(body: TriangleMesh, env: TriangleMesh, p_train,
          config: TrainConfig = None, seed: int = 0) -> AffordanceDescriptor:
    """One-shot training: build the bisector surface, extract both vector
    families, snapshot the body, and calibrate detection thresholds.

    Auto-calibration sets max_kappa to three times the alignment score of the
    descriptor re-scored against its own training scene, max_missings to 10%
    of num_pv, and max_collisions to 5% of num_cv; explicit config values win.
    """
    config = config or TrainConfig()
    p_train = np.asarray(p_train, dtype=np.float64)

    dist, cp, face = (lambda r: (float(r[0][0]), r[1][0], int(r[2][0])))(
        get_bvh(env).closest_point(p_train))
    if dist > ENV_SNAP_TOL:
        raise ReferenceOffSurface(
            f"p_train is {dist:.2e} m from the environment surface")

    canon = _canonical_frame(body, p_train)
    back = canon.rotation.T
    # snap canonical coordinates to a 10 nm grid: rigidly moved copies of one
    # example then run through qhull and every sampling decision bit-for-bit
    body_c = _snap(body.transformed(canon))
    env_c = _snap(env.transformed(canon))
    origin = np.zeros(3)

    seeds = np.random.SeedSequence(seed).generate_state(4)
    ibs = build_ibs(body_c, env_c, config.ibs, seed=int(seeds[0]))
    max_long = 1.2 * ibs.clip_radius

    prov_o, prov_v = _provenance_draw(ibs, env_c, origin, config.num_pv,
                                      int(seeds[1]), max_long)
    clear_o, clear_v = _clearance_rays(body_c, ibs, origin, config.num_cv,
                                       config.d_max, int(seeds[2]))
    provenance = ProvenanceSet(prov_o @ back.T, prov_v @ back.T)
    clearance = ClearanceSet(clear_o @ back.T, clear_v @ back.T)

    train_normal = env.interpolated_normal(face, cp)
    body_snapshot = body.translated(-p_train)
    d_body, _, _ = get_bvh(env_c).closest_point(body_c.vertices)
    contact_vertices = np.flatnonzero(d_body <= config.contact_eps)

    env_rc = get_bvh(env).raycast
    self_kappa, self_missing, self_collisions = score_rays(
        provenance.origins, provenance.deltas, clearance.origins,
        clearance.vectors, env_rc, p_train, 0.0, max_long)
    if self_missing > 0:
        warnings.warn(f"{self_missing} provenance rays miss their own "
                      "training scene", stacklevel=2)

    # the budget must cover the grazing rays the training pose itself
    # produces (near-contact regions), or self-detection would fail
    auto_collisions = max(int(0.05 * config.num_cv),
                          self_collisions + int(0.02 * config.num_cv))
    thresholds = DetectionThresholds(
        max_kappa=(config.max_kappa if config.max_kappa is not None
                   else 3.0 * self_kappa),
        max_missings=(config.max_missings if config.max_missings is not None
                      else int(0.10 * config.num_pv)),
        max_collisions=(config.max_collisions if config.max_collisions is not None
                        else auto_collisions),
        max_long=max_long,
        rho_n=config.rho_n,
        n_phi=config.n_phi,
    )
    return AffordanceDescriptor(
        label=config.label,
        provenance=provenance,
        clearance=clearance,
        train_normal=train_normal.astype(np.float32),
        thresholds=thresholds,
        body_snapshot=body_snapshot,
        contact_vertices=contact_vertices,
    )


# --- serialization ----------------------------------------------------------


def save_descriptor(descriptor: AffordanceDescriptor, path):
    """Write the compact core file plus body-snapshot sidecars.

    Core layout (little-endian): magic, u32 version, u32 num_pv, u32 num_cv,
    u16-length-prefixed UTF-8 label, 3xf32 normal, 6xf32 thresholds,
    num_pv x 6 f32 provenance, num_cv x 6 f32 clearance, u32 CRC32.
    """
    path = Path(path)
    label_bytes = descriptor.label.encode("utf-8")
    th = descriptor.thresholds
    payload = bytearray()
    payload += struct.pack("<III", DESCRIPTOR_VERSION, descriptor.num_pv,
                           descriptor.num_cv)
    payload += struct.pack("<H", len(label_bytes)) + label_bytes
    payload += np.asarray(descriptor.train_normal, dtype="<f4").tobytes()
    payload += np.array([th.max_kappa, th.max_missings, th.max_collisions,
                         th.max_long, th.rho_n, th.n_phi], dtype="<f4").tobytes()
    prov = np.hstack([descriptor.provenance.origins, descriptor.provenance.vectors])
    clear = np.hstack([descriptor.clearance.origins, descriptor.clearance.vectors])
    payload += prov.astype("<f4").tobytes()
    payload += clear.astype("<f4").tobytes()
    crc = zlib.crc32(bytes(payload))
    with path.open("wb") as fh:
        fh.write(DESCRIPTOR_MAGIC)
        fh.write(payload)
        fh.write(struct.pack("<I", crc))

    if descriptor.body_snapshot is not None:
        save_mesh(descriptor.body_snapshot, _body_path(path), binary=True)
        contacts = np.asarray(descriptor.contact_vertices
                              if descriptor.contact_vertices is not None else [],
                              dtype="<u4")
        with _contact_path(path).open("wb") as fh:
            fh.write(struct.pack("<I", len(contacts)))
            fh.write(contacts.tobytes())


def _body_path(path: Path) -> Path:
    return path.with_name(path.name + ".body.ply")


def _contact_path(path: Path) -> Path:
    return path.with_name(path.name + ".contact.bin")


def load_descriptor(path) -> AffordanceDescriptor:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 8 or raw[:8] != DESCRIPTOR_MAGIC:
        raise FormatVersionMismatch(f"{path}: not a descriptor file (bad magic)")
    if len(raw) < 16:
        raise ChecksumMismatch(f"{path}: truncated descriptor")
    payload = raw[8:-4]
    (crc,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(payload) != crc:
        raise ChecksumMismatch(f"{path}: descriptor failed CRC check")
    version, num_pv, num_cv = struct.unpack_from("<III", payload, 0)
    if version != DESCRIPTOR_VERSION:
        raise FormatVersionMismatch(
            f"{path}: descriptor version {version}, expected {DESCRIPTOR_VERSION}")
    off = 12
    (label_len,) = struct.unpack_from("<H", payload, off)
    off += 2
    label = payload[off:off + label_len].decode("utf-8")
    off += label_len
    normal = np.frombuffer(payload, dtype="<f4", count=3, offset=off).copy()
    off += 12
    tvals = np.frombuffer(payload, dtype="<f4", count=6, offset=off)
    off += 24
    thresholds = DetectionThresholds(
        max_kappa=float(tvals[0]), max_missings=int(round(float(tvals[1]))),
        max_collisions=int(round(float(tvals[2]))), max_long=float(tvals[3]),
        rho_n=float(tvals[4]), n_phi=int(round(float(tvals[5]))))
    expected = off + (num_pv + num_cv) * 24
    if len(payload) < expected:
        raise ChecksumMismatch(f"{path}: descriptor arrays truncated")
    prov = np.frombuffer(payload, dtype="<f4", count=num_pv * 6,
                         offset=off).reshape(num_pv, 6)
    off += num_pv * 24
    clear = np.frombuffer(payload, dtype="<f4", count=num_cv * 6,
                          offset=off).reshape(num_cv, 6)

    body = None
    contacts = None
    body_path = _body_path(path)
    if body_path.exists():
        body = load_mesh(body_path)
        cpath = _contact_path(path)
        if cpath.exists():
            braw = cpath.read_bytes()
            (n,) = struct.unpack_from("<I", braw, 0)
            contacts = np.frombuffer(braw, dtype="<u4", count=n, offset=4).astype(np.int64)
    return AffordanceDescriptor(
        label=label,
        provenance=ProvenanceSet(prov[:, :3], prov[:, 3:]),
        clearance=ClearanceSet(clear[:, :3], clear[:, 3:]),
        train_normal=normal,
        thresholds=thresholds,
        body_snapshot=body,
        contact_vertices=contacts,
    )


def core_size_bytes(num_pv=512, num_cv=256, label="interaction") -> int:
    """Computed on-disk size of the descriptor core file."""
    return 8 + 12 + 2 + len(label.encode("utf-8")) + 12 + 24 \
        + num_pv * 24 + num_cv * 24 + 4
