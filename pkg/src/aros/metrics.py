"""Physical-plausibility metrics for placed bodies, and batch evaluation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .descriptor import AffordanceDescriptor
from .detector import detect
from .errors import BodyOutsideGrid
from .placement import (OptimizerConfig, OptimizerKind, PlacedBody,
                        optimize_downward, optimize_icp, optimize_sdfgap, place)
from .scene import SceneIndex
from .geometry.sdf import SdfGrid


@dataclass(frozen=True)
class PlausibilityMetrics:
    """Per-body scores; collision_depth is in meters (reports use cm)."""

    non_collision: float
    contact: int
    collision_depth: float


def score_vertices(values: np.ndarray) -> PlausibilityMetrics:
    """Scores from per-vertex signed distances.

    contact = any value < 0; non_collision = fraction of values > 0 (exact
    zeros count as neither); collision_depth = mean penetration depth over
    penetrating vertices, 0 when there are none.
    """
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    neg = values < 0
    contact = int(neg.any())
    non_collision = float((values > 0).sum()) / n
    depth = float((-values[neg]).mean()) if neg.any() else 0.0
    return PlausibilityMetrics(non_collision, contact, depth)


def score_body(body: PlacedBody, index: SceneIndex,
               sdf: Optional[SdfGrid] = None) -> PlausibilityMetrics:
    """Evaluate the index SDF (trilinear) at every body vertex.

    Raises BodyOutsideGrid when the body leaves the grid. An alternative
    grid (e.g. the raw-scene SDF) can be supplied for scoring.
    """
    grid = sdf if sdf is not None else index.sdf
    verts = body.mesh.vertices
    if not grid.contains(verts).all():
        raise BodyOutsideGrid("body vertices outside the SDF grid")
    return score_vertices(grid.interpolate(verts))


def run_optimizer(body: PlacedBody, index: SceneIndex,
                  descriptor: AffordanceDescriptor,
                  config: OptimizerConfig) -> PlacedBody:
    if config.kind is OptimizerKind.NONE:
        return body
    if config.kind is OptimizerKind.DOWNWARD:
        return optimize_downward(body, index, step=config.step_size)
    if config.kind is OptimizerKind.ICP:
        return optimize_icp(body, index, config)
    if config.kind is OptimizerKind.SDF_GAP:
        return optimize_sdfgap(body, index, descriptor, config)
    raise ValueError(f"unknown optimizer kind {config.kind}")


@dataclass
class EvaluationRow:
    descriptor: str
    n_points: int
    n_accepted: int
    accept_rate: float
    non_collision: float
    contact: float
    collision_depth: float  # meters


def evaluate_batch(descriptors, index: SceneIndex, points,
                   optimizer: OptimizerConfig = None,
                   score_sdf: Optional[SdfGrid] = None):
    """detect -> place -> optimize -> score over every (descriptor, point).

    `points` is a list of (point, normal-or-None). Returns per-descriptor
    EvaluationRows plus an aggregate row labelled "all"; metric fields are
    means over accepted placements.
    """
    optimizer = optimizer or OptimizerConfig()
    rows = []
    all_metrics = []
    total_points = 0
    total_accepted = 0
    for d in descriptors:
        metrics = []
        for point, normal in points:
            result = detect(d, index, point, normal)
            if not result.accepted:
                continue
            body = place(d, result, point)
            body = run_optimizer(body, index, d, optimizer)
            metrics.append(score_body(body, index, sdf=score_sdf))
        n_acc = len(metrics)
        rows.append(_summarize(d.label, len(points), n_acc, metrics))
        all_metrics.extend(metrics)
        total_points += len(points)
        total_accepted += n_acc
    rows.append(_summarize("all", total_points, total_accepted, all_metrics))
    return rows


def _summarize(label, n_points, n_accepted, metrics) -> EvaluationRow:
    if metrics:
        nc = float(np.mean([m.non_collision for m in metrics]))
        ct = float(np.mean([m.contact for m in metrics]))
        cd = float(np.mean([m.collision_depth for m in metrics]))
    else:
        nc = ct = cd = float("nan")
    return EvaluationRow(label, n_points, n_accepted,
                         n_accepted / n_points if n_points else 0.0, nc, ct, cd)
