"""Affordance maps over scene surfaces and minimal milestone planning."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .descriptor import AffordanceDescriptor
from .detector import detect, normal_gate, sweep
from .errors import Unreachable
from .geometry.sampling import sample_surface_evenly
from .scene import SceneIndex


@dataclass(frozen=True)
class MapEntry:
    point: np.ndarray
    accepted: bool
    kappa: float
    best_phi: float


@dataclass(frozen=True)
class AffordanceMap:
    descriptor_label: str
    entries: Tuple[MapEntry, ...]
    grid_spacing: float

    @property
    def accepted_points(self) -> np.ndarray:
        pts = [e.point for e in self.entries if e.accepted]
        return np.asarray(pts) if pts else np.empty((0, 3))


def build_map(descriptor: AffordanceDescriptor, index: SceneIndex,
              spacing: float, seed: int = 0, threads: int = 1) -> AffordanceMap:
    """Detect over an even sampling of the scene surface.

    Sample normals failing the descriptor's own normal gate are skipped
    before the full sweep (they would be rejected there anyway).
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    samples = sample_surface_evenly(index.scene, spacing, seed)
    th = descriptor.thresholds
    keep = [i for i in range(len(samples))
            if normal_gate(samples.normals[i], descriptor.train_normal, th.rho_n)]
    entries = []
    if keep:
        items = [(samples.positions[i], samples.normals[i]) for i in keep]
        results = sweep(descriptor, index, items, threads=threads)
        for i, r in zip(keep, results):
            entries.append(MapEntry(samples.positions[i], r.accepted,
                                    r.kappa, r.best_phi))
    return AffordanceMap(descriptor.label, tuple(entries), spacing)


def plan_milestones(walk_map: AffordanceMap, goal_maps: List[AffordanceMap],
                    start) -> List[Tuple[np.ndarray, str]]:
    """Chain shortest paths over walkable entries to each goal map in order.

    Walkable accepted entries form a graph with edges between entries within
    1.5x the map spacing; each leg runs uniform-cost search from the current
    node to the walkable node nearest an accepted goal entry. Returns
    waypoints labelled with their map of origin.
    """
    nodes = walk_map.accepted_points
    if len(nodes) == 0:
        raise Unreachable("walk map has no accepted entries")
    start = np.asarray(start, dtype=np.float64)
    reach = 1.5 * walk_map.grid_spacing

    diff = nodes[:, None, :] - nodes[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    adjacency = [np.flatnonzero((dist[i] > 0) & (dist[i] <= reach))
                 for i in range(len(nodes))]

    def dijkstra(src: int):
        costs = np.full(len(nodes), np.inf)
        prev = np.full(len(nodes), -1, dtype=np.int64)
        costs[src] = 0.0
        heap = [(0.0, src)]
        while heap:
            c, i = heapq.heappop(heap)
            if c > costs[i]:
                continue
            for j in adjacency[i]:
                nc = c + dist[i, j]
                if nc < costs[j]:
                    costs[j] = nc
                    prev[j] = i
                    heapq.heappush(heap, (nc, j))
        return costs, prev

    def path_to(prev, j):
        out = []
        while j >= 0:
            out.append(j)
            j = prev[j]
        return out[::-1]

    current = int(np.linalg.norm(nodes - start, axis=1).argmin())
    waypoints: List[Tuple[np.ndarray, str]] = [(nodes[current], walk_map.descriptor_label)]
    for goal in goal_maps:
        targets = goal.accepted_points
        if len(targets) == 0:
            raise Unreachable(f"goal map {goal.descriptor_label!r} has no "
                              "accepted entries")
        costs, prev = dijkstra(current)
        # walkable node nearest any goal entry, among reachable nodes
        d_goal = np.linalg.norm(nodes[:, None, :] - targets[None, :, :],
                                axis=2).min(axis=1)
        d_goal[np.isinf(costs)] = np.inf
        best = int(d_goal.argmin())
        if np.isinf(costs[best]) or d_goal[best] > reach:
            raise Unreachable(f"no path to goal map {goal.descriptor_label!r}")
        for j in path_to(prev, best)[1:]:
            waypoints.append((nodes[j], walk_map.descriptor_label))
        g = int(np.linalg.norm(targets - nodes[best], axis=1).argmin())
        waypoints.append((targets[g], goal.descriptor_label))
        current = best
    return waypoints
