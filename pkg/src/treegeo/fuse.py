"""Fusion of multi-view projected detections into single tree positions."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import FrozenSet, List, Sequence

from .geo import GeoPoint, GridIndex, wrap_lon
from .project import ProjectedDetection

DEFAULT_RADIUS_M = 4.0
DEFAULT_IDW_EPSILON_M = 1.0


@dataclass(frozen=True)
class FusedTree:
    point: GeoPoint
    fused_score: float
    member_count: int
    member_panos: FrozenSet[str]


def _dlon(a: float, b: float) -> float:
    d = b - a
    if d >= 180.0:
        d -= 360.0
    elif d < -180.0:
        d += 360.0
    return d


def fuse_detections(dets: Sequence[ProjectedDetection], radius_m: float = DEFAULT_RADIUS_M,
                    idw_epsilon_m: float = DEFAULT_IDW_EPSILON_M) -> List[FusedTree]:
    """Greedy inverse-distance-weighted suppression.

    Each remaining detection ``i`` scores ``S_i = sum(score_j / (eps + d_ij))``
    over remaining detections within ``radius_m`` (itself included). The
    best-scoring one absorbs every remaining detection within ``radius_m``;
    the cluster position is the mean of member positions weighted by
    ``score_j / (eps + d(best, j))``. Repeats until nothing is left.

    Sums use :func:`math.fsum`, and ties fall back on content (pano id, score,
    position), so the output does not depend on input order. Results are
    sorted by descending fused score.
    """
    if radius_m <= 0:
        raise ValueError("radius must be positive")
    if idw_epsilon_m <= 0:
        raise ValueError("IDW epsilon must be positive")
    n = len(dets)
    if n == 0:
        return []

    grid = GridIndex.from_points(radius_m, ((d.point, i) for i, d in enumerate(dets)))
    neighbors = [[(j, dist) for _, j, dist in grid.within(d.point, radius_m)] for d in dets]
    remaining = [True] * n

    def score_of(i: int) -> float:
        return math.fsum(dets[j].score / (idw_epsilon_m + dist)
                         for j, dist in neighbors[i] if remaining[j])

    def entry(i: int, s: float):
        d = dets[i]
        return (-s, d.source_pano, d.score, d.point.lat, d.point.lon, i)

    scores = [score_of(i) for i in range(n)]
    heap = [entry(i, scores[i]) for i in range(n)]
    heapq.heapify(heap)

    fused: List[FusedTree] = []
    while heap:
        neg_s, *_, best = heapq.heappop(heap)
        if not remaining[best] or -neg_s != scores[best]:
            continue
        members = [(j, dist) for j, dist in neighbors[best] if remaining[j]]
        for j, _ in members:
            remaining[j] = False

        ref = dets[best].point
        weights = [dets[j].score / (idw_epsilon_m + dist) for j, dist in members]
        total = math.fsum(weights)
        if total > 0:
            dlat = math.fsum(w * (dets[j].point.lat - ref.lat) for w, (j, _) in zip(weights, members)) / total
            dlon = math.fsum(w * _dlon(ref.lon, dets[j].point.lon) for w, (j, _) in zip(weights, members)) / total
            point = GeoPoint(ref.lat + dlat, wrap_lon(ref.lon + dlon))
        else:
            point = ref
        fused.append(FusedTree(point, scores[best], len(members),
                               frozenset(dets[j].source_pano for j, _ in members)))

        touched = {k for j, _ in members for k, _ in neighbors[j] if remaining[k]}
        for k in touched:
            scores[k] = score_of(k)
            heapq.heappush(heap, entry(k, scores[k]))

    fused.sort(key=lambda t: (-t.fused_score, t.point.lat, t.point.lon))
    return fused


def filter_far_from_street(trees: Sequence[FusedTree], cameras: Sequence[GeoPoint],
                           max_offset_m: float = 50.0) -> List[FusedTree]:
    """Keep trees within ``max_offset_m`` of at least one camera position."""
    if not trees:
        return []
    if not cameras:
        raise ValueError("camera positions required to filter trees")
    grid = GridIndex.from_points(max_offset_m, ((c, None) for c in cameras),
                                 extra_lats=(t.point.lat for t in trees))
    return [t for t in trees if any(True for _ in grid.within(t.point, max_offset_m))]
