"""Capacity-constrained matching of fused trees to geocoded addresses.

The matching maximizes ``sum(M - dist)`` over chosen (address, tree) pairs,
with every tree used at most once and address ``a`` used at most ``K[a]``
times. It is solved as a min-cost flow on the sparse candidate graph, which
is integral, so the optimum equals that of the linear relaxation.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

from .fuse import FusedTree
from .geo import GeoPoint, GridIndex
from .geocode import GeocodedAddress
from .inventory import AddressGroup

DEFAULT_MAX_DIST_M = 50.0


@dataclass(frozen=True, order=True)
class CandidatePair:
    address_index: int
    tree_index: int
    dist_m: float


@dataclass
class AssignmentResult:
    matches: List[CandidatePair]
    objective_value: float
    unmatched_trees: int
    unfilled_capacity: int


def build_candidates(addresses: Sequence[GeocodedAddress], trees: Sequence[FusedTree],
                     M: float = DEFAULT_MAX_DIST_M) -> List[CandidatePair]:
    """All (address, tree) pairs no more than ``M`` metres apart, sorted by index.

    Trees are bucketed in a grid of ``M``-metre cells so each address only
    measures against its 3x3 cell neighbourhood.
    """
    if M <= 0:
        raise ValueError("M must be positive")
    for a in addresses:
        if a.point is None:
            raise ValueError(f"address {a.address!r} has no geocode")
    if not addresses or not trees:
        return []
    grid = GridIndex.from_points(M, ((t.point, j) for j, t in enumerate(trees)),
                                 extra_lats=(a.point.lat for a in addresses))
    out = []
    for i, a in enumerate(addresses):
        out.extend(CandidatePair(i, j, d) for _, j, d in grid.within(a.point, M))
    out.sort()
    return out


def _exact_gains(values: Sequence[float]) -> List[int]:
    """Scale non-negative floats to integers with a shared power-of-two denominator, losslessly."""
    ratios = [v.as_integer_ratio() for v in values]
    denom = max((d for _, d in ratios), default=1)
    return [n * (denom // d) for n, d in ratios]


class _FlowGraph:
    def __init__(self, n_nodes: int) -> None:
        self.adj: List[List[int]] = [[] for _ in range(n_nodes)]
        self.to: List[int] = []
        self.cap: List[int] = []
        self.cost: List[int] = []

    def add(self, u: int, v: int, cap: int, cost: int) -> int:
        k = len(self.to)
        self.to += [v, u]
        self.cap += [cap, 0]
        self.cost += [cost, -cost]
        self.adj[u].append(k)
        self.adj[v].append(k + 1)
        return k

    def tail(self, k: int) -> int:
        return self.to[k ^ 1]


def solve_assignment(candidates: Sequence[CandidatePair], capacities: Sequence[int],
                     M: float = DEFAULT_MAX_DIST_M, n_trees: Optional[int] = None) -> AssignmentResult:
    """Exact maximizer of ``sum(M - dist)`` under the per-tree and per-address limits.

    Among optimal solutions the one with the most matches is returned (pairs
    at exactly ``M`` gain nothing but are still matched), and among those the
    lexicographically smallest sorted list of (address_index, tree_index).

    Args:
        candidates: pairs with ``0 <= dist_m <= M``; at most one per (address, tree).
        capacities: ``K`` for each address index; every entry must be positive.
        M: distance cap, the same one used to build the candidates.
        n_trees: total tree count for the unmatched tally. Defaults to the
            number of distinct trees among the candidates.
    """
    for a, k in enumerate(capacities):
        if k <= 0:
            raise ValueError(f"address {a}: capacity must be positive, got {k}")
    seen = set()
    for c in candidates:
        if not 0 <= c.address_index < len(capacities):
            raise ValueError(f"candidate address index {c.address_index} has no capacity")
        if not 0.0 <= c.dist_m <= M:
            raise ValueError(f"candidate distance {c.dist_m} outside [0, {M}]")
        key = (c.address_index, c.tree_index)
        if key in seen:
            raise ValueError(f"duplicate candidate {key}")
        seen.add(key)

    cands = sorted(candidates)
    tree_ids = sorted({c.tree_index for c in cands})
    addr_ids = sorted({c.address_index for c in cands})
    if n_trees is None:
        n_trees = len(tree_ids)
    total_capacity = sum(capacities)
    if not cands:
        return AssignmentResult([], 0.0, n_trees, total_capacity)

    T, A = len(tree_ids), len(addr_ids)
    tnode = {t: i for i, t in enumerate(tree_ids)}
    anode = {a: T + i for i, a in enumerate(addr_ids)}
    sink = T + A
    g = _FlowGraph(T + A + 1)

    # cost = -(gain * W + 1): the +1 prefers more matches among equal-gain
    # solutions and can never outweigh a unit of gain since W > #matches
    gains = _exact_gains([M - c.dist_m for c in cands])
    W = len(cands) + 1
    pair_arc = [g.add(tnode[c.tree_index], anode[c.address_index], 1, -(gn * W + 1))
                for c, gn in zip(cands, gains)]
    for t in range(T):
        g.add(t, sink, 1, 0)
    for a in addr_ids:
        g.add(anode[a], sink, capacities[a], 0)

    # feasible initial potentials: every arc has non-negative reduced cost
    pot = [0] * (T + A + 1)
    for k in pair_arc:
        v = g.to[k]
        pot[v] = min(pot[v], g.cost[k])
    pot[sink] = min(pot[T:sink], default=0)
    pot[sink] = min(pot[sink], 0)

    for source in range(T):
        _augment_shortest(g, pot, source, sink)

    _lex_smallest(g, pot, pair_arc, sink)

    matches = [c for c, k in zip(cands, pair_arc) if g.cap[k] == 0]
    objective = math.fsum(M - c.dist_m for c in matches)
    return AssignmentResult(matches, objective, n_trees - len(matches), total_capacity - len(matches))


def _augment_shortest(g: _FlowGraph, pot: List[int], source: int, sink: int) -> None:
    """Send one unit from ``source`` to ``sink`` along a shortest path and update potentials."""
    dist: Dict[int, int] = {source: 0}
    prev: Dict[int, int] = {}
    done = set()
    heap = [(0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == sink:
            break
        pu = pot[u]
        for k in g.adj[u]:
            if g.cap[k] <= 0:
                continue
            v = g.to[k]
            if v in done:
                continue
            nd = d + g.cost[k] + pu - pot[v]
            if nd < dist.get(v, nd + 1):
                dist[v] = nd
                prev[v] = k
                heapq.heappush(heap, (nd, v))
    if sink not in done:
        raise RuntimeError("no augmenting path; the dummy arc should always exist")

    # raising settled nodes by dist - dsink is the usual update shifted by a
    # constant, so unsettled nodes (all at least dsink away) stay untouched
    dsink = dist[sink]
    for v in done:
        pot[v] += dist[v] - dsink

    v = sink
    while v != source:
        k = prev[v]
        g.cap[k] -= 1
        g.cap[k ^ 1] += 1
        v = g.tail(k)


def _lex_smallest(g: _FlowGraph, pot: List[int], pair_arc: Sequence[int], sink: int) -> None:
    """Move to the lexicographically smallest optimal matching.

    Every optimal flow differs from the current one by zero reduced-cost
    cycles. Walking candidate arcs in (address, tree) order, an unused arc is
    switched on when a zero-cost cycle through it avoids all arcs already
    decided; decided arcs are then frozen.
    """
    frozen = set()

    def reduced(k: int) -> int:
        return g.cost[k] + pot[g.tail(k)] - pot[g.to[k]]

    for k in pair_arc:
        if g.cap[k] == 0 or reduced(k) != 0:
            frozen.add(k)
            frozen.add(k ^ 1)
            continue
        t, a = g.tail(k), g.to[k]
        # BFS a -> t over tight residual arcs
        prev = {a: -1}
        queue = deque([a])
        while queue and t not in prev:
            u = queue.popleft()
            for j in g.adj[u]:
                if g.cap[j] <= 0 or j in frozen:
                    continue
                v = g.to[j]
                if v in prev or reduced(j) != 0:
                    continue
                prev[v] = j
                queue.append(v)
        if t in prev:
            v = t
            while v != a:
                j = prev[v]
                g.cap[j] -= 1
                g.cap[j ^ 1] += 1
                v = g.tail(j)
            g.cap[k] -= 1
            g.cap[k ^ 1] += 1
        frozen.add(k)
        frozen.add(k ^ 1)


@dataclass(frozen=True)
class TreeMatch:
    """An inventory tree that received a detected position."""

    tree_id: str
    address: str
    point: GeoPoint
    dist_m: float
    fused_index: int


def expand_to_trees(result: AssignmentResult, addresses: Sequence[GeocodedAddress],
                    groups: Sequence[AddressGroup], trees: Sequence[FusedTree]) -> List[TreeMatch]:
    """Hand each address's matched detections to its inventory trees.

    Detections are taken nearest first (then by tree index) and given to the
    address's tree ids in inventory order; surplus ids stay unfilled.
    """
    by_address = {g.address: g for g in groups}
    per_address: Dict[int, List[CandidatePair]] = {}
    for m in result.matches:
        per_address.setdefault(m.address_index, []).append(m)
    out = []
    for ai in sorted(per_address):
        addr = addresses[ai].address
        group = by_address[addr]
        ms = sorted(per_address[ai], key=lambda m: (m.dist_m, m.tree_index))
        if len(ms) > group.capacity_K:
            raise ValueError(f"{addr!r}: {len(ms)} matches exceed capacity {group.capacity_K}")
        for tree_id, m in zip(group.tree_ids, ms):
            out.append(TreeMatch(tree_id, addr, trees[m.tree_index].point, m.dist_m, m.tree_index))
    return out
