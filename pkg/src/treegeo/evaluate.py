"""Error taxonomy for a pipeline run.

Every inventory tree lands in exactly one category, tested in this order:

1. geocoding_not_possible -- the address could not be geocoded
2. geocoding_outlier -- the geocode was rejected by the z-score filter
3. geocoding_wrong -- the geocode is more than ``M`` from the true tree
4. no_tree_detected -- no fused tree within ``M`` of the geocode
5. no_tree_assigned -- detections nearby, but none given to this tree
6. tree_assigned_incorrectly -- the detection given belongs to another address
7. tree_correct

Correctness is judged per address: a detection belongs to the address of the
nearest ground-truth tree within ``truth_radius_m``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence

from .assign import TreeMatch
from .fuse import FusedTree
from .geo import GeoPoint, GridIndex, local_distance_m
from .geocode import Accuracy, GeocodedAddress
from .inventory import InventoryTree

CATEGORIES = (
    "geocoding_not_possible",
    "geocoding_outlier",
    "geocoding_wrong",
    "no_tree_detected",
    "no_tree_assigned",
    "tree_assigned_incorrectly",
    "tree_correct",
)
BLIND_CATEGORIES = ("geocoding_not_possible", "geocoding_outlier", "no_tree_detected", "assigned")

LABELS = {
    "geocoding_not_possible": "Geocoding not possible",
    "geocoding_outlier": "Geocoding outlier",
    "geocoding_wrong": "Geocoding wrong",
    "no_tree_detected": "No tree detected",
    "no_tree_assigned": "No tree assigned",
    "tree_assigned_incorrectly": "Tree assigned incorrectly",
    "tree_correct": "Tree correct",
    "assigned": "Assigned",
}


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class EvaluationInputs:
    """Everything a report is computed from.

    ``scope`` restricts which inventory trees are scored; the full inventory
    is still used to decide which address a detection truly belongs to.
    """

    inventory: Sequence[InventoryTree]
    addresses: Sequence[GeocodedAddress]
    outliers: FrozenSet[str]
    fused: Sequence[FusedTree]
    matches: Sequence[TreeMatch]
    scope: Optional[FrozenSet[str]] = None

    def scored_trees(self) -> List[InventoryTree]:
        if self.scope is None:
            return list(self.inventory)
        return [t for t in self.inventory if t.tree_id in self.scope]


@dataclass(frozen=True)
class EvaluationReport:
    counts: Dict[str, int]
    total: int
    categories: Sequence[str] = CATEGORIES

    def percent(self, category: str) -> float:
        return 100.0 * self.counts[category] / self.total if self.total else 0.0

    def to_table(self, title: str = "") -> str:
        """Aligned text table, one row per category with count and percentage."""
        rows = [("Tree number", str(self.total), "")]
        rows += [(LABELS[c], str(self.counts[c]), f"({self.percent(c):.1f})") for c in self.categories]
        w0 = max(len(r[0]) for r in rows)
        w1 = max(len(r[1]) for r in rows)
        lines = [title] if title else []
        lines += [f"{a:<{w0}}  {b:>{w1}}  {c}".rstrip() for a, b, c in rows]
        return "\n".join(lines) + "\n"

    def to_kv(self) -> str:
        lines = [f"total = {self.total}"]
        for c in self.categories:
            lines.append(f"{c}.count = {self.counts[c]}")
            lines.append(f"{c}.percent = {self.percent(c):.4f}")
        return "\n".join(lines) + "\n"


class _Context:
    """Per-run lookups shared by the full and blind reports."""

    def __init__(self, inputs: EvaluationInputs, M: float) -> None:
        self.M = M
        self.by_address = {a.address: a for a in inputs.addresses}
        self.matched = {m.tree_id: m for m in inputs.matches}
        self.outliers = inputs.outliers
        lats = [a.point.lat for a in inputs.addresses if a.point is not None]
        self.fused_grid = GridIndex.from_points(M, ((f.point, i) for i, f in enumerate(inputs.fused)),
                                                extra_lats=lats)
        self._near: Dict[str, bool] = {}

    def geocode(self, tree: InventoryTree) -> GeocodedAddress:
        try:
            return self.by_address[tree.address]
        except KeyError:
            raise EvaluationError(f"tree {tree.tree_id}: address {tree.address!r} was never geocoded") from None

    def detection_near(self, addr: GeocodedAddress) -> bool:
        if addr.address not in self._near:
            self._near[addr.address] = any(True for _ in self.fused_grid.within(addr.point, self.M))
        return self._near[addr.address]

    def blind_category(self, tree: InventoryTree) -> Optional[str]:
        addr = self.geocode(tree)
        if addr.accuracy is Accuracy.FAILED:
            return "geocoding_not_possible"
        if addr.address in self.outliers:
            return "geocoding_outlier"
        if not self.detection_near(addr):
            return "no_tree_detected"
        if tree.tree_id in self.matched:
            return "assigned"
        return None


def tree_categories(inputs: EvaluationInputs, ground_truth: Mapping[str, GeoPoint], M: float = 50.0,
                    truth_radius_m: float = 4.0) -> Dict[str, str]:
    """Category of every scored tree, keyed by tree id."""
    for t in inputs.inventory:
        if ground_truth.get(t.tree_id) is None:
            raise EvaluationError(f"no ground truth for tree {t.tree_id}")
    ctx = _Context(inputs, M)
    truth_grid = GridIndex.from_points(truth_radius_m,
                                       ((ground_truth[t.tree_id], t) for t in inputs.inventory),
                                       extra_lats=(m.point.lat for m in inputs.matches))

    def true_address(p: GeoPoint) -> Optional[str]:
        near = [(d, t.tree_id, t.address) for _, t, d in truth_grid.within(p, truth_radius_m)]
        return min(near)[2] if near else None

    out: Dict[str, str] = {}
    for tree in inputs.scored_trees():
        addr = ctx.geocode(tree)
        if addr.accuracy is Accuracy.FAILED:
            cat = "geocoding_not_possible"
        elif addr.address in ctx.outliers:
            cat = "geocoding_outlier"
        elif local_distance_m(addr.point, ground_truth[tree.tree_id]) > M:
            cat = "geocoding_wrong"
        elif not ctx.detection_near(addr):
            cat = "no_tree_detected"
        elif tree.tree_id not in ctx.matched:
            cat = "no_tree_assigned"
        elif true_address(ctx.matched[tree.tree_id].point) == tree.address:
            cat = "tree_correct"
        else:
            cat = "tree_assigned_incorrectly"
        out[tree.tree_id] = cat
    return out


def categorize(inputs: EvaluationInputs, ground_truth: Mapping[str, GeoPoint], M: float = 50.0,
               truth_radius_m: float = 4.0) -> EvaluationReport:
    """Full seven-category report; needs a true position for every inventory tree."""
    return report_from_categories(tree_categories(inputs, ground_truth, M, truth_radius_m))


def report_from_categories(per_tree: Mapping[str, str]) -> EvaluationReport:
    counts = dict.fromkeys(CATEGORIES, 0)
    for cat in per_tree.values():
        counts[cat] += 1
    return EvaluationReport(counts, len(per_tree))


def blind_report(inputs: EvaluationInputs, M: float = 50.0) -> EvaluationReport:
    """Categories that can be determined without ground truth.

    ``no_tree_detected`` here also covers trees whose geocode is wrong and
    happens to have no detection nearby, which a full report files under
    ``geocoding_wrong``. Trees with detections nearby that were not assigned
    appear in no blind category.
    """
    ctx = _Context(inputs, M)
    counts = dict.fromkeys(BLIND_CATEGORIES, 0)
    trees = inputs.scored_trees()
    for tree in trees:
        cat = ctx.blind_category(tree)
        if cat is not None:
            counts[cat] += 1
    return EvaluationReport(counts, len(trees), BLIND_CATEGORIES)


def rooftop_filter(inputs: EvaluationInputs) -> EvaluationInputs:
    """Restrict scoring to trees whose address was geocoded at rooftop accuracy."""
    rooftop = {a.address for a in inputs.addresses if a.accuracy is Accuracy.ROOFTOP}
    keep = frozenset(t.tree_id for t in inputs.scored_trees() if t.address in rooftop)
    return dataclasses.replace(inputs, scope=keep)
