"""Synthetic municipalities with known ground truth.

Streets run east-west on a regular grid, ``street_spacing_m`` apart, cut into
blocks by cross-street gaps. Parcels line both sides of each street; the
south side is staggered by half a parcel. Each parcel's rooftop geocode sits
``setback_m`` from the centreline and its trees stand 2-6 m from the
centreline on the parcel side. Panoramas are taken along every centreline.
"""

from __future__ import annotations

import bisect
import math
import random
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

from .geo import GeoPoint, local_distance_m, offset
from .geocode import Accuracy, GeocodeResponse
from .inventory import InventoryTree, normalize_address
from .project import (DEFAULT_CAMERA_HEIGHT_M, DEFAULT_MAX_DISTANCE_M, Detection,
                      PanoramaMeta, ProjectionError, synthesize_detection)

STREET_NAMES = ["OAK", "ELM", "PINE", "MAPLE", "CEDAR", "WALNUT", "BIRCH", "ASH", "WILLOW", "POPLAR",
                "SPRUCE", "LAUREL", "MAGNOLIA", "CYPRESS", "REDWOOD", "SYCAMORE", "ALDER", "HAZEL"]
STREET_TYPES = [("ST", "St"), ("AVE", "Ave"), ("DR", "Dr"), ("RD", "Rd"), ("LN", "Ln"),
                ("CT", "Ct"), ("PL", "Pl"), ("BLVD", "Blvd"), ("WAY", "Way")]
SPECIES = ["Platanus acerifolia", "Quercus agrifolia", "Lagerstroemia indica", "Pistacia chinensis",
           "Pyrus calleryana", "Liquidambar styraciflua"]

# injected failure modes, named after the evaluation category they produce
INJECT_FAILED = "geocoding_not_possible"
INJECT_OUTLIER = "geocoding_outlier"
INJECT_FAR = "geocoding_wrong"
INJECT_MISSED = "no_tree_detected"


@dataclass
class SynthConfig:
    seed: int = 0
    n_streets: int = 4
    blocks_per_street: int = 4
    parcels_per_block: int = 5
    address_spacing_m: float = 20.0
    camera_spacing_m: float = 15.0
    street_spacing_m: float = 80.0
    cross_street_gap_m: float = 20.0
    setback_m: float = 15.0
    tree_offset_range_m: Tuple[float, float] = (2.0, 6.0)
    min_tree_separation_m: float = 5.0
    tree_spread_m: float = 6.0
    # probabilities of 0, 1, 2, 3 trees per parcel; ~83% of trees share an address
    trees_per_address: Tuple[float, float, float, float] = (0.10, 0.30, 0.35, 0.25)
    detection_noise_sigma_m: float = 0.5
    miss_rate: float = 0.1
    false_positive_rate: float = 0.1
    non_rooftop_fraction: float = 0.32
    geocode_offset_m: float = 15.0
    camera_height_m: float = DEFAULT_CAMERA_HEIGHT_M
    pano_height_px: int = 1024
    view_range_m: float = DEFAULT_MAX_DISTANCE_M
    origin: Tuple[float, float] = (37.44, -122.16)
    n_failed_geocodes: int = 0
    n_outlier_geocodes: int = 0
    n_far_geocodes: int = 0
    far_geocode_offset_m: float = 60.0
    n_missed_addresses: int = 0

    def validate(self) -> None:
        if self.n_streets < 1 or self.blocks_per_street < 1 or self.parcels_per_block < 1:
            raise ValueError("scene needs at least one street, block and parcel")
        for name in ("address_spacing_m", "camera_spacing_m", "street_spacing_m", "camera_height_m"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("miss_rate", "false_positive_rate", "non_rooftop_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be a probability")
        probs = self.trees_per_address
        if len(probs) != 4 or any(p < 0 for p in probs) or sum(probs) <= 0:
            raise ValueError("trees_per_address needs four non-negative weights")
        if self.detection_noise_sigma_m < 0:
            raise ValueError("noise sigma must be non-negative")


@dataclass
class Parcel:
    address: str
    raw_street: str
    rooftop: GeoPoint
    street: int
    side: int  # +1 north, -1 south
    tree_ids: List[str] = field(default_factory=list)


@dataclass
class SynthScene:
    config: SynthConfig
    trees: List[InventoryTree]
    raw_addresses: Dict[str, str]
    parcels: List[Parcel]
    geocoder_table: Dict[str, GeocodeResponse]
    panoramas: List[PanoramaMeta]
    detections: List[Detection]
    injected: Dict[str, str]
    unambiguous: frozenset
    n_false_positives: int = 0

    @property
    def ground_truth(self) -> Dict[str, GeoPoint]:
        return {t.tree_id: t.ground_truth for t in self.trees}


class _Local:
    """East/north metres relative to a fixed origin."""

    def __init__(self, origin: GeoPoint) -> None:
        self.origin = origin

    def point(self, x: float, y: float) -> GeoPoint:
        return offset(self.origin, math.degrees(math.atan2(x, y)) % 360.0, math.hypot(x, y))


def generate(config: SynthConfig) -> SynthScene:
    """Build a deterministic scene for ``config.seed``."""
    config.validate()
    rng = random.Random(config.seed)
    local = _Local(GeoPoint(*config.origin))
    sp = config.address_spacing_m
    block_len = config.parcels_per_block * sp
    street_len = config.blocks_per_street * (block_len + config.cross_street_gap_m)
    # trees stay on their own frontage, at least 4 m from parcel edges
    usable = max(0.0, min(config.tree_spread_m, sp / 2.0 - 4.0))
    lo, hi = config.tree_offset_range_m

    parcels: List[Parcel] = []
    tree_xy: Dict[str, Tuple[float, float]] = {}
    parcel_xy: List[Tuple[float, float]] = []
    trees: List[InventoryTree] = []
    raw_addresses: Dict[str, str] = {}
    placed: List[Tuple[float, float]] = []

    for s in range(config.n_streets):
        y0 = s * config.street_spacing_m
        name = STREET_NAMES[s % len(STREET_NAMES)] + ("" if s < len(STREET_NAMES) else str(s // len(STREET_NAMES)))
        abbr, raw_type = STREET_TYPES[s % len(STREET_TYPES)]
        for b in range(config.blocks_per_street):
            x_block = config.cross_street_gap_m / 2.0 + b * (block_len + config.cross_street_gap_m)
            for side in (1, -1):
                for p in range(config.parcels_per_block):
                    cx = x_block + (p + 0.5) * sp + (sp / 2.0 if side < 0 else 0.0)
                    number = 100 * (b + 1) + 2 * p + (0 if side > 0 else 1)
                    raw_street = f"{name.title()} {raw_type}"
                    address = normalize_address(f"{number} {name} {abbr}")
                    parcel = Parcel(address, f"{number} {raw_street}",
                                    local.point(cx, y0 + side * config.setback_m), s, side)
                    parcels.append(parcel)
                    parcel_xy.append((cx, y0 + side * config.setback_m))

                    k = rng.choices(range(4), weights=config.trees_per_address)[0]
                    for i in range(k):
                        xy = _place_tree(rng, placed, cx, y0, side, i, k, usable, lo, hi,
                                         config.min_tree_separation_m)
                        placed.append(xy)
                        tree_id = f"T{len(trees) + 1:06d}"
                        parcel.tree_ids.append(tree_id)
                        tree_xy[tree_id] = xy
                        trees.append(InventoryTree(tree_id, address, rng.choice(SPECIES), local.point(*xy)))
                        raw = parcel.raw_street
                        if rng.random() < 0.05:
                            raw += f" Apt {rng.randint(1, 9)}"
                        raw_addresses[tree_id] = raw

    # failure injection on disjoint sets of tree-bearing parcels
    injected: Dict[str, str] = {}
    with_trees = [i for i, p in enumerate(parcels) if p.tree_ids]
    wanted = [(INJECT_FAILED, config.n_failed_geocodes), (INJECT_OUTLIER, config.n_outlier_geocodes),
              (INJECT_FAR, config.n_far_geocodes), (INJECT_MISSED, config.n_missed_addresses)]
    total = sum(n for _, n in wanted)
    if total > len(with_trees):
        raise ValueError(f"cannot inject {total} failures into {len(with_trees)} parcels")
    chosen = rng.sample(with_trees, total)
    parcel_mode: Dict[int, str] = {}
    pos = 0
    for mode, n in wanted:
        for idx in chosen[pos:pos + n]:
            parcel_mode[idx] = mode
        pos += n

    geocoder_table: Dict[str, GeocodeResponse] = {}
    geocode_xy: Dict[str, Tuple[float, float]] = {}
    for idx, parcel in enumerate(parcels):
        mode = parcel_mode.get(idx)
        for t in parcel.tree_ids:
            if mode:
                injected[t] = mode
        if not parcel.tree_ids:
            continue
        cx, cy = parcel_xy[idx]
        if rng.random() < config.non_rooftop_fraction:
            # interpolated geocodes land toward (or across) the street centreline
            cy -= parcel.side * config.geocode_offset_m
            accuracy = Accuracy.APPROXIMATE if rng.random() < 0.15 else Accuracy.INTERPOLATED
        else:
            accuracy = Accuracy.ROOFTOP
        if mode == INJECT_FAILED:
            continue
        if mode == INJECT_FAR:
            cx += config.far_geocode_offset_m
        point = local.point(cx, cy)
        if mode == INJECT_OUTLIER:
            point = GeoPoint(point.lat + 0.5, point.lon + 0.5)
        else:
            geocode_xy[parcel.address] = (cx, cy)
        # geocode tables carry 9 decimals; round now so the scene matches its files
        geocoder_table[parcel.address] = (GeoPoint(round(point.lat, 9), round(point.lon, 9)), accuracy)

    # panoramas along each street centreline, looking east
    panoramas: List[PanoramaMeta] = []
    n_cams = int(math.floor(street_len / config.camera_spacing_m)) + 1
    for s in range(config.n_streets):
        y0 = s * config.street_spacing_m
        for c in range(n_cams):
            panoramas.append(PanoramaMeta(f"S{s:02d}C{c:04d}", local.point(c * config.camera_spacing_m, y0),
                                          90.0, 2 * config.pano_height_px, config.pano_height_px,
                                          config.camera_height_m))

    missed = {t for t, m in injected.items() if m == INJECT_MISSED}
    detections: List[Detection] = []
    n_fp = 0
    cam_xy = {p.pano_id: (c * config.camera_spacing_m, s * config.street_spacing_m)
              for s in range(config.n_streets) for c, p in
              enumerate(panoramas[s * n_cams:(s + 1) * n_cams])}
    by_x = sorted(trees, key=lambda t: tree_xy[t.tree_id][0])
    xs = [tree_xy[t.tree_id][0] for t in by_x]
    reach = config.view_range_m + 5.0
    for pano in panoramas:
        px, py = cam_xy[pano.pano_id]
        # cheap pre-filter in local metres before the exact range check
        for t in by_x[bisect.bisect_left(xs, px - reach):bisect.bisect_right(xs, px + reach)]:
            if abs(tree_xy[t.tree_id][1] - py) > reach:
                continue
            target = t.ground_truth
            if config.detection_noise_sigma_m > 0:
                dx = rng.gauss(0.0, config.detection_noise_sigma_m)
                dy = rng.gauss(0.0, config.detection_noise_sigma_m)
                target = offset(target, math.degrees(math.atan2(dx, dy)) % 360.0, math.hypot(dx, dy))
            dist = local_distance_m(pano.camera, target)
            if not 0.0 < dist <= config.view_range_m:
                continue
            if t.tree_id in missed or rng.random() < config.miss_rate:
                continue
            score = round(rng.uniform(0.5, 1.0), 4)
            try:
                detections.append(synthesize_detection(pano, target, score))
            except ProjectionError:
                continue
        if rng.random() < config.false_positive_rate:
            r = 0.5 + 19.5 * math.sqrt(rng.random())
            fp = offset(pano.camera, rng.uniform(0.0, 360.0), r)
            try:
                detections.append(synthesize_detection(pano, fp, round(rng.uniform(0.3, 0.9), 4)))
                n_fp += 1
            except ProjectionError:
                pass

    unambiguous = _unambiguous(trees, tree_xy, geocode_xy, config.view_range_m)
    return SynthScene(config, trees, raw_addresses, parcels, geocoder_table, panoramas,
                      detections, injected, unambiguous, n_fp)


def _place_tree(rng: random.Random, placed: Sequence[Tuple[float, float]], cx: float, y0: float,
                side: int, i: int, k: int, usable: float, lo: float, hi: float,
                min_sep: float) -> Tuple[float, float]:
    """Sample a tree position, retrying to keep ``min_sep`` from earlier trees."""
    best, best_gap = None, -1.0
    for _ in range(50):
        if k == 1:
            x = cx + rng.uniform(-usable, usable)
        else:
            slot = 2.0 * usable / (k - 1)
            x = cx - usable + i * slot + rng.uniform(-0.5, 0.5)
        y = y0 + side * rng.uniform(lo, hi)
        gap = min((math.hypot(x - px, y - py) for px, py in placed[-60:]), default=math.inf)
        if gap >= min_sep:
            return x, y
        if gap > best_gap:
            best, best_gap = (x, y), gap
    return best


def _unambiguous(trees: Sequence[InventoryTree], tree_xy: Dict[str, Tuple[float, float]],
                 geocode_xy: Dict[str, Tuple[float, float]], M: float, margin: float = 1.0) -> frozenset:
    """Trees whose own geocode is within ``M`` and nearer than any other by ``margin`` metres."""
    out = set()
    items = list(geocode_xy.items())
    for t in trees:
        own = geocode_xy.get(t.address)
        if own is None:
            continue
        tx, ty = tree_xy[t.tree_id]
        d_own = math.hypot(own[0] - tx, own[1] - ty)
        if d_own > M:
            continue
        d_other = min((math.hypot(x - tx, y - ty) for a, (x, y) in items if a != t.address), default=math.inf)
        if d_other - d_own >= margin:
            out.add(t.tree_id)
    return frozenset(out)
