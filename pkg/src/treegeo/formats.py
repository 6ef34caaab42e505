"""Line-oriented, tab-separated intermediate files and GeoJSON output.

Every table has a header row. Floats are written with ``repr`` so values
survive a write/read cycle bit for bit (geocode tables excepted, which use
9 decimals).
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple, Union

from .assign import TreeMatch
from .fuse import FusedTree
from .geo import GeoPoint
from .geocode import Accuracy, GeocodedAddress, write_atomic
from .inventory import InventoryTree
from .project import DEFAULT_CAMERA_HEIGHT_M, Detection, PanoramaMeta, ProjectedDetection

PathLike = Union[str, Path]


class FormatError(ValueError):
    pass


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_table(path: PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    buf.write("\t".join(header) + "\n")
    for row in rows:
        buf.write("\t".join(_fmt(v) for v in row) + "\n")
    write_atomic(path, buf.getvalue())


def read_table(path: PathLike, required: Sequence[str]) -> List[Dict[str, str]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input file not found: {path}")
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise FormatError(f"{path}: missing column(s) {', '.join(missing)}")
        return list(reader)


def _float(row: Dict[str, str], key: str, path: PathLike, lineno: int) -> float:
    try:
        return float(row[key])
    except (TypeError, ValueError):
        raise FormatError(f"{path}:{lineno}: bad number in column {key!r}: {row.get(key)!r}") from None


# inventory -----------------------------------------------------------------

INVENTORY_HEADER = ("tree_id", "address", "species", "gt_lat", "gt_lon")


def write_inventory(path: PathLike, trees: Sequence[InventoryTree]) -> None:
    write_table(path, INVENTORY_HEADER, (
        (t.tree_id, t.address, t.species or "",
         t.ground_truth.lat if t.ground_truth else None,
         t.ground_truth.lon if t.ground_truth else None) for t in trees))


def read_inventory(path: PathLike) -> List[InventoryTree]:
    out = []
    for n, row in enumerate(read_table(path, INVENTORY_HEADER), start=2):
        gt = None
        if row["gt_lat"] and row["gt_lon"]:
            gt = GeoPoint(_float(row, "gt_lat", path, n), _float(row, "gt_lon", path, n))
        out.append(InventoryTree(row["tree_id"], row["address"], row["species"] or None, gt))
    return out


# geocoded addresses ----------------------------------------------------------

GEOCODED_HEADER = ("address", "lat", "lon", "accuracy", "capacity_K", "outlier")


def write_geocoded(path: PathLike, records: Sequence[GeocodedAddress], outliers: Iterable[str]) -> None:
    flagged = set(outliers)
    write_table(path, GEOCODED_HEADER, (
        (r.address, f"{r.point.lat:.9f}" if r.point else "", f"{r.point.lon:.9f}" if r.point else "",
         r.accuracy.name, r.capacity_K, int(r.address in flagged)) for r in records))


def read_geocoded(path: PathLike) -> Tuple[List[GeocodedAddress], frozenset]:
    records, outliers = [], set()
    for n, row in enumerate(read_table(path, GEOCODED_HEADER), start=2):
        acc = Accuracy[row["accuracy"]]
        point = None
        if acc is not Accuracy.FAILED:
            point = GeoPoint(_float(row, "lat", path, n), _float(row, "lon", path, n))
        records.append(GeocodedAddress(row["address"], point, acc, int(row["capacity_K"])))
        if row["outlier"] == "1":
            outliers.add(row["address"])
    return records, frozenset(outliers)


# panoramas and detections ----------------------------------------------------

PANORAMA_HEADER = ("pano_id", "lat", "lon", "heading", "width_px", "height_px")
DETECTION_HEADER = ("pano_id", "x_min", "y_min", "x_max", "y_max", "score")


def write_panoramas(path: PathLike, panos: Sequence[PanoramaMeta]) -> None:
    write_table(path, PANORAMA_HEADER, ((p.pano_id, p.camera.lat, p.camera.lon, p.heading, p.width_px,
                                         p.height_px) for p in panos))


def read_panoramas(path: PathLike, camera_height_m: float = DEFAULT_CAMERA_HEIGHT_M) -> List[PanoramaMeta]:
    out = []
    for n, row in enumerate(read_table(path, PANORAMA_HEADER), start=2):
        try:
            out.append(PanoramaMeta(row["pano_id"],
                                    GeoPoint(_float(row, "lat", path, n), _float(row, "lon", path, n)),
                                    _float(row, "heading", path, n), int(row["width_px"]),
                                    int(row["height_px"]), camera_height_m))
        except ValueError as exc:
            raise FormatError(f"{path}:{n}: {exc}") from None
    return out


def write_detections(path: PathLike, dets: Sequence[Detection]) -> None:
    write_table(path, DETECTION_HEADER, ((d.pano_id, *d.bbox, d.score) for d in dets))


def read_detections(path: PathLike) -> List[Detection]:
    out = []
    for n, row in enumerate(read_table(path, DETECTION_HEADER), start=2):
        box = tuple(_float(row, k, path, n) for k in ("x_min", "y_min", "x_max", "y_max"))
        try:
            out.append(Detection(row["pano_id"], box, _float(row, "score", path, n)))
        except ValueError as exc:
            raise FormatError(f"{path}:{n}: {exc}") from None
    return out


PROJECTED_HEADER = ("pano_id", "lat", "lon", "score", "camera_distance_m")


def write_projected(path: PathLike, dets: Sequence[ProjectedDetection]) -> None:
    write_table(path, PROJECTED_HEADER, ((d.source_pano, d.point.lat, d.point.lon, d.score,
                                          d.camera_distance_m) for d in dets))


def read_projected(path: PathLike) -> List[ProjectedDetection]:
    return [ProjectedDetection(GeoPoint(_float(r, "lat", path, n), _float(r, "lon", path, n)),
                               _float(r, "score", path, n), r["pano_id"],
                               _float(r, "camera_distance_m", path, n))
            for n, r in enumerate(read_table(path, PROJECTED_HEADER), start=2)]


# fused trees and matches -----------------------------------------------------

FUSED_HEADER = ("fused_index", "lat", "lon", "fused_score", "member_count", "member_panos")


def write_fused(path: PathLike, trees: Sequence[FusedTree]) -> None:
    write_table(path, FUSED_HEADER, ((i, t.point.lat, t.point.lon, t.fused_score, t.member_count,
                                      ",".join(sorted(t.member_panos))) for i, t in enumerate(trees)))


def read_fused(path: PathLike) -> List[FusedTree]:
    return [FusedTree(GeoPoint(_float(r, "lat", path, n), _float(r, "lon", path, n)),
                      _float(r, "fused_score", path, n), int(r["member_count"]),
                      frozenset(p for p in r["member_panos"].split(",") if p))
            for n, r in enumerate(read_table(path, FUSED_HEADER), start=2)]


MATCH_HEADER = ("tree_id", "address", "lat", "lon", "dist_m", "fused_index")


def write_matches(path: PathLike, matches: Sequence[TreeMatch]) -> None:
    write_table(path, MATCH_HEADER, ((m.tree_id, m.address, m.point.lat, m.point.lon, m.dist_m,
                                      m.fused_index) for m in matches))


def read_matches(path: PathLike) -> List[TreeMatch]:
    return [TreeMatch(r["tree_id"], r["address"],
                      GeoPoint(_float(r, "lat", path, n), _float(r, "lon", path, n)),
                      _float(r, "dist_m", path, n), int(r["fused_index"]))
            for n, r in enumerate(read_table(path, MATCH_HEADER), start=2)]


GROUND_TRUTH_HEADER = ("tree_id", "lat", "lon")


def write_ground_truth(path: PathLike, truth: Dict[str, GeoPoint]) -> None:
    write_table(path, GROUND_TRUTH_HEADER, ((k, p.lat, p.lon) for k, p in truth.items()))


def read_ground_truth(path: PathLike) -> Dict[str, GeoPoint]:
    return {r["tree_id"]: GeoPoint(_float(r, "lat", path, n), _float(r, "lon", path, n))
            for n, r in enumerate(read_table(path, GROUND_TRUTH_HEADER), start=2)}


# GeoJSON ---------------------------------------------------------------------

def write_geojson(path: PathLike, features: Iterable[Tuple[GeoPoint, Dict]]) -> None:
    """Point FeatureCollection, one feature per line."""
    lines = []
    for point, props in features:
        feature = {"type": "Feature",
                   "geometry": {"type": "Point", "coordinates": [point.lon, point.lat]},
                   "properties": props}
        lines.append(json.dumps(feature, sort_keys=True))
    text = '{"type": "FeatureCollection", "features": [\n' + ",\n".join(lines) + "\n]}\n"
    write_atomic(path, text)
