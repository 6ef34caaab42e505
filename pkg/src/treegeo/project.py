"""Ground projection of panorama detections under a flat-terrain, level-camera model.

Pixel columns map linearly to bearing (the centre column looks along the
panorama heading) and rows map linearly to elevation, with the horizon on the
middle row. A box's bottom-centre pixel is intersected with the ground plane
``camera_height_m`` below the camera.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Tuple

from .geo import GeoPoint, bearing_deg, local_distance_m, offset

DEFAULT_CAMERA_HEIGHT_M = 3.0
DEFAULT_MAX_DISTANCE_M = 50.0
TRUNK_WIDTH_M = 2.0


class ProjectionError(ValueError):
    pass


class NoGroundIntersection(ProjectionError):
    """Box bottom is on or above the horizon, so its ray never meets the ground."""


class TooFar(ProjectionError):
    pass


@dataclass(frozen=True)
class PanoramaMeta:
    pano_id: str
    camera: GeoPoint
    heading: float
    width_px: int
    height_px: int
    camera_height_m: float = DEFAULT_CAMERA_HEIGHT_M

    def __post_init__(self) -> None:
        if self.height_px <= 0 or self.width_px != 2 * self.height_px:
            raise ValueError(f"panorama {self.pano_id}: width must be twice the height")
        if not 0.0 <= self.heading < 360.0:
            raise ValueError(f"panorama {self.pano_id}: heading {self.heading} outside [0, 360)")
        if self.camera_height_m <= 0:
            raise ValueError(f"panorama {self.pano_id}: camera height must be positive")


@dataclass(frozen=True)
class Detection:
    pano_id: str
    bbox: Tuple[float, float, float, float]
    score: float

    def __post_init__(self) -> None:
        x0, y0, x1, y1 = self.bbox
        if not (x0 < x1 and y0 < y1):
            raise ValueError(f"degenerate box {self.bbox}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")

    def check_bounds(self, pano: PanoramaMeta) -> None:
        x0, y0, x1, y1 = self.bbox
        if x0 < 0 or y0 < 0 or x1 > pano.width_px or y1 > pano.height_px:
            raise ValueError(f"box {self.bbox} outside {pano.width_px}x{pano.height_px} image")


@dataclass(frozen=True)
class ProjectedDetection:
    point: GeoPoint
    score: float
    source_pano: str
    camera_distance_m: float


def pixel_to_ray(pano: PanoramaMeta, u: float, v: float) -> Tuple[float, float]:
    """(bearing in [0, 360), depression angle in degrees) of image point (u, v)."""
    bearing = (pano.heading + (u / pano.width_px - 0.5) * 360.0) % 360.0
    depression = (v - pano.height_px / 2.0) / pano.height_px * 180.0
    return bearing, depression


def project_detection(pano: PanoramaMeta, det: Detection,
                      max_distance_m: float = DEFAULT_MAX_DISTANCE_M) -> ProjectedDetection:
    if det.pano_id != pano.pano_id:
        raise ValueError(f"detection for {det.pano_id} given panorama {pano.pano_id}")
    det.check_bounds(pano)
    x0, _, x1, y1 = det.bbox
    bearing, depression = pixel_to_ray(pano, (x0 + x1) / 2.0, y1)
    if depression <= 0:
        raise NoGroundIntersection(f"box bottom {y1} at or above horizon in {pano.pano_id}")
    d = pano.camera_height_m / math.tan(math.radians(depression))
    if d > max_distance_m:
        raise TooFar(f"{d:.1f} m from camera {pano.pano_id}")
    return ProjectedDetection(offset(pano.camera, bearing, d), det.score, pano.pano_id, d)


def synthesize_detection(pano: PanoramaMeta, tree: GeoPoint, score: float) -> Detection:
    """Detection whose bottom-centre pixel projects back onto ``tree``.

    The box spans the angular width of a 2 m trunk at the tree's range and is
    twice as tall as it is wide, clipped to the image.
    """
    d = local_distance_m(pano.camera, tree)
    if d <= 0:
        raise ProjectionError("tree coincides with the camera")
    bearing = bearing_deg(pano.camera, tree)
    u = (((bearing - pano.heading) / 360.0 + 0.5) % 1.0) * pano.width_px
    v = pano.height_px / 2.0 + math.degrees(math.atan2(pano.camera_height_m, d)) / 180.0 * pano.height_px
    half_w = math.degrees(math.atan2(TRUNK_WIDTH_M / 2.0, d)) / 360.0 * pano.width_px
    # keep the centre column fixed while staying inside the image
    half_w = min(half_w, u, pano.width_px - u)
    if half_w <= 0:
        raise ProjectionError("tree lies exactly on the panorama seam")
    y0 = max(0.0, v - 4.0 * half_w)
    if not y0 < v:
        raise ProjectionError("box has no height")
    return Detection(pano.pano_id, (u - half_w, y0, u + half_w, v), score)


@dataclass
class ProjectionRun:
    projected: List[ProjectedDetection]
    no_ground: int = 0
    too_far: int = 0
    unknown_pano: int = 0


def project_all(panos: Dict[str, PanoramaMeta], dets: Iterable[Detection],
                max_distance_m: float = DEFAULT_MAX_DISTANCE_M) -> ProjectionRun:
    """Project every detection, skipping and counting the ones that cannot be placed."""
    run = ProjectionRun(projected=[])
    for det in dets:
        pano = panos.get(det.pano_id)
        if pano is None:
            run.unknown_pano += 1
            continue
        try:
            run.projected.append(project_detection(pano, det, max_distance_m))
        except NoGroundIntersection:
            run.no_ground += 1
        except TooFar:
            run.too_far += 1
    return run
