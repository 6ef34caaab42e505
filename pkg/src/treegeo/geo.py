"""Local geodesy on WGS84 coordinates.

Distances use the equirectangular approximation, which is accurate to well
under a millimetre at the tens-of-metres scale the pipeline works at and has
a closed-form inverse (:func:`offset`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Generic, Iterable, Iterator, List, Tuple, TypeVar

EARTH_RADIUS_M = 6371008.8

T = TypeVar("T")


@dataclass(frozen=True, order=True)
class GeoPoint:
    """A WGS84 latitude/longitude pair in degrees."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinate: ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon < 180.0:
            raise ValueError(f"longitude out of range: {self.lon}")


def wrap_lon(lon: float) -> float:
    """Wrap a longitude into [-180, 180)."""
    wrapped = (lon + 180.0) % 360.0 - 180.0
    # (-1e-17 + 180) % 360 can round up to 360.0
    return -180.0 if wrapped >= 180.0 else wrapped


def _dlon_deg(a: GeoPoint, b: GeoPoint) -> float:
    d = b.lon - a.lon
    if d >= 180.0:
        d -= 360.0
    elif d < -180.0:
        d += 360.0
    return d


def local_delta_m(a: GeoPoint, b: GeoPoint) -> Tuple[float, float]:
    """East and north displacement from ``a`` to ``b`` in metres."""
    lat_mid = math.radians((a.lat + b.lat) / 2.0)
    dx = EARTH_RADIUS_M * math.radians(_dlon_deg(a, b)) * math.cos(lat_mid)
    dy = EARTH_RADIUS_M * math.radians(b.lat - a.lat)
    return dx, dy


def local_distance_m(a: GeoPoint, b: GeoPoint) -> float:
    """Equirectangular distance in metres between two nearby points."""
    dx, dy = local_delta_m(a, b)
    return math.hypot(dx, dy)


def bearing_deg(a: GeoPoint, b: GeoPoint) -> float:
    """Bearing from ``a`` to ``b`` in degrees clockwise from north, in [0, 360).

    Consistent with :func:`offset`: ``offset(a, bearing_deg(a, b),
    local_distance_m(a, b))`` recovers ``b``.
    """
    dx, dy = local_delta_m(a, b)
    return math.degrees(math.atan2(dx, dy)) % 360.0


def offset(origin: GeoPoint, bearing: float, distance: float) -> GeoPoint:
    """Move ``distance`` metres from ``origin`` along ``bearing`` (degrees from north).

    Exact inverse of :func:`local_distance_m`: the new latitude is solved
    first so the longitude step can use the same mid-latitude cosine the
    distance formula uses.
    """
    if distance < 0:
        raise ValueError("distance must be non-negative")
    if distance == 0:
        return origin
    b = math.radians(bearing)
    dx = distance * math.sin(b)
    dy = distance * math.cos(b)
    lat = origin.lat + math.degrees(dy / EARTH_RADIUS_M)
    lat_mid = math.radians((origin.lat + lat) / 2.0)
    lon = origin.lon + math.degrees(dx / (EARTH_RADIUS_M * math.cos(lat_mid)))
    return GeoPoint(lat, wrap_lon(lon))


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance; kept as an independent reference for tests."""
    p1, p2 = math.radians(a.lat), math.radians(b.lat)
    dp = p2 - p1
    dl = math.radians(b.lon - a.lon)
    h = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


class GridIndex(Generic[T]):
    """Uniform lat/lon bucket grid for fixed-radius neighbour queries.

    Cells are ``cell_m`` metres on a side. The longitude size is computed at
    the highest absolute latitude the index will hold, so a 3x3 block of
    cells always covers a ``cell_m`` radius for every stored point.
    """

    def __init__(self, cell_m: float, max_abs_lat: float) -> None:
        if cell_m <= 0:
            raise ValueError("cell size must be positive")
        # slack absorbs rounding in the degree conversion
        self.cell_lat = math.degrees(cell_m / EARTH_RADIUS_M) * (1 + 1e-9)
        cos_min = math.cos(math.radians(min(abs(max_abs_lat), 89.0)))
        self.cell_lon = self.cell_lat / cos_min
        self._cells: Dict[Tuple[int, int], List[Tuple[GeoPoint, T]]] = {}

    @classmethod
    def from_points(cls, cell_m: float, items: Iterable[Tuple[GeoPoint, T]],
                    extra_lats: Iterable[float] = ()) -> "GridIndex[T]":
        items = list(items)
        lats = [abs(p.lat) for p, _ in items] + [abs(x) for x in extra_lats]
        index: GridIndex[T] = cls(cell_m, max(lats, default=0.0))
        for p, v in items:
            index.add(p, v)
        return index

    def key(self, p: GeoPoint) -> Tuple[int, int]:
        return math.floor(p.lat / self.cell_lat), math.floor(p.lon / self.cell_lon)

    def add(self, p: GeoPoint, value: T) -> None:
        self._cells.setdefault(self.key(p), []).append((p, value))

    def nearby(self, p: GeoPoint) -> Iterator[Tuple[GeoPoint, T]]:
        """Items in the 3x3 cell block around ``p`` (a superset of the radius)."""
        i, j = self.key(p)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                yield from self._cells.get((i + di, j + dj), ())

    def within(self, p: GeoPoint, radius_m: float) -> Iterator[Tuple[GeoPoint, T, float]]:
        """Items at local distance <= ``radius_m`` from ``p``; radius must not exceed the cell size."""
        for q, v in self.nearby(p):
            d = local_distance_m(p, q)
            if d <= radius_m:
                yield q, v, d
