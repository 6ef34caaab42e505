"""Address geocoding through a pluggable client, with a file cache and z-score outlier rejection."""

from __future__ import annotations

import enum
import logging
import math
import os
import tempfile
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Protocol, Sequence, Tuple, Union

from .geo import GeoPoint
from .inventory import AddressGroup

log = logging.getLogger(__name__)


class Accuracy(enum.Enum):
    ROOFTOP = "ROOFTOP"
    INTERPOLATED = "INTERPOLATED"
    APPROXIMATE = "APPROXIMATE"
    FAILED = "FAILED"


@dataclass(frozen=True)
class GeocodedAddress:
    address: str
    point: Optional[GeoPoint]
    accuracy: Accuracy
    capacity_K: int = 1

    def __post_init__(self) -> None:
        if (self.accuracy is Accuracy.FAILED) != (self.point is None):
            raise ValueError(f"{self.address!r}: FAILED iff point is absent")
        if self.capacity_K < 1:
            raise ValueError(f"{self.address!r}: capacity must be positive")


# (point, accuracy) on success; None for a semantic failure
GeocodeResponse = Optional[Tuple[GeoPoint, Accuracy]]


class GeocoderTransportError(Exception):
    """The geocoder could not be reached; the request may succeed on retry."""


class Geocoder(Protocol):
    def geocode(self, address: str) -> GeocodeResponse: ...


def _format_line(address: str, resp: GeocodeResponse) -> str:
    if resp is None:
        return f"{address}\t\t\t{Accuracy.FAILED.name}\n"
    p, acc = resp
    return f"{address}\t{p.lat:.9f}\t{p.lon:.9f}\t{acc.name}\n"


def read_geocode_table(path: Union[str, Path]) -> Dict[str, GeocodeResponse]:
    """Parse the cache/fixture format: address, lat, lon, accuracy (tab-separated)."""
    table: Dict[str, GeocodeResponse] = {}
    path = Path(path)
    if not path.exists():
        return table
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 tab-separated fields")
            address, lat, lon, acc = parts
            accuracy = Accuracy[acc]
            if accuracy is Accuracy.FAILED:
                table[address] = None
            else:
                table[address] = (GeoPoint(float(lat), float(lon)), accuracy)
    return table


def write_atomic(path: Union[str, Path], text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


class GeocodeCache:
    """Persistent address -> response store backed by one text file."""

    def __init__(self, path: Optional[Union[str, Path]] = None) -> None:
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._data: Dict[str, GeocodeResponse] = read_geocode_table(self.path) if self.path else {}

    def __contains__(self, address: str) -> bool:
        with self._lock:
            return address in self._data

    def __len__(self) -> int:
        return len(self._data)

    def get(self, address: str) -> GeocodeResponse:
        with self._lock:
            return self._data[address]

    def put(self, address: str, resp: GeocodeResponse) -> None:
        with self._lock:
            self._data[address] = resp

    def save(self) -> None:
        if self.path is None:
            return
        with self._lock:
            text = "".join(_format_line(a, self._data[a]) for a in sorted(self._data))
        write_atomic(self.path, text)


class FileGeocoder:
    """Offline geocoder answering from a table in the cache format.

    Addresses absent from the table (or listed as FAILED) are semantic failures.
    """

    def __init__(self, path: Union[str, Path]) -> None:
        if not Path(path).exists():
            raise FileNotFoundError(path)
        self.table = read_geocode_table(path)
        self.calls = 0

    def geocode(self, address: str) -> GeocodeResponse:
        self.calls += 1
        return self.table.get(address)


@dataclass
class GeocodeRun:
    records: List[GeocodedAddress]
    client_calls: int = 0
    cache_hits: int = 0
    semantic_failures: int = 0
    transport_failures: int = 0


def geocode_all(groups: Sequence[AddressGroup], client: Geocoder, cache: Optional[GeocodeCache] = None,
                retries: int = 2, max_workers: int = 1) -> GeocodeRun:
    """Resolve every address group to a :class:`GeocodedAddress`, in input order.

    Cache hits skip the client. A client that keeps raising
    :class:`GeocoderTransportError` after ``retries`` extra attempts yields a
    FAILED record that is counted separately and not cached.
    """
    cache = cache if cache is not None else GeocodeCache()
    counter_lock = threading.Lock()
    run = GeocodeRun(records=[])

    def resolve(group: AddressGroup) -> GeocodedAddress:
        if group.address in cache:
            with counter_lock:
                run.cache_hits += 1
            resp = cache.get(group.address)
        else:
            resp = None
            for attempt in range(retries + 1):
                with counter_lock:
                    run.client_calls += 1
                try:
                    resp = client.geocode(group.address)
                except GeocoderTransportError as exc:
                    log.debug("transport error for %r (attempt %d): %s", group.address, attempt + 1, exc)
                    continue
                cache.put(group.address, resp)
                break
            else:
                with counter_lock:
                    run.transport_failures += 1
                return GeocodedAddress(group.address, None, Accuracy.FAILED, group.capacity_K)
        if resp is None:
            with counter_lock:
                run.semantic_failures += 1
            return GeocodedAddress(group.address, None, Accuracy.FAILED, group.capacity_K)
        point, acc = resp
        return GeocodedAddress(group.address, point, acc, group.capacity_K)

    if max_workers <= 1:
        run.records = [resolve(g) for g in groups]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            run.records = list(pool.map(resolve, groups))
    return run


@dataclass(frozen=True)
class ZScoreStats:
    mu_lat: float
    mu_lon: float
    sigma_lat: float
    sigma_lon: float
    n: int


def _mean_std(values: Sequence[float]) -> Tuple[float, float]:
    n = len(values)
    mu = math.fsum(values) / n
    if max(values) == min(values):
        return mu, 0.0
    return mu, math.sqrt(math.fsum((v - mu) ** 2 for v in values) / n)


def zscore_stats(points: Sequence[GeoPoint]) -> ZScoreStats:
    """Mean and population standard deviation of latitude and longitude."""
    if not points:
        raise ValueError("z-score statistics need at least one point")
    mu_lat, s_lat = _mean_std([p.lat for p in points])
    mu_lon, s_lon = _mean_std([p.lon for p in points])
    return ZScoreStats(mu_lat, mu_lon, s_lat, s_lon, len(points))


def zscore_filter(records: Sequence[GeocodedAddress], threshold: float = 3.0
                  ) -> Tuple[List[GeocodedAddress], List[GeocodedAddress]]:
    """Split records into (inliers, outliers) in a single pass.

    A record is an outlier when ``|lat - mu_lat| / sigma_lat`` or the
    longitude equivalent exceeds ``threshold``. An axis with zero spread flags
    nothing. Statistics are computed once over the whole input.
    """
    if any(r.point is None for r in records):
        raise ValueError("zscore_filter needs successfully geocoded records")
    if not records:
        return [], []
    st = zscore_stats([r.point for r in records])
    inliers, outliers = [], []
    for r in records:
        flagged = False
        if st.sigma_lat > 0 and abs(r.point.lat - st.mu_lat) / st.sigma_lat > threshold:
            flagged = True
        if st.sigma_lon > 0 and abs(r.point.lon - st.mu_lon) / st.sigma_lon > threshold:
            flagged = True
        (outliers if flagged else inliers).append(r)
    return inliers, outliers
