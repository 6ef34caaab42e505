"""Inventory ingestion: heterogeneous tabular files -> normalized tree records."""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, TextIO

from .geo import GeoPoint

log = logging.getLogger(__name__)

SUFFIXES = {
    "ST": "STREET",
    "AVE": "AVENUE",
    "BLVD": "BOULEVARD",
    "DR": "DRIVE",
    "RD": "ROAD",
    "LN": "LANE",
    "CT": "COURT",
    "PL": "PLACE",
    "WAY": "WAY",
}
DIRECTIONALS = {"N", "S", "E", "W", "NE", "NW", "SE", "SW"}

_UNIT_RE = re.compile(
    r"(?:\s+|^)(?:#\s*\S+|(?:APT|APARTMENT|UNIT|STE|SUITE)\s+\S+)(?=\s|$)"
)
_PUNCT_RE = re.compile(r"[.,]")
_WS_RE = re.compile(r"\s+")


class InventoryError(ValueError):
    """Fatal problem with an inventory file (bad header, missing column)."""


def normalize_address(raw: str) -> str:
    """Canonical form of a street address used as the grouping key.

    Uppercases, drops periods and commas, strips unit designators such as
    ``#4`` or ``APT B``, collapses whitespace and expands the street-type
    suffix (the last token, or the one before a trailing directional).
    """
    s = _PUNCT_RE.sub(" ", raw.upper())
    s = _WS_RE.sub(" ", s).strip()
    s = _UNIT_RE.sub(" ", s)
    tokens = s.split()
    if not tokens:
        return ""
    pos = len(tokens) - 1
    if len(tokens) > 2 and tokens[pos] in DIRECTIONALS:
        pos -= 1
    # a single token is never treated as a suffix
    if pos > 0:
        tokens[pos] = SUFFIXES.get(tokens[pos], tokens[pos])
    return " ".join(tokens)


@dataclass(frozen=True)
class InventoryTree:
    tree_id: str
    address: str
    species: Optional[str] = None
    ground_truth: Optional[GeoPoint] = None


@dataclass(frozen=True)
class AddressGroup:
    address: str
    tree_ids: tuple

    @property
    def capacity_K(self) -> int:
        return len(self.tree_ids)


@dataclass
class SchemaMap:
    """Column names in the source file. Only ``address`` is required."""

    address: str = "address"
    tree_id: Optional[str] = None
    species: Optional[str] = None
    lat: Optional[str] = None
    lon: Optional[str] = None

    def columns(self) -> List[str]:
        return [c for c in (self.address, self.tree_id, self.species, self.lat, self.lon) if c]


@dataclass
class InventoryLoad:
    trees: List[InventoryTree] = field(default_factory=list)
    dropped_rows: int = 0
    coord_warnings: int = 0


def load_inventory(source: TextIO, schema: SchemaMap, delimiter: str = ",") -> InventoryLoad:
    """Read an inventory table into :class:`InventoryTree` records.

    Rows whose address is empty after normalization are dropped and counted.
    An unparsable coordinate keeps the row but leaves ``ground_truth`` unset.
    Without a tree-id column, ids are ``row-<n>`` (1-based data row number).
    """
    reader = csv.DictReader(source, delimiter=delimiter)
    header = reader.fieldnames
    if header is None:
        raise InventoryError("inventory has no header row")
    header = [h.strip() for h in header]
    reader.fieldnames = header
    for col in schema.columns():
        if col not in header:
            raise InventoryError(f"missing column {col!r} in inventory header")

    out = InventoryLoad()
    seen = set()
    for n, row in enumerate(reader, start=1):
        address = normalize_address(row.get(schema.address) or "")
        if not address:
            out.dropped_rows += 1
            continue
        tree_id = (row.get(schema.tree_id) or "").strip() if schema.tree_id else f"row-{n}"
        if not tree_id:
            tree_id = f"row-{n}"
        if tree_id in seen:
            raise InventoryError(f"duplicate tree id {tree_id!r} on data row {n}")
        seen.add(tree_id)
        species = None
        if schema.species:
            species = (row.get(schema.species) or "").strip() or None

        gt = None
        if schema.lat and schema.lon:
            lat_s = (row.get(schema.lat) or "").strip()
            lon_s = (row.get(schema.lon) or "").strip()
            if lat_s or lon_s:
                try:
                    gt = GeoPoint(float(lat_s), float(lon_s))
                except ValueError:
                    out.coord_warnings += 1
                    log.warning("row %d: unparsable coordinate (%r, %r)", n, lat_s, lon_s)
        out.trees.append(InventoryTree(tree_id, address, species, gt))
    return out


def group_by_address(trees: Iterable[InventoryTree]) -> List[AddressGroup]:
    """Group trees by normalized address, in order of first appearance."""
    groups: Dict[str, List[str]] = {}
    for t in trees:
        groups.setdefault(t.address, []).append(t.tree_id)
    return [AddressGroup(a, tuple(ids)) for a, ids in groups.items()]
