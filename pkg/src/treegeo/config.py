"""Run configuration: ``key = value`` files with ``#`` comments, overridable by flags."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, Optional, Union


class ConfigError(ValueError):
    pass


PATH_KEYS = ("inventory", "geocoder", "cache", "panoramas", "detections", "ground_truth", "out_dir")


@dataclass
class RunConfig:
    municipality: str = "municipality"
    inventory: Optional[str] = None
    geocoder: Optional[str] = None
    cache: Optional[str] = None
    panoramas: Optional[str] = None
    detections: Optional[str] = None
    ground_truth: Optional[str] = None
    out_dir: str = "out"
    delimiter: str = ","
    address_column: str = "address"
    id_column: str = ""
    species_column: str = ""
    lat_column: str = ""
    lon_column: str = ""
    M: float = 50.0
    fuse_radius: float = 4.0
    z_threshold: float = 3.0
    camera_height: float = 3.0
    idw_epsilon: float = 1.0
    max_projection_distance: float = 50.0
    street_offset: float = 50.0
    truth_radius: float = 4.0
    geocode_retries: int = 2
    parallelism: int = 1
    seed: int = 0

    def path(self, key: str) -> Optional[Path]:
        value = getattr(self, key)
        return Path(value) if value else None

    def out(self, name: str) -> Path:
        return Path(self.out_dir) / name


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def convert(key: str, raw: str):
    kind = FIELD_TYPES[key]
    if kind in ("float", float):
        return float(raw)
    if kind in ("int", int):
        return int(raw)
    if key == "delimiter" and raw in ("\\t", "tab", "TAB"):
        return "\t"
    return raw


def parse_config_text(text: str, base_dir: Optional[Path] = None, source: str = "<config>") -> Dict[str, object]:
    """Parse ``key = value`` lines. Relative paths resolve against ``base_dir``."""
    values: Dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in stripped.split("=", 1))
        if key not in FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        try:
            value = convert(key, raw)
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {raw!r}") from None
        if key in PATH_KEYS and value and base_dir is not None and not Path(value).is_absolute():
            value = str(base_dir / value)
        values[key] = value
    return values


def load_config(path: Optional[Union[str, Path]] = None, overrides: Optional[Dict[str, object]] = None) -> RunConfig:
    values: Dict[str, object] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        values.update(parse_config_text(path.read_text(encoding="utf-8"), path.parent, str(path)))
    for key, value in (overrides or {}).items():
        if key not in FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        if value is not None:
            values[key] = value
    cfg = RunConfig(**values)
    if cfg.M <= 0 or cfg.fuse_radius <= 0 or cfg.idw_epsilon <= 0 or cfg.camera_height <= 0:
        raise ConfigError("M, fuse_radius, idw_epsilon and camera_height must be positive")
    if cfg.parallelism < 1:
        raise ConfigError("parallelism must be at least 1")
    return cfg


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if value is None:
            continue
        if f.name == "delimiter" and value == "\t":
            value = "\\t"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"

