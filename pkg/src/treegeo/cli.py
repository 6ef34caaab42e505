"""Command-line entry point: ``treegeo <stage> [--config FILE] [--key value ...]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, get_type_hints

from . import pipeline
from .config import FIELD_TYPES, ConfigError, convert, load_config
from .formats import FormatError
from .evaluate import EvaluationError
from .inventory import InventoryError
from .synth import SynthConfig

log = logging.getLogger("treegeo")


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value configuration file")
    group = p.add_argument_group("configuration overrides")
    for key in FIELD_TYPES:
        flags = {f"--{key}", f"--{key.replace('_', '-')}"}
        group.add_argument(*sorted(flags), dest=key, default=None, metavar="VALUE")


def _synth_overrides(pairs: List[str]) -> Dict[str, object]:
    hints = get_type_hints(SynthConfig)
    out: Dict[str, object] = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, raw = (s.strip() for s in pair.split("=", 1))
        if key not in hints:
            raise ConfigError(f"unknown synth parameter {key!r}")
        kind = hints[key]
        try:
            if kind is int:
                out[key] = int(raw)
            elif kind is float:
                out[key] = float(raw)
            else:
                out[key] = tuple(float(x) for x in raw.split(","))
        except ValueError:
            raise ConfigError(f"bad value for synth parameter {key!r}: {raw!r}") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="treegeo", description="Geocode inventory trees from street-level detections.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*pipeline.STAGES, "run-all"):
        _add_run_options(sub.add_parser(name, help=f"run the {name} stage"))
    sp = sub.add_parser("synth", help="generate a synthetic municipality")
    sp.add_argument("--out", required=True, help="directory for the scene files")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a generator parameter (repeatable)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if args.command == "synth":
            config = SynthConfig(seed=args.seed, **_synth_overrides(args.set))
            pipeline.run_synth(config, Path(args.out))
            return 0
        overrides = {}
        for key in FIELD_TYPES:
            raw = getattr(args, key)
            if raw is not None:
                try:
                    overrides[key] = convert(key, raw)
                except ValueError:
                    raise ConfigError(f"bad value for --{key}: {raw!r}") from None
        cfg = load_config(args.config, overrides)
        Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
        if args.command == "run-all":
            pipeline.run_all(cfg)
        else:
            pipeline.STAGES[args.command](cfg)
    except (ConfigError, FileNotFoundError, FormatError, InventoryError, EvaluationError, ValueError) as exc:
        print(f"treegeo: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
