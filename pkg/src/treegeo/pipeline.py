"""Pipeline stages over the on-disk formats.

Each stage reads its inputs from the paths in a :class:`RunConfig` (or from
earlier stages' outputs in ``out_dir``), writes its own outputs, and returns
a dict of summary counts.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from pathlib import Path
from typing import Dict

from . import formats
from .assign import build_candidates, expand_to_trees, solve_assignment
from .config import RunConfig, dump_config
from .evaluate import (EvaluationInputs, blind_report, categorize, report_from_categories, rooftop_filter,
                       tree_categories)
from .fuse import filter_far_from_street, fuse_detections
from .geocode import Accuracy, FileGeocoder, GeocodeCache, geocode_all, write_atomic, zscore_filter
from .inventory import SchemaMap, group_by_address, load_inventory
from .project import project_all
from .synth import SynthConfig, SynthScene, generate

log = logging.getLogger(__name__)

INVENTORY_FILE = "inventory.tsv"
GEOCODED_FILE = "geocoded.tsv"
CACHE_FILE = "geocode_cache.tsv"
PROJECTED_FILE = "projected.tsv"
FUSED_FILE = "fused.tsv"
FUSED_GEOJSON = "fused.geojson"
MATCHES_FILE = "matches.tsv"
MATCHES_GEOJSON = "matches.geojson"
ASSIGN_SUMMARY = "assign_summary.txt"


def _require(cfg: RunConfig, key: str) -> Path:
    path = cfg.path(key)
    if path is None:
        raise FileNotFoundError(f"no {key} file configured")
    if not path.exists():
        raise FileNotFoundError(f"input file not found: {path}")
    return path


def _summary(stage: str, started: float, counts: Dict[str, object]) -> Dict[str, object]:
    parts = " ".join(f"{k}={v}" for k, v in counts.items())
    log.info("%s: %s (%.2f s)", stage, parts, time.perf_counter() - started)
    return counts


def run_ingest(cfg: RunConfig) -> Dict[str, object]:
    started = time.perf_counter()
    path = _require(cfg, "inventory")
    schema = SchemaMap(cfg.address_column, cfg.id_column or None, cfg.species_column or None,
                       cfg.lat_column or None, cfg.lon_column or None)
    with path.open(encoding="utf-8", newline="") as fh:
        loaded = load_inventory(fh, schema, cfg.delimiter)
    formats.write_inventory(cfg.out(INVENTORY_FILE), loaded.trees)
    groups = group_by_address(loaded.trees)
    return _summary("ingest", started, {"trees": len(loaded.trees), "addresses": len(groups),
                                        "dropped_rows": loaded.dropped_rows,
                                        "coord_warnings": loaded.coord_warnings})


def run_geocode(cfg: RunConfig) -> Dict[str, object]:
    started = time.perf_counter()
    trees = formats.read_inventory(cfg.out(INVENTORY_FILE))
    groups = group_by_address(trees)
    client = FileGeocoder(_require(cfg, "geocoder"))
    cache = GeocodeCache(cfg.path("cache") or cfg.out(CACHE_FILE))
    run = geocode_all(groups, client, cache, retries=cfg.geocode_retries, max_workers=cfg.parallelism)
    cache.save()
    ok = [r for r in run.records if r.accuracy is not Accuracy.FAILED]
    _, outliers = zscore_filter(ok, cfg.z_threshold)
    formats.write_geocoded(cfg.out(GEOCODED_FILE), run.records, (r.address for r in outliers))
    return _summary("geocode", started, {
        "addresses": len(run.records), "client_calls": run.client_calls, "cache_hits": run.cache_hits,
        "failed": run.semantic_failures, "transport_failures": run.transport_failures,
        "outliers": len(outliers)})


def run_project(cfg: RunConfig) -> Dict[str, object]:
    started = time.perf_counter()
    panos = formats.read_panoramas(_require(cfg, "panoramas"), cfg.camera_height)
    dets = formats.read_detections(_require(cfg, "detections"))
    run = project_all({p.pano_id: p for p in panos}, dets, cfg.max_projection_distance)
    formats.write_projected(cfg.out(PROJECTED_FILE), run.projected)
    return _summary("project", started, {"detections": len(dets), "projected": len(run.projected),
                                         "no_ground_intersection": run.no_ground, "too_far": run.too_far,
                                         "unknown_pano": run.unknown_pano})


def run_fuse(cfg: RunConfig) -> Dict[str, object]:
    started = time.perf_counter()
    projected = formats.read_projected(cfg.out(PROJECTED_FILE))
    cameras = [p.camera for p in formats.read_panoramas(_require(cfg, "panoramas"), cfg.camera_height)]
    fused = fuse_detections(projected, cfg.fuse_radius, cfg.idw_epsilon)
    kept = filter_far_from_street(fused, cameras, cfg.street_offset)
    formats.write_fused(cfg.out(FUSED_FILE), kept)
    formats.write_geojson(cfg.out(FUSED_GEOJSON), (
        (t.point, {"fused_index": i, "fused_score": t.fused_score, "member_count": t.member_count})
        for i, t in enumerate(kept)))
    return _summary("fuse", started, {"projected": len(projected), "fused": len(fused),
                                      "kept": len(kept)})


def run_assign(cfg: RunConfig) -> Dict[str, object]:
    started = time.perf_counter()
    trees = formats.read_inventory(cfg.out(INVENTORY_FILE))
    groups = group_by_address(trees)
    records, outliers = formats.read_geocoded(cfg.out(GEOCODED_FILE))
    fused = formats.read_fused(cfg.out(FUSED_FILE))
    usable = [r for r in records if r.accuracy is not Accuracy.FAILED and r.address not in outliers]
    candidates = build_candidates(usable, fused, cfg.M)
    result = solve_assignment(candidates, [r.capacity_K for r in usable], cfg.M, n_trees=len(fused))
    matches = expand_to_trees(result, usable, groups, fused)
    formats.write_matches(cfg.out(MATCHES_FILE), matches)
    formats.write_geojson(cfg.out(MATCHES_GEOJSON), (
        (m.point, {"tree_id": m.tree_id, "address": m.address,
                   "score": fused[m.fused_index].fused_score}) for m in matches))
    counts = {"addresses": len(usable), "detected_trees": len(fused), "candidates": len(candidates),
              "matches": len(result.matches), "objective": repr(result.objective_value),
              "unmatched_trees": result.unmatched_trees, "unfilled_capacity": result.unfilled_capacity,
              "geocoded_inventory_trees": len(matches)}
    write_atomic(cfg.out(ASSIGN_SUMMARY), "".join(f"{k} = {v}\n" for k, v in counts.items()))
    return _summary("assign", started, counts)


def load_evaluation_inputs(cfg: RunConfig) -> EvaluationInputs:
    trees = formats.read_inventory(cfg.out(INVENTORY_FILE))
    records, outliers = formats.read_geocoded(cfg.out(GEOCODED_FILE))
    return EvaluationInputs(trees, records, outliers, formats.read_fused(cfg.out(FUSED_FILE)),
                            formats.read_matches(cfg.out(MATCHES_FILE)))


def run_evaluate(cfg: RunConfig) -> Dict[str, object]:
    started = time.perf_counter()
    inputs = load_evaluation_inputs(cfg)
    blind = blind_report(inputs, cfg.M)
    write_atomic(cfg.out("blind_report.txt"), blind.to_table(f"{cfg.municipality} (no ground truth)"))
    write_atomic(cfg.out("blind_report.kv"), blind.to_kv())
    counts: Dict[str, object] = {f"blind_{k}": v for k, v in blind.counts.items()}

    truth = None
    if cfg.ground_truth:
        truth = formats.read_ground_truth(_require(cfg, "ground_truth"))
    elif all(t.ground_truth is not None for t in inputs.inventory) and inputs.inventory:
        truth = {t.tree_id: t.ground_truth for t in inputs.inventory}
    if truth is not None:
        per_tree = tree_categories(inputs, truth, cfg.M, cfg.truth_radius)
        formats.write_table(cfg.out("tree_categories.tsv"), ("tree_id", "category"), sorted(per_tree.items()))
        report = report_from_categories(per_tree)
        write_atomic(cfg.out("report.txt"), report.to_table(cfg.municipality))
        write_atomic(cfg.out("report.kv"), report.to_kv())
        rooftop = categorize(rooftop_filter(inputs), truth, cfg.M, cfg.truth_radius)
        write_atomic(cfg.out("report_rooftop.txt"), rooftop.to_table(f"{cfg.municipality} (rooftop only)"))
        write_atomic(cfg.out("report_rooftop.kv"), rooftop.to_kv())
        counts.update(report.counts)
        counts["tree_correct_percent"] = f"{report.percent('tree_correct'):.1f}"
        counts["rooftop_tree_correct_percent"] = f"{rooftop.percent('tree_correct'):.1f}"
    return _summary("evaluate", started, counts)


STAGES = {
    "ingest": run_ingest,
    "geocode": run_geocode,
    "project": run_project,
    "fuse": run_fuse,
    "assign": run_assign,
    "evaluate": run_evaluate,
}


def run_all(cfg: RunConfig) -> Dict[str, Dict[str, object]]:
    return {name: stage(cfg) for name, stage in STAGES.items()}


SCENE_FILES = {
    "inventory": "inventory.csv",
    "geocoder": "geocoder.tsv",
    "panoramas": "panoramas.tsv",
    "detections": "detections.tsv",
    "ground_truth": "ground_truth.tsv",
}


def write_scene(scene: SynthScene, directory: Path) -> RunConfig:
    """Write a scene in the pipeline's input formats plus a ``scene.cfg`` that runs it."""
    directory = Path(directory)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("tree_id", "address", "species"))
    writer.writerows((t.tree_id, scene.raw_addresses[t.tree_id], t.species) for t in scene.trees)
    write_atomic(directory / SCENE_FILES["inventory"], buf.getvalue())
    cache = GeocodeCache(directory / SCENE_FILES["geocoder"])
    for address, resp in scene.geocoder_table.items():
        cache.put(address, resp)
    cache.save()
    formats.write_panoramas(directory / SCENE_FILES["panoramas"], scene.panoramas)
    formats.write_detections(directory / SCENE_FILES["detections"], scene.detections)
    formats.write_ground_truth(directory / SCENE_FILES["ground_truth"], scene.ground_truth)
    formats.write_table(directory / "truth_meta.tsv", ("tree_id", "address", "unambiguous", "injected"),
                        ((t.tree_id, t.address, int(t.tree_id in scene.unambiguous),
                          scene.injected.get(t.tree_id, "")) for t in scene.trees))
    cfg = RunConfig(municipality=f"synthetic-{scene.config.seed}", id_column="tree_id",
                    species_column="species", out_dir="out", seed=scene.config.seed,
                    camera_height=scene.config.camera_height_m,
                    **{k: v for k, v in SCENE_FILES.items()})
    write_atomic(directory / "scene.cfg", dump_config(cfg))
    return cfg


def run_synth(config: SynthConfig, directory: Path) -> Dict[str, object]:
    started = time.perf_counter()
    scene = generate(config)
    write_scene(scene, directory)
    return _summary("synth", started, {"trees": len(scene.trees), "panoramas": len(scene.panoramas),
                                       "detections": len(scene.detections),
                                       "false_positives": scene.n_false_positives,
                                       "injected": len(scene.injected)})
