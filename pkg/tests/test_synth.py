from collections import Counter

import pytest

from treegeo.geo import local_distance_m
from treegeo.geocode import Accuracy
from treegeo.project import project_detection
from treegeo.synth import (INJECT_FAILED, INJECT_FAR, INJECT_MISSED, INJECT_OUTLIER, SynthConfig,
                           generate)


def test_same_seed_same_scene():
    a, b = generate(SynthConfig(seed=3)), generate(SynthConfig(seed=3))
    assert a.trees == b.trees and a.detections == b.detections and a.geocoder_table == b.geocoder_table
    assert generate(SynthConfig(seed=4)).trees != a.trees


def test_full_miss_rate_no_detections():
    scene = generate(SynthConfig(seed=1, miss_rate=1.0, false_positive_rate=0.0))
    assert scene.detections == [] and len(scene.trees) > 0


def test_zero_noise_detections_project_back():
    scene = generate(SynthConfig(seed=2, detection_noise_sigma_m=0.0, miss_rate=0.0, false_positive_rate=0.0))
    panos = {p.pano_id: p for p in scene.panoramas}
    truth = [t.ground_truth for t in scene.trees]
    worst = 0.0
    for det in scene.detections:
        back = project_detection(panos[det.pano_id], det).point
        worst = max(worst, min(local_distance_m(back, p) for p in truth))
    assert scene.detections and worst < 1e-6


def test_every_visible_tree_detected_without_misses():
    scene = generate(SynthConfig(seed=5, detection_noise_sigma_m=0.0, miss_rate=0.0, false_positive_rate=0.0))
    assert scene.n_false_positives == 0
    for t in scene.trees:
        assert any(local_distance_m(p.camera, t.ground_truth) <= 50.0 for p in scene.panoramas)


def test_trees_well_separated():
    scene = generate(SynthConfig(seed=6, n_streets=5, blocks_per_street=5))
    pts = [t.ground_truth for t in scene.trees]
    closest = min(local_distance_m(a, b) for i, a in enumerate(pts) for b in pts[i + 1:])
    assert closest > 4.0


def test_capacity_sharing_is_common():
    scene = generate(SynthConfig(seed=0, n_streets=6, blocks_per_street=6))
    per_address = Counter(t.address for t in scene.trees)
    shared = sum(k for k in per_address.values() if k > 1)
    assert shared / len(scene.trees) > 0.6


def test_injected_counts():
    cfg = SynthConfig(seed=9, address_spacing_m=120.0, blocks_per_street=3, n_failed_geocodes=3,
                      n_outlier_geocodes=2, n_far_geocodes=4, n_missed_addresses=5)
    scene = generate(cfg)
    by_mode = Counter(scene.injected.values())
    addresses = {mode: {t.address for t in scene.trees if scene.injected.get(t.tree_id) == mode}
                 for mode in by_mode}
    assert len(addresses[INJECT_FAILED]) == 3
    assert len(addresses[INJECT_OUTLIER]) == 2
    assert len(addresses[INJECT_FAR]) == 4
    assert len(addresses[INJECT_MISSED]) == 5
    for a in addresses[INJECT_FAILED]:
        assert a not in scene.geocoder_table
    for a in addresses[INJECT_FAR]:
        pt, acc = scene.geocoder_table[a]
        truth = [t.ground_truth for t in scene.trees if t.address == a]
        assert all(local_distance_m(pt, p) > 50.0 for p in truth)


def test_non_rooftop_fraction_respected():
    scene = generate(SynthConfig(seed=1, n_streets=6, blocks_per_street=6, non_rooftop_fraction=0.3))
    accs = [acc for _, acc in scene.geocoder_table.values()]
    share = sum(a is not Accuracy.ROOFTOP for a in accs) / len(accs)
    assert 0.2 < share < 0.4


def test_invalid_config():
    with pytest.raises(ValueError):
        generate(SynthConfig(miss_rate=1.5))
    with pytest.raises(ValueError):
        generate(SynthConfig(n_streets=0))


def test_written_scene_byte_identical(tmp_path):
    from treegeo.pipeline import SCENE_FILES, write_scene
    write_scene(generate(SynthConfig(seed=8)), tmp_path / "a")
    write_scene(generate(SynthConfig(seed=8)), tmp_path / "b")
    for name in (*SCENE_FILES.values(), "truth_meta.tsv", "scene.cfg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_camera_spacing_matches_config():
    scene = generate(SynthConfig(seed=0, camera_spacing_m=15.0))
    gaps = [local_distance_m(a.camera, b.camera) for a, b in zip(scene.panoramas, scene.panoramas[1:])
            if a.pano_id[:3] == b.pano_id[:3]]
    # the local frame is anchored at the origin, so northern streets are a hair shorter
    assert sum(gaps) / len(gaps) == pytest.approx(15.0, rel=1e-4)


def test_false_positives_near_their_camera():
    scene = generate(SynthConfig(seed=3, miss_rate=1.0, false_positive_rate=1.0))
    panos = {p.pano_id: p for p in scene.panoramas}
    assert len(scene.detections) == scene.n_false_positives == len(scene.panoramas)
    for det in scene.detections:
        assert 0.5 <= project_detection(panos[det.pano_id], det).camera_distance_m <= 20.0 + 1e-9
