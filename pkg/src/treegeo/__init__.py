"""Retrofit address-keyed street-tree inventories with coordinates from panorama detections."""

from .assign import (AssignmentResult, CandidatePair, TreeMatch, build_candidates, expand_to_trees,
                     solve_assignment)
from .evaluate import EvaluationInputs, EvaluationReport, blind_report, categorize, rooftop_filter
from .fuse import FusedTree, filter_far_from_street, fuse_detections
from .geo import GeoPoint, local_distance_m, offset
from .geocode import (Accuracy, FileGeocoder, GeocodeCache, GeocodedAddress, geocode_all,
                      zscore_filter)
from .inventory import AddressGroup, InventoryTree, SchemaMap, group_by_address, load_inventory
from .project import Detection, PanoramaMeta, ProjectedDetection, project_detection, synthesize_detection
from .synth import SynthConfig, SynthScene, generate

__version__ = "0.1.0"

__all__ = [
    "AddressGroup", "Accuracy", "AssignmentResult", "CandidatePair", "Detection", "EvaluationInputs",
    "EvaluationReport", "FileGeocoder", "FusedTree", "GeoPoint", "GeocodeCache", "GeocodedAddress",
    "InventoryTree", "PanoramaMeta", "ProjectedDetection", "SchemaMap", "SynthConfig", "SynthScene",
    "TreeMatch", "blind_report", "build_candidates", "categorize", "expand_to_trees",
    "filter_far_from_street", "fuse_detections", "generate", "geocode_all", "group_by_address",
    "load_inventory", "local_distance_m", "offset", "project_detection", "rooftop_filter",
    "solve_assignment", "synthesize_detection", "zscore_filter",
]
