"""Proximity overlay, per-object bully election and location-scoped CRDT
replication, with a deterministic simulator to exercise them."""

from geoloc.geo import GeoPosition, ProtocolConfig, distance, load_config, within
from geoloc.nodes import OverlayMode
from geoloc.scenarios import ScenarioConfig, run_checkin, run_latency, run_review, run_scenario

__all__ = [
    "GeoPosition",
    "OverlayMode",
    "ProtocolConfig",
    "ScenarioConfig",
    "distance",
    "load_config",
    "run_checkin",
    "run_latency",
    "run_review",
    "run_scenario",
    "within",
]
__version__ = "0.1.0"
