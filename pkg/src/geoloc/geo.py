"""Identifiers, geographic positions, great-circle distance and protocol constants."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping, NewType

NodeId = NewType("NodeId", int)
ObjectId = NewType("ObjectId", int)

EARTH_RADIUS_M = 6_371_000.0

MAX_U64 = 2**64 - 1


class ConfigError(ValueError):
    """Raised for invalid configuration values or files."""


@dataclass(frozen=True, order=True)
class GeoPosition:
    lat: float
    lon: float

    def __post_init__(self) -> None:
        lat, lon = float(self.lat), float(self.lon)
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise ValueError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= lat <= 90.0:
            raise ValueError(f"latitude {lat} outside [-90, 90]")
        if not -180.0 <= lon <= 180.0:
            raise ValueError(f"longitude {lon} outside [-180, 180]")
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", lon)

    def offset(self, north_m: float, east_m: float) -> GeoPosition:
        """Position displaced by a small local offset in meters (equirectangular)."""
        dlat = math.degrees(north_m / EARTH_RADIUS_M)
        dlon = math.degrees(east_m / (EARTH_RADIUS_M * math.cos(math.radians(self.lat))))
        return GeoPosition(self.lat + dlat, self.lon + dlon)


def distance(a: GeoPosition, b: GeoPosition) -> float:
    """Haversine great-circle distance in meters.

    The argument pair is put in a canonical order first so that
    ``distance(a, b) == distance(b, a)`` holds bit for bit.
    """
    if a == b:
        return 0.0
    if b < a:
        a, b = b, a
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dphi = phi2 - phi1
    dlmb = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    h = min(1.0, h)
    return 2 * EARTH_RADIUS_M * math.asin(math.sqrt(h))


def within(a: GeoPosition, b: GeoPosition, radius: float) -> bool:
    """True iff ``distance(a, b) <= radius`` (boundary inclusive)."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    return distance(a, b) <= radius


@dataclass(frozen=True)
class ProtocolConfig:
    """Every protocol constant in one record.

    Distances are meters, times are simulated milliseconds. The defaults are
    artifact choices; see README for how they were picked.
    """

    max_distance: float = 1000.0
    max_peers: int = 5
    announcement_time: int = 1000
    broadcast_time: int = 2000
    bully_timeout: int = 6000
    interest_radius: float = 1000.0
    review_probability: float = 0.5
    latency_low: int = 20
    latency_high: int = 100
    seed: int = 42

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if not self.max_distance > 0:
            raise ConfigError("max_distance must be > 0")
        if self.max_peers < 1:
            raise ConfigError("max_peers must be >= 1")
        for name in ("announcement_time", "broadcast_time", "bully_timeout"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if not self.interest_radius > 0:
            raise ConfigError("interest_radius must be > 0")
        if not 0.0 <= self.review_probability <= 1.0:
            raise ConfigError("review_probability must be in [0, 1]")
        if self.latency_low < 0 or self.latency_high < 0:
            raise ConfigError("latencies must be >= 0")
        if self.latency_low > self.latency_high:
            raise ConfigError("latency_low must be <= latency_high")
        if self.bully_timeout <= self.broadcast_time:
            raise ConfigError("bully_timeout must exceed broadcast_time")
        if not 0 <= self.seed <= MAX_U64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def with_overrides(self, **overrides: Any) -> ProtocolConfig:
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> ProtocolConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            if isinstance(value, bool):
                raise ConfigError(f"bad value for {key}: {value!r}")
            try:
                number = float(value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {value!r}") from exc
            if isinstance(getattr(cls, key), int):
                if not number.is_integer():
                    raise ConfigError(f"{key} must be an integer, got {value!r}")
                kwargs[key] = int(value) if isinstance(value, (int, str)) and str(value).strip().lstrip("-").isdigit() else int(number)
            else:
                kwargs[key] = number
        return cls(**kwargs)


def load_config(path: str | os.PathLike[str] | None = None, env: Mapping[str, str] | None = None) -> ProtocolConfig:
    """Load a JSON config file; ``GEOLOC_SEED`` in ``env`` overrides the seed."""
    data: dict[str, Any] = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    env = os.environ if env is None else env
    if "GEOLOC_SEED" in env:
        data["seed"] = env["GEOLOC_SEED"]
    return ProtocolConfig.from_mapping(data)
