"""Mobility routes and object placements: CSV ingest, validation, synthesis.

Route files carry the header ``client_id,seq,lat,lon[,dwell_ms]`` and object
files ``object_id,lat,lon,kind``. Files are UTF-8, numbers use ``.`` as the
decimal separator and are parsed with Python's ``float``/``int`` (so
``41.1579`` is read exactly as the nearest double, as any IEEE parser would).
Rows of one client may appear in any order; ``seq`` fixes the waypoint order.
Clients get node ids ``1..N`` in order of first appearance in the file.
"""

from __future__ import annotations

import csv
import math
import os
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from geoloc.geo import EARTH_RADIUS_M, GeoPosition, distance

DEFAULT_DWELL_MS = 1000
DEFAULT_MAX_HOP_M = 5000.0
ROUTE_HEADER = ("client_id", "seq", "lat", "lon", "dwell_ms")
OBJECT_HEADER = ("object_id", "lat", "lon", "kind")
KINDS = ("counter", "map")


class TraceError(ValueError):
    """Malformed or invalid trace data."""


class InfeasibleTraceError(TraceError):
    """Synthesis constraints cannot be met with the given parameters."""


@dataclass(frozen=True)
class Route:
    client_id: int
    waypoints: tuple[GeoPosition, ...]
    dwell: tuple[int, ...]
    label: str = ""

    @property
    def duration(self) -> int:
        return sum(self.dwell)

    def arrival_times(self) -> list[int]:
        times, t = [], 0
        for d in self.dwell:
            times.append(t)
            t += d
        return times


@dataclass(frozen=True)
class ObjectPlacement:
    object_id: int
    pos: GeoPosition
    kind: str = "counter"


@dataclass(frozen=True)
class BBox:
    lat_min: float
    lon_min: float
    lat_max: float
    lon_max: float

    def __post_init__(self) -> None:
        if not (self.lat_min < self.lat_max and self.lon_min < self.lon_max):
            raise ValueError("empty bounding box")
        GeoPosition(self.lat_min, self.lon_min)
        GeoPosition(self.lat_max, self.lon_max)

    @property
    def center(self) -> GeoPosition:
        return GeoPosition((self.lat_min + self.lat_max) / 2, (self.lon_min + self.lon_max) / 2)

    def clamp(self, p: GeoPosition) -> GeoPosition:
        return GeoPosition(min(max(p.lat, self.lat_min), self.lat_max), min(max(p.lon, self.lon_min), self.lon_max))

    def half_extent_m(self) -> float:
        c = self.center
        half_h = math.radians(self.lat_max - self.lat_min) / 2 * EARTH_RADIUS_M
        half_w = math.radians(self.lon_max - self.lon_min) / 2 * EARTH_RADIUS_M * math.cos(math.radians(c.lat))
        return min(half_h, half_w)


# Central Porto, roughly 6.7 km x 6.7 km.
PORTO_BBOX = BBox(41.13, -8.66, 41.19, -8.58)


# -- validation ---------------------------------------------------------------


def validate_routes(routes: Sequence[Route], max_hop: float = DEFAULT_MAX_HOP_M) -> None:
    if not routes:
        raise TraceError("no routes")
    seen: set[int] = set()
    for r in routes:
        if r.client_id in seen:
            raise TraceError(f"duplicate client id {r.client_id}")
        seen.add(r.client_id)
        if len(r.waypoints) < 2:
            raise TraceError(f"client {r.label or r.client_id}: a route needs at least 2 waypoints")
        if len(r.dwell) != len(r.waypoints) or any(d <= 0 for d in r.dwell):
            raise TraceError(f"client {r.label or r.client_id}: dwell times must be positive, one per waypoint")
        for i, (a, b) in enumerate(zip(r.waypoints, r.waypoints[1:])):
            hop = distance(a, b)
            if hop > max_hop:
                raise TraceError(
                    f"client {r.label or r.client_id}: hop {i}->{i + 1} is {hop:.0f} m, above the {max_hop:.0f} m bound"
                )


def validate_placements(placements: Sequence[ObjectPlacement]) -> None:
    ids = [p.object_id for p in placements]
    if len(set(ids)) != len(ids):
        raise TraceError("duplicate object ids")
    for p in placements:
        if p.kind not in KINDS:
            raise TraceError(f"object {p.object_id}: unknown kind {p.kind!r}")


def pairs_colocate(routes: Sequence[Route], radius: float, same_index: bool = True) -> list[tuple[int, int]]:
    """Client pairs that never come within ``radius`` of each other.

    With ``same_index`` the two clients must be close at the same waypoint
    index (i.e. at the same time for uniform dwell); otherwise any pair of
    waypoints counts.
    """
    missing = []
    for i, a in enumerate(routes):
        for b in routes[i + 1 :]:
            if same_index:
                hit = any(distance(p, q) <= radius for p, q in zip(a.waypoints, b.waypoints))
            else:
                hit = any(distance(p, q) <= radius for p in a.waypoints for q in b.waypoints)
            if not hit:
                missing.append((a.client_id, b.client_id))
    return missing


def object_coverage(routes: Sequence[Route], placements: Sequence[ObjectPlacement], radius: float) -> dict[int, set[int]]:
    """For each object, the clients whose route passes within ``radius``."""
    return {
        o.object_id: {r.client_id for r in routes if any(distance(w, o.pos) <= radius for w in r.waypoints)}
        for o in placements
    }


def coverage_problems(routes: Sequence[Route], placements: Sequence[ObjectPlacement], radius: float) -> list[str]:
    cover = object_coverage(routes, placements, radius)
    problems = []
    for r in routes:
        near = [o for o, cs in cover.items() if r.client_id in cs]
        if len(routes) > 1 and not any(len(cover[o]) >= 2 for o in near):
            problems.append(f"client {r.client_id} meets no shared object")
        if not any(len(cover[o]) == 1 for o in near):
            problems.append(f"client {r.client_id} meets no exclusive object")
    return problems


# -- CSV ----------------------------------------------------------------------


def _open_rows(path: str | os.PathLike[str], required: Sequence[str]) -> tuple[list[str], list[tuple[int, dict[str, str]]]]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise TraceError(f"cannot read {path}: {exc}") from exc
    reader = csv.reader(text.splitlines())
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise TraceError(f"{path}: empty file") from None
    absent = [c for c in required if c not in header]
    if absent:
        raise TraceError(f"{path}: header lacks {absent}")
    rows = []
    for lineno, raw in enumerate(reader, start=2):
        if not raw or all(not c.strip() for c in raw):
            continue
        if len(raw) != len(header):
            raise TraceError(f"{path}:{lineno}: expected {len(header)} fields, got {len(raw)}")
        rows.append((lineno, {h: c.strip() for h, c in zip(header, raw)}))
    if not rows:
        raise TraceError(f"{path}: no data rows")
    return header, rows


def _position(path: object, lineno: int, lat: str, lon: str) -> GeoPosition:
    try:
        return GeoPosition(float(lat), float(lon))
    except ValueError as exc:
        raise TraceError(f"{path}:{lineno}: bad coordinate ({lat!r}, {lon!r}): {exc}") from None


def _int(path: object, lineno: int, name: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise TraceError(f"{path}:{lineno}: {name} must be an integer, got {value!r}") from None


def load_routes(path: str | os.PathLike[str], max_hop: float = DEFAULT_MAX_HOP_M) -> list[Route]:
    header, rows = _open_rows(path, ROUTE_HEADER[:4])
    has_dwell = "dwell_ms" in header
    grouped: dict[str, list[tuple[int, GeoPosition, int, int]]] = {}
    for lineno, row in rows:
        label = row["client_id"]
        if not label:
            raise TraceError(f"{path}:{lineno}: empty client_id")
        seq = _int(path, lineno, "seq", row["seq"])
        pos = _position(path, lineno, row["lat"], row["lon"])
        dwell = _int(path, lineno, "dwell_ms", row["dwell_ms"]) if has_dwell and row["dwell_ms"] else DEFAULT_DWELL_MS
        if dwell <= 0:
            raise TraceError(f"{path}:{lineno}: dwell_ms must be positive")
        grouped.setdefault(label, []).append((seq, pos, dwell, lineno))
    routes = []
    for node_id, (label, pts) in enumerate(grouped.items(), start=1):
        pts.sort(key=lambda t: t[0])
        for (s1, *_), (s2, _, _, ln) in zip(pts, pts[1:]):
            if s1 == s2:
                raise TraceError(f"{path}:{ln}: duplicate seq {s2} for client {label}")
        routes.append(Route(node_id, tuple(p for _, p, _, _ in pts), tuple(d for _, _, d, _ in pts), label))
    validate_routes(routes, max_hop)
    return routes


def load_objects(path: str | os.PathLike[str]) -> list[ObjectPlacement]:
    _, rows = _open_rows(path, OBJECT_HEADER)
    out = []
    for lineno, row in rows:
        oid = _int(path, lineno, "object_id", row["object_id"])
        if oid < 0:
            raise TraceError(f"{path}:{lineno}: object_id must be unsigned")
        kind = row["kind"]
        if kind not in KINDS:
            raise TraceError(f"{path}:{lineno}: kind must be one of {KINDS}, got {kind!r}")
        out.append(ObjectPlacement(oid, _position(path, lineno, row["lat"], row["lon"]), kind))
    validate_placements(out)
    return out


def write_routes(routes: Iterable[Route], path: str | os.PathLike[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ROUTE_HEADER)
        for r in routes:
            label = r.label or str(r.client_id)
            for seq, (p, d) in enumerate(zip(r.waypoints, r.dwell)):
                w.writerow([label, seq, repr(p.lat), repr(p.lon), d])


def write_objects(placements: Iterable[ObjectPlacement], path: str | os.PathLike[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OBJECT_HEADER)
        for p in placements:
            w.writerow([p.object_id, repr(p.pos.lat), repr(p.pos.lon), p.kind])


# -- synthesis ------------------------------------------------------------------


def _walk(rng: random.Random, start: GeoPosition, heading: float, steps: int, step_m: float, bbox: BBox) -> list[GeoPosition]:
    pts = []
    p = start
    for _ in range(steps):
        h = heading + rng.gauss(0.0, 0.15)
        length = step_m * rng.uniform(0.8, 1.2)
        p = bbox.clamp(p.offset(length * math.cos(h), length * math.sin(h)))
        pts.append(p)
    return pts


def _attempt(rng: random.Random, clients: int, waypoints: int, objects: int, bbox: BBox,
             max_distance: float, interest_radius: float, dwell: int, kind: str) -> tuple[list[Route], list[ObjectPlacement]]:
    hub = bbox.center
    mid = (waypoints - 1) // 2
    reach = 0.9 * bbox.half_extent_m()
    step_m = reach / max(mid, waypoints - 1 - mid, 1)
    rays = 2 * clients
    spin = rng.uniform(0, 2 * math.pi)
    routes = []
    for k in range(clients):
        jitter = rng.uniform(-0.2, 0.2) * math.pi / rays
        ang_in = spin + 2 * math.pi * (2 * k) / rays + jitter
        ang_out = spin + 2 * math.pi * (2 * k + 1) / rays + jitter
        r0 = rng.uniform(0, max_distance / 4)
        a0 = rng.uniform(0, 2 * math.pi)
        meet = bbox.clamp(hub.offset(r0 * math.cos(a0), r0 * math.sin(a0)))
        before = _walk(rng, meet, ang_in, mid, step_m, bbox)[::-1]
        after = _walk(rng, meet, ang_out, waypoints - 1 - mid, step_m, bbox)
        pts = tuple(before + [meet] + after)
        routes.append(Route(k + 1, pts, (dwell,) * waypoints, str(k + 1)))

    placements: list[ObjectPlacement] = []

    def place(pos: GeoPosition) -> None:
        placements.append(ObjectPlacement(len(placements) + 1, pos, kind))

    n_shared = 0 if clients == 1 else max(1, objects // 10)
    n_exclusive = clients
    if n_shared + n_exclusive > objects:
        raise InfeasibleTraceError(
            f"{objects} objects cannot give {clients} clients one shared and one exclusive object each; "
            f"use at least {n_shared + n_exclusive} objects"
        )
    for _ in range(n_shared):
        r = rng.uniform(0, interest_radius / 3)
        a = rng.uniform(0, 2 * math.pi)
        place(bbox.clamp(hub.offset(r * math.cos(a), r * math.sin(a))))
    for route in routes:
        tip = route.waypoints[-1]
        place(bbox.clamp(tip.offset(rng.uniform(-50, 50), rng.uniform(-50, 50))))
    while len(placements) < objects:
        place(GeoPosition(rng.uniform(bbox.lat_min, bbox.lat_max), rng.uniform(bbox.lon_min, bbox.lon_max)))
    return routes, placements


def synthesize(
    seed: int,
    clients: int = 5,
    waypoints_per_route: int = 40,
    objects: int = 50,
    bbox: BBox = PORTO_BBOX,
    *,
    max_distance: float = 1000.0,
    interest_radius: float = 1000.0,
    dwell: int = DEFAULT_DWELL_MS,
    kind: str = "counter",
    attempts: int = 20,
) -> tuple[list[Route], list[ObjectPlacement]]:
    """Random-walk routes through a common meeting area, plus object placements.

    Every route is two noisy rays joined at a meeting point near the bbox
    centre, and all clients reach that point at the same waypoint index, so
    every client pair is within ``max_distance`` at least once. A few objects
    sit at the meeting point (shared) and one sits at the far end of each
    route (exclusive); the rest are uniform in the bbox.
    """
    if clients < 1 or waypoints_per_route < 2 or objects < 1:
        raise InfeasibleTraceError("need clients >= 1, waypoints_per_route >= 2 and objects >= 1")
    rng = random.Random(seed)
    last: list[str] = []
    for _ in range(attempts):
        routes, placements = _attempt(
            rng, clients, waypoints_per_route, objects, bbox, max_distance, interest_radius, dwell, kind
        )
        last = [f"clients {a} and {b} never meet" for a, b in pairs_colocate(routes, max_distance)]
        last += coverage_problems(routes, placements, interest_radius)
        if not last:
            validate_routes(routes)
            return routes, placements
    raise InfeasibleTraceError(
        "could not satisfy the overlap constraints (" + "; ".join(last[:3]) + "); "
        "try a larger bbox, fewer clients, or a smaller interest_radius"
    )


def dense_walks(
    seed: int,
    clients: int = 8,
    steps: int = 60,
    step_m: float = 250.0,
    spread: float = 1500.0,
    objects: int = 10,
    center: GeoPosition = PORTO_BBOX.center,
) -> tuple[list[Route], list[ObjectPlacement]]:
    """Uniform random walks confined to a disc of radius ``spread``.

    Meant for stress runs: with many clients in a small disc the overlay is
    dense and full of cycles, unlike the ray-shaped ``synthesize`` traces.
    A step that would leave the disc is taken in the opposite direction, or
    skipped if that leaves it too.
    """
    if clients < 1 or steps < 2 or spread <= 0:
        raise InfeasibleTraceError("need clients >= 1, steps >= 2 and spread > 0")
    rng = random.Random(seed)
    routes = []
    for k in range(clients):
        r, a = spread * math.sqrt(rng.random()), rng.uniform(0, 2 * math.pi)
        p = center.offset(r * math.cos(a), r * math.sin(a))
        pts = [p]
        for _ in range(steps - 1):
            h = rng.uniform(0, 2 * math.pi)
            q = p.offset(step_m * math.cos(h), step_m * math.sin(h))
            if distance(q, center) > spread:
                q = p.offset(-step_m * math.cos(h), -step_m * math.sin(h))
            if distance(q, center) <= spread:
                p = q
            pts.append(p)
        routes.append(Route(k + 1, tuple(pts), (DEFAULT_DWELL_MS,) * steps, str(k + 1)))
    placements = [
        ObjectPlacement(i + 1, center.offset(rng.uniform(-spread, spread), rng.uniform(-spread, spread)))
        for i in range(objects)
    ]
    validate_routes(routes)
    return routes, placements
