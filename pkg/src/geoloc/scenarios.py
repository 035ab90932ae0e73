"""Check-in, review and latency experiments over the three overlay modes."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import random
import statistics
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from geoloc.crdt import Crdt, to_json
from geoloc.geo import ConfigError, GeoPosition, ProtocolConfig, within
from geoloc.nodes import (
    EDGE_BASE_ID,
    ClientNode,
    CloudNode,
    EdgeNode,
    OverlayMode,
    World,
    build_servers,
    initial_objects,
)
from geoloc.replication import EdgeGrid, Increment, Mutation, Put
from geoloc.simnet import LatencyModel, Metrics, Simulator
from geoloc.traces import ObjectPlacement, Route, PORTO_BBOX
from geoloc.wire import DeltaMsg, DirectoryEntry

SCENARIOS = ("checkin", "review", "latency")
MAX_GRACE_ROUNDS = 50


@dataclass(frozen=True)
class ScenarioConfig:
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    edge_cell_deg: float = 0.05
    jitter: float = 0.0
    loss_rate: float = 0.0
    grace_periods: int = 5
    latency_writes: int = 10
    write_interval: int = 10_000
    latency_clients: int = 5
    review_min: int = 500
    review_max: int = 10_000
    signalling_outage_at: Optional[int] = None
    max_pending: int = 2_000_000
    cluster_center: GeoPosition = PORTO_BBOX.center

    def __post_init__(self) -> None:
        if self.edge_cell_deg <= 0:
            raise ConfigError("edge_cell_deg must be > 0")
        if not 0 <= self.jitter < 1:
            raise ConfigError("jitter must be in [0, 1)")
        if not 0 <= self.loss_rate < 1:
            raise ConfigError("loss_rate must be in [0, 1)")
        if self.grace_periods < 1 or self.latency_writes < 0 or self.latency_clients < 1:
            raise ConfigError("grace_periods and latency_clients must be >= 1, latency_writes >= 0")
        if self.write_interval <= 0:
            raise ConfigError("write_interval must be > 0")
        if not 0 < self.review_min <= self.review_max:
            raise ConfigError("need 0 < review_min <= review_max")

    @property
    def seed(self) -> int:
        return self.protocol.seed

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["protocol"] = self.protocol.to_dict()
        d["cluster_center"] = [self.cluster_center.lat, self.cluster_center.lon]
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class ScenarioResult:
    scenario: str
    mode: OverlayMode
    metrics: Metrics
    cloud: dict[int, Crdt]
    issued: list[DeltaMsg]
    clients: list[ClientNode]
    end_time: int

    def missing_writes(self) -> list[DeltaMsg]:
        """Issued deltas whose effect is absent from the cloud store."""
        from geoloc.crdt import merge

        return [d for d in self.issued if merge(self.cloud[d.object_id], d.delta) != self.cloud[d.object_id]]


# -- applications --------------------------------------------------------------


class VenueApp:
    """Writes once per venue entry; entry is judged on trace geometry alone."""

    def __init__(self, venues: Sequence[DirectoryEntry], radius: float) -> None:
        self.venues = list(venues)
        self.radius = radius
        self.inside: dict[int, set[int]] = {}

    def start(self, client: ClientNode, sim: Simulator) -> None:
        self.inside.setdefault(client.node_id, set())

    def on_timer(self, client: ClientNode, tag: str, now: int) -> list[tuple[DirectoryEntry, Mutation]]:
        return []

    def on_position(self, client: ClientNode, pos: GeoPosition, now: int) -> list[tuple[DirectoryEntry, Mutation]]:
        inside = self.inside.setdefault(client.node_id, set())
        writes = []
        for v in self.venues:
            near = within(v.pos, pos, self.radius)
            if near and v.object_id not in inside:
                inside.add(v.object_id)
                m = self.on_enter(client.node_id, v, now)
                if m is not None:
                    writes.append((v, m))
            elif not near:
                inside.discard(v.object_id)
        return writes

    def on_enter(self, client: int, venue: DirectoryEntry, now: int) -> Optional[Mutation]:
        raise NotImplementedError


class CheckInApp(VenueApp):
    def on_enter(self, client: int, venue: DirectoryEntry, now: int) -> Optional[Mutation]:
        return Increment(1)


class ReviewApp(VenueApp):
    ALPHABET = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 "

    def __init__(self, venues: Sequence[DirectoryEntry], radius: float, probability: float, seed: int,
                 min_len: int = 500, max_len: int = 10_000) -> None:
        super().__init__(venues, radius)
        self.probability = probability
        self.seed = seed
        self.min_len, self.max_len = min_len, max_len
        self.rngs: dict[int, random.Random] = {}
        self.reviewed: set[tuple[int, int]] = set()
        self.seq: dict[int, int] = {}

    def on_enter(self, client: int, venue: DirectoryEntry, now: int) -> Optional[Mutation]:
        pair = (client, venue.object_id)
        if pair in self.reviewed:
            return None
        self.reviewed.add(pair)
        rng = self.rngs.setdefault(client, random.Random(f"review:{self.seed}:{client}"))
        if rng.random() >= self.probability:
            return None
        n = rng.randint(self.min_len, self.max_len)
        text = "".join(rng.choices(self.ALPHABET, k=n)).encode()
        seq = self.seq.get(client, 0) + 1
        self.seq[client] = seq
        return Put(f"review/{client}/{seq}", text, now)


class LatencyApp:
    """Periodic writes to one shared map by every client of a cluster."""

    def __init__(self, target: DirectoryEntry, start_at: int, interval: int, writes: int, stagger: int) -> None:
        self.target = target
        self.start_at = start_at
        self.interval = interval
        self.writes = writes
        self.stagger = stagger
        self.count: dict[int, int] = {}

    @property
    def horizon(self) -> int:
        return self.start_at + self.interval * self.writes

    def start(self, client: ClientNode, sim: Simulator) -> None:
        first = self.start_at + (client.node_id - 1) * self.stagger
        for k in range(self.writes):
            sim.set_timer(client.node_id, first + k * self.interval, "write")

    def on_position(self, client: ClientNode, pos: GeoPosition, now: int) -> list[tuple[DirectoryEntry, Mutation]]:
        return []

    def on_timer(self, client: ClientNode, tag: str, now: int) -> list[tuple[DirectoryEntry, Mutation]]:
        if tag != "write":
            return []
        k = self.count.get(client.node_id, 0) + 1
        self.count[client.node_id] = k
        value = f"{client.node_id}:{k}".encode()
        return [(self.target, Put(f"write/{client.node_id}/{k}", value, now))]


# -- running ---------------------------------------------------------------------


def _catalog(placements: Sequence[ObjectPlacement], kind: Optional[str]) -> dict[int, DirectoryEntry]:
    return {p.object_id: DirectoryEntry(p.object_id, p.pos, kind or p.kind) for p in placements}


def simulate(
    scenario: str,
    mode: OverlayMode,
    routes: Sequence[Route],
    catalog: dict[int, DirectoryEntry],
    app_factory: Callable[[], Any],
    scfg: ScenarioConfig,
    horizon: int = 0,
    setup: Optional[Callable[[Simulator, list[ClientNode]], None]] = None,
) -> ScenarioResult:
    cfg = scfg.protocol
    grid = EdgeGrid.occupied(scfg.edge_cell_deg, [e.pos for e in catalog.values()])
    world = World(cfg, mode, catalog, grid, edge_ids=tuple(EDGE_BASE_ID + i for i in range(len(grid.cells))))
    sim = Simulator(LatencyModel.from_config(cfg, scfg.jitter), cfg.seed, scfg.loss_rate, scfg.max_pending)
    cloud, edges = build_servers(world, initial_objects(catalog))
    sim.add_node(cloud)
    for e in edges:
        sim.add_node(e)
    app = app_factory()
    clients = [ClientNode(r, world, app) for r in routes]
    for c in clients:
        sim.add_node(c)
    if mode.uses_overlay:
        sim.topology_probe = lambda: {frozenset((c.node_id, p)) for c in clients for p in c.view.peers}
    if scfg.signalling_outage_at is not None:

        def outage(s: Simulator) -> None:
            for c in clients:
                c.view.server_up = False

        sim.call_at(scfg.signalling_outage_at, outage)
    if setup is not None:
        setup(sim, clients)
    for c in clients:
        c.start(sim)

    end = max([horizon] + [r.duration for r in routes])
    grace = scfg.grace_periods * cfg.broadcast_time
    sim.run(end + grace)
    servers: list[CloudNode | EdgeNode] = [cloud, *edges]
    for _ in range(MAX_GRACE_ROUNDS):
        if all(c.settled() for c in clients) and all(s.settled() for s in servers):
            break
        sim.run(sim.now + grace)
    sim.drain()
    m = sim.metrics
    m.run_meta.update(
        scenario=scenario,
        mode=mode.value,
        seed=cfg.seed,
        config_hash=scfg.config_hash(),
        clients=len(routes),
        objects=len(catalog),
        edges=len(edges),
        end_time=sim.now,
    )
    issued = [d for c in clients for d in c.issued]
    cloud_state = {o: cloud.store.objects[o].payload for o in sorted(cloud.store.objects)}
    return ScenarioResult(scenario, mode, m, cloud_state, issued, clients, sim.now)


def run_checkin(mode: OverlayMode, routes: Sequence[Route], placements: Sequence[ObjectPlacement],
                scfg: ScenarioConfig = ScenarioConfig()) -> ScenarioResult:
    catalog = _catalog(placements, "counter")
    venues = list(catalog.values())
    return simulate("checkin", mode, routes, catalog,
                    lambda: CheckInApp(venues, scfg.protocol.interest_radius), scfg)


def run_review(mode: OverlayMode, routes: Sequence[Route], placements: Sequence[ObjectPlacement],
               scfg: ScenarioConfig = ScenarioConfig()) -> ScenarioResult:
    catalog = _catalog(placements, "map")
    venues = list(catalog.values())
    cfg = scfg.protocol
    return simulate(
        "review", mode, routes, catalog,
        lambda: ReviewApp(venues, cfg.interest_radius, cfg.review_probability, cfg.seed,
                          scfg.review_min, scfg.review_max),
        scfg,
    )


def cluster_routes(scfg: ScenarioConfig) -> tuple[list[Route], DirectoryEntry]:
    """Stationary clients on a small circle, all mutually within max_distance."""
    cfg = scfg.protocol
    center = scfg.cluster_center
    radius = min(50.0, cfg.max_distance / 4)
    routes = []
    n = scfg.latency_clients
    for i in range(n):
        a = 2 * math.pi * i / n
        p = center.offset(radius * math.cos(a), radius * math.sin(a))
        routes.append(Route(i + 1, (p, p), (1000, 1000), str(i + 1)))
    return routes, DirectoryEntry(1, center, "map")


def run_latency(mode: OverlayMode, scfg: ScenarioConfig = ScenarioConfig()) -> ScenarioResult:
    cfg = scfg.protocol
    routes, target = cluster_routes(scfg)
    warmup = cfg.bully_timeout + cfg.broadcast_time
    stagger = scfg.write_interval // max(1, scfg.latency_clients)
    factory = lambda: LatencyApp(target, warmup, scfg.write_interval, scfg.latency_writes, stagger)  # noqa: E731
    horizon = warmup + scfg.write_interval * scfg.latency_writes
    return simulate("latency", mode, routes, {target.object_id: target}, factory, scfg, horizon)


def run_scenario(scenario: str, mode: OverlayMode, routes: Sequence[Route] = (),
                 placements: Sequence[ObjectPlacement] = (), scfg: ScenarioConfig = ScenarioConfig()) -> ScenarioResult:
    if scenario == "checkin":
        return run_checkin(mode, routes, placements, scfg)
    if scenario == "review":
        return run_review(mode, routes, placements, scfg)
    if scenario == "latency":
        return run_latency(mode, scfg)
    raise ValueError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")


# -- export ------------------------------------------------------------------------


def percentile(samples: Sequence[int], q: float) -> Optional[float]:
    """Nearest-rank percentile; None for no samples."""
    if not samples:
        return None
    s = sorted(samples)
    return float(s[max(0, math.ceil(q / 100 * len(s)) - 1)])


def latency_summary(samples: Sequence[int]) -> dict[str, Optional[float]]:
    if not samples:
        return {"count": 0, "min": None, "median": None, "p95": None, "max": None}
    return {
        "count": len(samples),
        "min": float(min(samples)),
        "median": float(statistics.median(samples)),
        "p95": percentile(samples, 95),
        "max": float(max(samples)),
    }


def summary_of(m: Metrics) -> dict[str, Any]:
    return {
        **m.run_meta,
        "total_messages": m.total_messages,
        "total_bytes": m.total_bytes,
        "server_messages": m.server_messages,
        "server_bytes": m.server_bytes,
        "peer_messages": m.peer_messages,
        "peer_bytes": m.peer_bytes,
        "control_messages": m.control_messages,
        "data_messages": m.data_messages,
        "latency": latency_summary(m.latencies),
    }


def export_metrics(m: Metrics, path: str | os.PathLike[str], cloud: Optional[dict[int, Crdt]] = None) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("counter", "value"))
            w.writerows(m.rows())
        with open(out / "latencies.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("sample", "latency_ms"))
            w.writerows(enumerate(m.latencies))
        summary = summary_of(m)
        if cloud is not None:
            summary["cloud_digest"] = cloud_digest(cloud)
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write metrics to {out}: {exc}") from exc
    return out


def cloud_digest(cloud: dict[int, Crdt]) -> str:
    blob = json.dumps({str(k): to_json(v) for k, v in sorted(cloud.items())}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def directional(summaries: dict[str, dict[str, Any]], scenario: Optional[str] = None) -> dict[str, bool]:
    """Ordering checks between modes, keyed by mode value.

    Each scenario reports the comparisons its experiment is about: message
    counts for check-in, bytes (and the message count, for reference) for
    review, median latency for the latency run.
    """
    if scenario is None:
        names = {s.get("scenario") for s in summaries.values()}
        scenario = names.pop() if len(names) == 1 else None
    out: dict[str, bool] = {}
    p, f, c = (summaries.get(m.value) for m in OverlayMode)
    if scenario in ("checkin", None) and p and f:
        out["partial_fewer_messages_than_full"] = p["total_messages"] < f["total_messages"]
    if scenario in ("checkin", None) and p and c:
        out["cs_server_messages_le_partial"] = c["server_messages"] <= p["server_messages"]
    if scenario in ("review", None) and p and f:
        out["partial_fewer_bytes_than_full"] = p["total_bytes"] < f["total_bytes"]
        out["partial_more_messages_than_full"] = p["total_messages"] > f["total_messages"]
    glo = p or f
    if scenario in ("latency", None) and glo and c:
        lg, lc = glo["latency"]["median"], c["latency"]["median"]
        if lg is not None and lc is not None:
            out["glo_latency_lower"] = lg < lc
    return out
