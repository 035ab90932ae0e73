"""Simulation actors: clients, edge servers and the cloud.

A :class:`World` holds the static facts every actor may consult (config,
object catalog, edge grid, server ids). Actors translate simulator events
into calls on the protocol state machines and send what those return.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable, Optional, Protocol, Sequence

from geoloc.bully import BullyTable
from geoloc.crdt import Crdt
from geoloc.geo import GeoPosition, ProtocolConfig, distance, within
from geoloc.overlay import SERVER, PeerView, SignallingState
from geoloc.replication import (
    ClientStore,
    CloudServer,
    EdgeGrid,
    EdgeServer,
    GeoObject,
    Mutation,
    ObjectServer,
    fresh_object,
    route_update,
)
from geoloc.simnet import NodeKind, Simulator
from geoloc.traces import Route
from geoloc.wire import (
    Ack,
    DeltaMsg,
    Dial,
    DialAck,
    DirectoryEntry,
    FetchReply,
    FetchReq,
    Hangup,
    ImTheBully,
    Interest,
    JoinOrPos,
    Message,
    PeerList,
    PositionMessage,
    Redirect,
    Subscribe,
    Unsubscribe,
)

CLOUD_ID = 1_000_000_000
EDGE_BASE_ID = CLOUD_ID + 1


class OverlayMode(str, Enum):
    GLO_PARTIAL = "glo-partial"
    GLO_FULL = "glo-full"
    CLIENT_SERVER = "cs"

    @property
    def uses_overlay(self) -> bool:
        return self is not OverlayMode.CLIENT_SERVER

    @classmethod
    def parse(cls, text: str) -> OverlayMode:
        aliases = {"client-server": "cs", "c-s": "cs", "glo_partial": "glo-partial", "glo_full": "glo-full"}
        return cls(aliases.get(text.lower(), text.lower()))


@dataclass
class World:
    cfg: ProtocolConfig
    mode: OverlayMode
    catalog: dict[int, DirectoryEntry]
    grid: Optional[EdgeGrid] = None
    cloud_id: int = CLOUD_ID
    edge_ids: tuple[int, ...] = ()

    @property
    def directory_radius(self) -> float:
        # a client reports again only after moving max_distance, so the
        # directory must cover that much slack around the reported position
        return self.cfg.interest_radius + self.cfg.max_distance

    def edge_for(self, pos: GeoPosition) -> Optional[int]:
        if self.grid is None or not self.mode.uses_overlay:
            return None
        idx = self.grid.index_of(pos)
        return None if idx is None else self.edge_ids[idx]

    def signalling_for(self, pos: GeoPosition) -> int:
        return self.edge_for(pos) or self.cloud_id

    def server_for_object(self, obj: int) -> int:
        return self.edge_for(self.catalog[obj].pos) or self.cloud_id

    def directory_near(self, pos: GeoPosition) -> list[DirectoryEntry]:
        if self.mode is OverlayMode.GLO_FULL:
            return [self.catalog[o] for o in sorted(self.catalog)]
        r = self.directory_radius
        return [self.catalog[o] for o in sorted(self.catalog) if within(self.catalog[o].pos, pos, r)]


class App(Protocol):
    """Application logic that turns movement and time into writes."""

    def start(self, client: ClientNode, sim: Simulator) -> None: ...

    def on_position(self, client: ClientNode, pos: GeoPosition, now: int) -> list[tuple[DirectoryEntry, Mutation]]: ...

    def on_timer(self, client: ClientNode, tag: str, now: int) -> list[tuple[DirectoryEntry, Mutation]]: ...


class IdleApp:
    def start(self, client: ClientNode, sim: Simulator) -> None:
        pass

    def on_position(self, client: ClientNode, pos: GeoPosition, now: int) -> list[tuple[DirectoryEntry, Mutation]]:
        return []

    def on_timer(self, client: ClientNode, tag: str, now: int) -> list[tuple[DirectoryEntry, Mutation]]:
        return []


# -- servers -----------------------------------------------------------------------


class ServerNode:
    """Signalling endpoint plus object store; base for edge and cloud."""

    kind: NodeKind

    def __init__(self, node_id: int, world: World, store: ObjectServer) -> None:
        self.node_id = node_id
        self.world = world
        self.store = store
        self.registry = SignallingState(world.cfg.max_distance)
        self._dir_sent: dict[int, set[int]] = {}
        self._seen_writes: set[tuple[int, int]] = set()

    def send(self, sim: Simulator, dst: int, msg: Message) -> None:
        sim.send(self.node_id, dst, msg)

    def on_timer(self, sim: Simulator, tag: str, data: Any) -> None:
        pass

    def on_message(self, sim: Simulator, src: int, msg: Message) -> None:
        if isinstance(msg, JoinOrPos):
            self.on_join(sim, src, msg)
        elif isinstance(msg, FetchReq):
            self.on_fetch(sim, src, msg)
        elif isinstance(msg, FetchReply):
            self.on_fetch_reply(sim, src, msg)
        elif isinstance(msg, DeltaMsg):
            self.on_delta(sim, src, msg)
        elif isinstance(msg, Subscribe):
            self.store.subscribe(msg.object_id, src)
        elif isinstance(msg, Unsubscribe):
            self.store.unsubscribe(msg.object_id, src)

    def on_join(self, sim: Simulator, src: int, msg: JoinOrPos) -> None:
        target = self.world.signalling_for(msg.pos)
        if target != self.node_id:
            self.registry.remove(src)
            self.send(sim, src, Redirect(target))
            return
        near = self.registry.on_node_pos(src, msg.pos, sim.now)
        peers: tuple[tuple[int, GeoPosition], ...] = ()
        if self.world.mode.uses_overlay:
            peers = tuple((n, self.registry.nodes_pos[n]) for n in near)
        sent = self._dir_sent.setdefault(src, set())
        fresh = tuple(e for e in self.world.directory_near(msg.pos) if e.object_id not in sent)
        sent.update(e.object_id for e in fresh)
        self.send(sim, src, PeerList(peers, fresh))

    def on_fetch(self, sim: Simulator, src: int, msg: FetchReq) -> None:
        obj = self.store.state(msg.object_id)
        if obj is None:
            self.send(sim, src, FetchReply(msg.object_id))
            return
        if msg.subscribe:
            self.store.subscribe(msg.object_id, src)
        self.send(sim, src, FetchReply(obj.id, obj.pos, obj.payload))

    def on_fetch_reply(self, sim: Simulator, src: int, msg: FetchReply) -> None:
        pass

    def merge_delta(self, sim: Simulator, msg: DeltaMsg) -> None:
        self.store.on_delta(msg.object_id, msg.delta)

    def on_delta(self, sim: Simulator, src: int, msg: DeltaMsg) -> None:
        key = (msg.origin, msg.seq)
        from_client = sim.kind_of(src) is NodeKind.CLIENT
        if msg.subscribe and from_client:
            self.store.subscribe(msg.object_id, src)
        if from_client:
            self.send(sim, src, Ack(msg.object_id, msg.origin, msg.seq))
        if key in self._seen_writes:
            return
        self._seen_writes.add(key)
        self.merge_delta(sim, msg)
        push = replace(msg, relay=False, subscribe=False, covered=frozenset())
        for sub in self.store.subscribers_of(msg.object_id, exclude=src):
            if sub != msg.origin:
                self.send(sim, sub, push)
        self.after_delta(sim, push)

    def after_delta(self, sim: Simulator, msg: DeltaMsg) -> None:
        pass

    def settled(self) -> bool:
        return True


class CloudNode(ServerNode):
    kind = NodeKind.CLOUD

    def __init__(self, world: World) -> None:
        super().__init__(world.cloud_id, world, CloudServer())


class EdgeNode(ServerNode):
    kind = NodeKind.EDGE

    def __init__(self, node_id: int, world: World, store: EdgeServer) -> None:
        super().__init__(node_id, world, store)
        self.region = store.region
        self._waiting: dict[int, list[Crdt]] = {}

    def merge_delta(self, sim: Simulator, msg: DeltaMsg) -> None:
        obj = msg.object_id
        if self.store.on_delta(obj, msg.delta):
            return
        entry = self.world.catalog.get(obj)
        if entry is not None and self.region.contains(entry.pos):
            # in-region object missing here: pull the full state from the cloud
            if obj not in self._waiting:
                self.send(sim, self.world.cloud_id, FetchReq(obj))
            self._waiting.setdefault(obj, []).append(msg.delta)

    def on_fetch_reply(self, sim: Simulator, src: int, msg: FetchReply) -> None:
        if msg.state is None or msg.pos is None:
            return
        obj = GeoObject(msg.object_id, msg.pos, msg.state)
        for d in self._waiting.pop(msg.object_id, []):
            obj = obj.merged(d)
        self.store.seed(obj)

    def after_delta(self, sim: Simulator, msg: DeltaMsg) -> None:
        self.send(sim, self.world.cloud_id, msg)

    def settled(self) -> bool:
        return not self._waiting


# -- clients ---------------------------------------------------------------------


@dataclass
class _Pending:
    target: int  # peer id, or SERVER
    since: int


class ClientNode:
    kind = NodeKind.CLIENT

    def __init__(self, route: Route, world: World, app: App | None = None) -> None:
        cfg = world.cfg
        self.node_id = route.client_id
        self.world = world
        self.route = route
        self.app: App = app or IdleApp()
        self.glo = world.mode.uses_overlay
        self.full = world.mode is OverlayMode.GLO_FULL
        self.pos = route.waypoints[0]
        self.waypoint = 0
        self.view = PeerView(
            self.node_id, cfg.max_distance, cfg.max_peers, cfg.announcement_time, self.pos, settle=self.glo
        )
        self.table: Optional[BullyTable] = (
            BullyTable(self.node_id, bully_timeout=cfg.bully_timeout, broadcast_time=cfg.broadcast_time)
            if self.glo
            else None
        )
        self.store = ClientStore(self.node_id, cfg.interest_radius)
        self.signalling = world.cloud_id
        self.directory: dict[int, DirectoryEntry] = {}
        self.peer_interest: dict[int, frozenset[int]] = {}
        self.pending_fetch: dict[int, _Pending] = {}
        self.intents: dict[int, list[Mutation]] = {}
        self.early: dict[int, list[Crdt]] = {}
        self.outbox: dict[tuple[int, int], DeltaMsg] = {}
        self.issued: list[DeltaMsg] = []
        self.subscribed: set[int] = set()
        self.seen_writes: set[tuple[int, int]] = set()
        self.relayed: set[tuple[int, int]] = set()
        self.ack_route: dict[tuple[int, int], int] = {}
        self.seq = 0
        self._advertised: frozenset[int] = frozenset()

    # -- plumbing -----------------------------------------------------------

    def send(self, sim: Simulator, dst: int, msg: Message) -> None:
        sim.send(self.node_id, self.signalling if dst == SERVER else dst, msg)

    def send_all(self, sim: Simulator, out: Iterable[tuple[int, Message]]) -> None:
        for dst, msg in out:
            self.send(sim, dst, msg)

    def interested_peers(self, obj: int) -> list[int]:
        return sorted(p for p in self.view.peers if obj in self.peer_interest.get(p, ()))

    def settled(self) -> bool:
        return not (self.outbox or self.pending_fetch or any(self.intents.values()))

    # -- lifecycle ------------------------------------------------------------

    def start(self, sim: Simulator) -> None:
        cfg = self.world.cfg
        self.send_all(sim, self.view.join(self.pos))
        if len(self.route.waypoints) > 1:
            sim.set_timer(self.node_id, sim.now + self.route.dwell[0], "waypoint")
        sim.set_timer(self.node_id, sim.now + cfg.announcement_time, "announce")
        if self.glo:
            sim.set_timer(self.node_id, sim.now + cfg.broadcast_time, "broadcast")
        self.app.start(self, sim)
        self.position_changed(sim)

    def on_timer(self, sim: Simulator, tag: str, data: Any) -> None:
        cfg = self.world.cfg
        if tag == "waypoint":
            self.waypoint += 1
            self.pos = self.route.waypoints[self.waypoint]
            if self.waypoint + 1 < len(self.route.waypoints):
                sim.set_timer(self.node_id, sim.now + self.route.dwell[self.waypoint], "waypoint")
            self.position_changed(sim)
        elif tag == "announce":
            self.send_all(sim, self.view.update_position(self.pos, sim.now))
            if self.glo:
                out, dropped = self.view.review_peers(self.pos, sim.now)
                if len(self.view.peers) > cfg.max_peers:
                    sim.metrics.degree_violations += 1
                self.send_all(sim, out)
                for p in dropped:
                    self.link_down(sim, p)
            self.refresh(sim)
            sim.set_timer(self.node_id, sim.now + cfg.announcement_time, "announce")
        elif tag == "broadcast":
            assert self.table is not None
            self.send_all(sim, self.table.broadcast(self.interested_peers))
            sim.set_timer(self.node_id, sim.now + cfg.broadcast_time, "broadcast")
        elif tag == "bully_timeout":
            assert self.table is not None
            if self.table.expired(data, sim.now):
                self.table.on_timeout(data)
                self.sync_subscriptions(sim)
        elif tag == "fetch_timeout":
            obj, target = data
            pending = self.pending_fetch.get(obj)
            if pending is not None and pending.target == target:
                self.fetch_from_server(sim, obj)
        elif tag == "retry":
            self.retry(sim, data)
        else:
            self.submit(sim, self.app.on_timer(self, tag, sim.now))

    def position_changed(self, sim: Simulator) -> None:
        self.submit(sim, self.app.on_position(self, self.pos, sim.now))

    # -- interest and fetching -------------------------------------------------

    def submit(self, sim: Simulator, writes: Sequence[tuple[DirectoryEntry, Mutation]]) -> None:
        for entry, mutation in writes:
            self.directory.setdefault(entry.object_id, entry)
            self.intents.setdefault(entry.object_id, []).append(mutation)
        self.refresh(sim)
        for entry, _ in writes:
            self.drain_intents(sim, entry.object_id)

    def refresh(self, sim: Simulator) -> None:
        pinned = [o for o, ms in self.intents.items() if ms]
        to_fetch, evicted = self.store.refresh_interest(self.pos, self.directory, pinned, everything=self.full)
        for obj in evicted:
            self.early.pop(obj, None)
            if obj in self.subscribed:
                self.subscribed.discard(obj)
                self.send(sim, self.world.server_for_object(obj), Unsubscribe(obj))
        if self.table is not None:
            for obj in list(self.table.bullies):
                if obj not in self.store.interest:
                    self.table.remove_object(obj)
            for obj in sorted(self.store.interest):
                self.table.add_object(obj)
            interest = frozenset(self.store.interest)
            if interest != self._advertised:
                self._advertised = interest
                for p in sorted(self.view.peers):
                    self.send(sim, p, Interest(interest))
        for obj in sorted(set(self.pending_fetch) - self.store.interest):
            del self.pending_fetch[obj]
        for obj in to_fetch:
            if obj not in self.pending_fetch:
                self.start_fetch(sim, obj)
        self.sync_subscriptions(sim)

    def wants_link(self, obj: int) -> bool:
        return self.table is None or self.table.is_bully(obj)

    def start_fetch(self, sim: Simulator, obj: int) -> None:
        if self.glo:
            holders = self.interested_peers(obj)
            if holders:

                def dist(p: int) -> float:
                    pos = self.view.position_of(p)
                    return float("inf") if pos is None else distance(self.pos, pos)

                target = min(holders, key=lambda p: (dist(p), p))
                self.pending_fetch[obj] = _Pending(target, sim.now)
                self.send(sim, target, FetchReq(obj))
                sim.set_timer(self.node_id, sim.now + self.world.cfg.bully_timeout, "fetch_timeout", (obj, target))
                return
        self.fetch_from_server(sim, obj)

    def fetch_from_server(self, sim: Simulator, obj: int) -> None:
        sub = self.wants_link(obj)
        if sub:
            self.subscribed.add(obj)
        self.pending_fetch[obj] = _Pending(SERVER, sim.now)
        self.send(sim, self.world.server_for_object(obj), FetchReq(obj, subscribe=sub))
        sim.set_timer(self.node_id, sim.now + self.world.cfg.bully_timeout, "fetch_timeout", (obj, SERVER))

    def on_fetch_req(self, sim: Simulator, src: int, msg: FetchReq) -> None:
        held = self.store.objects.get(msg.object_id)
        if held is None:
            self.send(sim, src, FetchReply(msg.object_id))
        else:
            self.send(sim, src, FetchReply(held.id, held.pos, held.payload))

    def on_fetch_reply(self, sim: Simulator, src: int, msg: FetchReply) -> None:
        obj = msg.object_id
        pending = self.pending_fetch.get(obj)
        if msg.state is None or msg.pos is None:
            if pending is not None and pending.target == src:
                self.fetch_from_server(sim, obj)
            return
        if obj not in self.store.interest:
            sim.metrics.wasted_bytes += msg.size()
            return
        self.pending_fetch.pop(obj, None)
        self.store.adopt(GeoObject(obj, msg.pos, msg.state))
        for d in self.early.pop(obj, []):
            self.store.apply_delta(obj, d)
        self.drain_intents(sim, obj)
        self.sync_subscriptions(sim)

    # -- writes ----------------------------------------------------------------

    def drain_intents(self, sim: Simulator, obj: int) -> None:
        queue = self.intents.get(obj)
        while queue and self.store.holds(obj):
            self.issue_write(sim, obj, queue.pop(0))
        if queue is not None and not queue:
            del self.intents[obj]

    def issue_write(self, sim: Simulator, obj: int, mutation: Mutation) -> None:
        delta = self.store.mutate(obj, mutation)
        self.seq += 1
        key = (self.node_id, self.seq)
        self.seen_writes.add(key)
        msg = DeltaMsg(obj, self.node_id, self.seq, sim.now, delta)
        self.issued.append(msg)
        self.outbox[(obj, self.seq)] = msg
        self.store.track(obj, self.seq)
        sim.metrics.writes_issued += 1
        route = route_update(obj, self.table, self.interested_peers(obj))
        covered = frozenset(route.peers)
        for p in route.peers:
            self.send(sim, p, replace(msg, relay=p == route.relay_via, covered=covered))
        if route.server_direct:
            sub = self.wants_link(obj)
            if sub:
                self.subscribed.add(obj)
            self.send(sim, self.world.server_for_object(obj), replace(msg, subscribe=sub))
        elif route.relay_via not in route.peers:
            assert route.relay_via is not None
            self.send(sim, route.relay_via, replace(msg, relay=True, covered=covered))
        sim.set_timer(self.node_id, sim.now + self.world.cfg.bully_timeout, "retry", (obj, self.seq))

    def retry(self, sim: Simulator, key: tuple[int, int]) -> None:
        msg = self.outbox.get(key)
        if msg is None:
            return
        sim.metrics.retries += 1
        sub = self.wants_link(msg.object_id)
        if sub:
            self.subscribed.add(msg.object_id)
        self.send(sim, self.world.server_for_object(msg.object_id), replace(msg, subscribe=sub))
        sim.set_timer(self.node_id, sim.now + self.world.cfg.bully_timeout, "retry", key)

    def on_delta(self, sim: Simulator, src: int, msg: DeltaMsg) -> None:
        obj = msg.object_id
        key = (msg.origin, msg.seq)
        if key not in self.seen_writes:
            self.seen_writes.add(key)
            interested = obj in self.store.interest
            if self.store.apply_delta(obj, msg.delta):
                sim.metrics.latencies.append(sim.now - msg.sent_at)
            elif interested:
                self.early.setdefault(obj, []).append(msg.delta)
                sim.metrics.latencies.append(sim.now - msg.sent_at)
            else:
                sim.metrics.wasted_bytes += msg.size()
            if interested and self.glo:
                skip = msg.covered | {src, msg.origin}
                targets = [p for p in self.interested_peers(obj) if p not in skip]
                fwd = replace(msg, relay=False, subscribe=False, covered=frozenset(targets))
                for p in targets:
                    self.send(sim, p, fwd)
        if msg.relay and key not in self.relayed:
            self.relayed.add(key)
            self.ack_route[key] = src
            via = None if self.table is None or self.table.is_bully(obj) else self.table.via.get(obj)
            if via is None or via == src:
                sub = self.wants_link(obj) and obj in self.store.interest
                if sub:
                    self.subscribed.add(obj)
                up = replace(msg, relay=False, subscribe=sub, covered=frozenset())
                self.send(sim, self.world.server_for_object(obj), up)
            else:
                self.send(sim, via, replace(msg, relay=True, subscribe=False, covered=frozenset()))

    def on_ack(self, sim: Simulator, src: int, msg: Ack) -> None:
        key = (msg.origin, msg.seq)
        if msg.origin == self.node_id:
            self.outbox.pop((msg.object_id, msg.seq), None)
            self.store.acked(msg.object_id, msg.seq)
            return
        back = self.ack_route.pop(key, None)
        if back is not None:
            self.send(sim, back, msg)

    # -- bully -------------------------------------------------------------------

    def sync_subscriptions(self, sim: Simulator) -> None:
        """Keep an object-server link exactly for held objects this node bullies."""
        if self.table is None:
            return
        for obj in sorted(self.store.objects):
            want = self.table.is_bully(obj)
            if want and obj not in self.subscribed:
                self.subscribed.add(obj)
                self.send(sim, self.world.server_for_object(obj), Subscribe(obj))
            elif not want and obj in self.subscribed:
                self.subscribed.discard(obj)
                self.send(sim, self.world.server_for_object(obj), Unsubscribe(obj))

    def on_claim(self, sim: Simulator, src: int, msg: ImTheBully) -> None:
        assert self.table is not None
        if src not in self.view.peers:
            return
        out = self.table.on_claim(msg, src, sim.now, self.interested_peers)
        deadline = self.table.timeouts.get(msg.object_id)
        if deadline is not None and deadline == sim.now + self.table.bully_timeout:
            sim.set_timer(self.node_id, deadline, "bully_timeout", msg.object_id)
        self.send_all(sim, out)
        self.sync_subscriptions(sim)

    # -- overlay -------------------------------------------------------------------

    def link_up(self, sim: Simulator, peer: int) -> None:
        if self.glo:
            self.send(sim, peer, Interest(frozenset(self.store.interest)))

    def link_down(self, sim: Simulator, peer: int) -> None:
        self.peer_interest.pop(peer, None)
        if self.table is not None:
            self.table.on_peer_disconnect(peer)
        for obj, pending in sorted(self.pending_fetch.items()):
            if pending.target == peer:
                self.fetch_from_server(sim, obj)
        self.sync_subscriptions(sim)

    def on_peer_list(self, sim: Simulator, src: int, msg: PeerList) -> None:
        if self.glo:
            self.view.on_server_response(msg.peers, sim.now)
        for entry in msg.directory:
            self.directory[entry.object_id] = entry
        self.refresh(sim)

    def on_message(self, sim: Simulator, src: int, msg: Message) -> None:
        if isinstance(msg, DeltaMsg):
            self.on_delta(sim, src, msg)
        elif isinstance(msg, Ack):
            self.on_ack(sim, src, msg)
        elif isinstance(msg, FetchReq):
            self.on_fetch_req(sim, src, msg)
        elif isinstance(msg, FetchReply):
            self.on_fetch_reply(sim, src, msg)
        elif isinstance(msg, ImTheBully):
            self.on_claim(sim, src, msg)
        elif isinstance(msg, PeerList):
            self.on_peer_list(sim, src, msg)
        elif isinstance(msg, Redirect):
            self.signalling = msg.server_id
            if self.view.server_up:
                self.send(sim, SERVER, JoinOrPos(self.node_id, self.pos))
        elif isinstance(msg, PositionMessage):
            self.send_all(sim, self.view.on_position_message(msg, self.pos, sim.now, src))
        elif isinstance(msg, Dial):
            was_peer = src in self.view.peers
            accepted, out = self.view.on_dial(src, msg.pos, self.pos, sim.now)
            self.send_all(sim, out)
            if accepted and not was_peer:
                self.link_up(sim, src)
        elif isinstance(msg, DialAck):
            was_peer = src in self.view.peers
            linked, out = self.view.on_dial_ack(src, msg.accept, msg.pos, sim.now)
            self.send_all(sim, out)
            if linked and not was_peer:
                self.link_up(sim, src)
        elif isinstance(msg, Hangup):
            if self.view.on_hangup(src):
                self.link_down(sim, src)
        elif isinstance(msg, Interest):
            if src not in self.view.peers:
                return
            old = self.peer_interest.get(src, frozenset())
            self.peer_interest[src] = msg.object_ids
            if self.table is not None and old - msg.object_ids:
                self.table.on_peer_lost_interest(src, old - msg.object_ids)
                self.sync_subscriptions(sim)

    def on_peer_crash(self, sim: Simulator, peer: int) -> None:
        if self.view.on_hangup(peer):
            self.link_down(sim, peer)


def build_servers(world: World, objects: Sequence[GeoObject]) -> tuple[CloudNode, list[EdgeNode]]:
    """Cloud plus one edge per occupied grid cell, all seeded with their objects."""
    cloud = CloudNode(world)
    edges: list[EdgeNode] = []
    for obj in objects:
        cloud.store.seed(obj)
    if world.grid is not None and world.mode.uses_overlay:
        for i, cell in enumerate(world.grid.cells):
            store = EdgeServer(region=world.grid.region(cell))
            edge = EdgeNode(world.edge_ids[i], world, store)
            for obj in objects:
                if store.region.contains(obj.pos):
                    store.seed(obj)
            edges.append(edge)
    return cloud, edges


def initial_objects(catalog: dict[int, DirectoryEntry]) -> list[GeoObject]:
    return [fresh_object(catalog[o]) for o in sorted(catalog)]
