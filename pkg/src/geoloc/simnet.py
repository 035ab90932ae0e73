"""Deterministic discrete-event network simulator.

Events run in ``(deliver_at, seq)`` order where ``seq`` is a global counter
assigned at enqueue time, so simultaneous events keep their enqueue order and
a run is a pure function of its inputs. Links are reliable and FIFO per
``(src, dst)`` unless ``loss_rate`` is raised.
"""

from __future__ import annotations

import heapq
import random
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Optional, Protocol

from geoloc.geo import ProtocolConfig
from geoloc.wire import CONTROL, Message, PositionMessage


class NodeKind(str, Enum):
    CLIENT = "client"
    EDGE = "edge"
    CLOUD = "cloud"


class Channel(str, Enum):
    PEER = "peer"
    CLIENT_EDGE = "client-edge"
    CLIENT_CLOUD = "client-cloud"
    EDGE_CLOUD = "edge-cloud"


CHANNELS = tuple(Channel)


def channel_between(a: NodeKind, b: NodeKind) -> Channel:
    pair = {a, b}
    if pair == {NodeKind.CLIENT}:
        return Channel.PEER
    if pair == {NodeKind.CLIENT, NodeKind.EDGE}:
        return Channel.CLIENT_EDGE
    if pair == {NodeKind.CLIENT, NodeKind.CLOUD}:
        return Channel.CLIENT_CLOUD
    if pair == {NodeKind.EDGE, NodeKind.CLOUD}:
        return Channel.EDGE_CLOUD
    raise ValueError(f"no channel between {a.value} and {b.value}")


class RunawayError(RuntimeError):
    """The event backlog exceeded its cap (likely a message storm)."""


@dataclass
class LatencyModel:
    peer: int
    client_edge: int
    client_cloud: int
    edge_cloud: int
    jitter: float = 0.0

    @classmethod
    def from_config(cls, cfg: ProtocolConfig, jitter: float = 0.0) -> LatencyModel:
        low, high = cfg.latency_low, cfg.latency_high
        return cls(peer=low, client_edge=low, client_cloud=high, edge_cloud=high, jitter=jitter)

    def base(self, channel: Channel) -> int:
        return {
            Channel.PEER: self.peer,
            Channel.CLIENT_EDGE: self.client_edge,
            Channel.CLIENT_CLOUD: self.client_cloud,
            Channel.EDGE_CLOUD: self.edge_cloud,
        }[channel]

    def sample(self, channel: Channel, rng: random.Random) -> int:
        base = self.base(channel)
        if self.jitter <= 0:
            return base
        return max(0, round(base * (1 + rng.uniform(-self.jitter, self.jitter))))


@dataclass
class ChannelCounters:
    messages: int = 0
    bytes: int = 0
    delivered: int = 0
    dropped: int = 0


@dataclass
class Metrics:
    channels: dict[Channel, ChannelCounters] = field(default_factory=lambda: {c: ChannelCounters() for c in CHANNELS})
    by_type: dict[str, list[int]] = field(default_factory=lambda: defaultdict(lambda: [0, 0]))
    control_messages: int = 0
    control_bytes: int = 0
    data_messages: int = 0
    data_bytes: int = 0
    heartbeat_messages: int = 0
    latencies: list[int] = field(default_factory=list)
    wasted_bytes: int = 0
    writes_issued: int = 0
    retries: int = 0
    degree_violations: int = 0
    events: int = 0
    # per propagated position: transmissions and the undirected links they
    # could use (links present at flood start plus links actually used)
    flood_tx: dict[tuple[int, int], int] = field(default_factory=dict)
    flood_links: dict[tuple[int, int], set[frozenset[int]]] = field(default_factory=dict)
    run_meta: dict[str, Any] = field(default_factory=dict)

    @property
    def server_messages(self) -> int:
        return self.channels[Channel.CLIENT_EDGE].messages + self.channels[Channel.CLIENT_CLOUD].messages

    @property
    def server_bytes(self) -> int:
        return self.channels[Channel.CLIENT_EDGE].bytes + self.channels[Channel.CLIENT_CLOUD].bytes

    @property
    def peer_messages(self) -> int:
        return self.channels[Channel.PEER].messages

    @property
    def peer_bytes(self) -> int:
        return self.channels[Channel.PEER].bytes

    @property
    def total_messages(self) -> int:
        return sum(c.messages for c in self.channels.values())

    @property
    def total_bytes(self) -> int:
        return sum(c.bytes for c in self.channels.values())

    def floods(self) -> list[tuple[int, int]]:
        """``(transmissions, link count)`` per propagated position, in key order."""
        return [(self.flood_tx[k], len(self.flood_links.get(k, ()))) for k in sorted(self.flood_tx)]

    def rows(self) -> list[tuple[str, int]]:
        """Every counter as ``(name, value)`` in a stable order."""
        out: list[tuple[str, int]] = []
        for ch in CHANNELS:
            c = self.channels[ch]
            out += [
                (f"{ch.value}.messages", c.messages),
                (f"{ch.value}.bytes", c.bytes),
                (f"{ch.value}.delivered", c.delivered),
                (f"{ch.value}.dropped", c.dropped),
            ]
        out += [
            ("server_messages", self.server_messages),
            ("server_bytes", self.server_bytes),
            ("peer_messages", self.peer_messages),
            ("peer_bytes", self.peer_bytes),
            ("total_messages", self.total_messages),
            ("total_bytes", self.total_bytes),
            ("control_messages", self.control_messages),
            ("control_bytes", self.control_bytes),
            ("data_messages", self.data_messages),
            ("data_bytes", self.data_bytes),
            ("heartbeat_messages", self.heartbeat_messages),
            ("wasted_bytes", self.wasted_bytes),
            ("writes_issued", self.writes_issued),
            ("retries", self.retries),
            ("latency_samples", len(self.latencies)),
            ("floods", len(self.flood_tx)),
            ("degree_violations", self.degree_violations),
        ]
        for name in sorted(self.by_type):
            count, size = self.by_type[name]
            out += [(f"type.{name}.messages", count), (f"type.{name}.bytes", size)]
        return out


class SimNode(Protocol):
    node_id: int
    kind: NodeKind

    def on_message(self, sim: Simulator, src: int, msg: Message) -> None: ...

    def on_timer(self, sim: Simulator, tag: str, data: Any) -> None: ...


@dataclass(order=True)
class SimEvent:
    deliver_at: int
    seq: int
    dst: int = field(compare=False)
    src: int = field(compare=False, default=-1)
    payload: Any = field(compare=False, default=None)
    size: int = field(compare=False, default=0)
    channel: Optional[Channel] = field(compare=False, default=None)
    kind: str = field(compare=False, default="msg")  # "msg" | "timer" | "call"


class Simulator:
    def __init__(
        self,
        latency: LatencyModel,
        seed: int = 0,
        loss_rate: float = 0.0,
        max_pending: int = 2_000_000,
    ) -> None:
        self.latency = latency
        self.rng = random.Random(seed)
        self.loss_rate = loss_rate
        self.max_pending = max_pending
        self.now = 0
        self.metrics = Metrics()
        self.nodes: dict[int, SimNode] = {}
        self.alive: set[int] = set()
        self.topology_probe: Optional[Callable[[], set[frozenset[int]]]] = None
        self._queue: list[SimEvent] = []
        self._seq = 0
        self._link_clock: dict[tuple[int, int], int] = {}
        self._timers_on = True

    # -- setup -------------------------------------------------------------

    def add_node(self, node: SimNode) -> None:
        if node.node_id in self.nodes:
            raise ValueError(f"duplicate node id {node.node_id}")
        self.nodes[node.node_id] = node
        self.alive.add(node.node_id)

    def kind_of(self, node_id: int) -> NodeKind:
        return self.nodes[node_id].kind

    def crash(self, node_id: int) -> None:
        self.alive.discard(node_id)

    @property
    def pending(self) -> int:
        return len(self._queue)

    # -- scheduling ----------------------------------------------------------

    def _push(self, ev: SimEvent) -> SimEvent:
        heapq.heappush(self._queue, ev)
        if len(self._queue) > self.max_pending:
            raise RunawayError(
                f"event backlog {len(self._queue)} exceeds cap {self.max_pending} at t={self.now}ms"
            )
        return ev

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def schedule(self, now: int, src: int, dst: int, msg: Message, size: int) -> Optional[SimEvent]:
        """Enqueue a message sent at ``now``; counters move at send time."""
        channel = channel_between(self.kind_of(src), self.kind_of(dst))
        counters = self.metrics.channels[channel]
        counters.messages += 1
        counters.bytes += size
        m = self.metrics
        entry = m.by_type[msg.type_name]
        entry[0] += 1
        entry[1] += size
        if msg.category == CONTROL:
            m.control_messages += 1
            m.control_bytes += size
        else:
            m.data_messages += 1
            m.data_bytes += size
        if msg.heartbeat:
            m.heartbeat_messages += 1
        if isinstance(msg, PositionMessage) and msg.propagate:
            self._note_flood(src, dst, msg)
        if dst not in self.alive or (self.loss_rate > 0 and self.rng.random() < self.loss_rate):
            counters.dropped += 1
            return None
        at = now + self.latency.sample(channel, self.rng)
        link = (src, dst)
        at = max(at, self._link_clock.get(link, 0))
        self._link_clock[link] = at
        return self._push(SimEvent(at, self._next_seq(), dst, src, msg, size, channel))

    def send(self, src: int, dst: int, msg: Message) -> Optional[SimEvent]:
        return self.schedule(self.now, src, dst, msg, msg.size())

    def _note_flood(self, src: int, dst: int, msg: PositionMessage) -> None:
        key = (msg.sender, msg.seq)
        m = self.metrics
        if key not in m.flood_tx:
            m.flood_tx[key] = 0
            m.flood_links[key] = set(self.topology_probe()) if self.topology_probe else set()
        m.flood_tx[key] += 1
        m.flood_links[key].add(frozenset((src, dst)))

    def set_timer(self, node_id: int, at: int, tag: str, data: Any = None) -> SimEvent:
        if at < self.now:
            raise ValueError("timer in the past")
        return self._push(SimEvent(at, self._next_seq(), node_id, payload=(tag, data), kind="timer"))

    def call_at(self, at: int, fn: Callable[[Simulator], None]) -> SimEvent:
        """Run a scenario hook (failure injection and the like) at ``at``."""
        return self._push(SimEvent(at, self._next_seq(), -1, payload=fn, kind="call"))

    # -- execution -----------------------------------------------------------

    def _dispatch(self, ev: SimEvent) -> None:
        self.metrics.events += 1
        if ev.kind == "call":
            ev.payload(self)
            return
        if ev.kind == "timer":
            if ev.dst in self.alive:
                tag, data = ev.payload
                self.nodes[ev.dst].on_timer(self, tag, data)
            return
        counters = self.metrics.channels[ev.channel]  # type: ignore[index]
        if ev.dst not in self.alive:
            counters.dropped += 1
            return
        counters.delivered += 1
        self.nodes[ev.dst].on_message(self, ev.src, ev.payload)

    def run(self, until: int) -> Metrics:
        """Process every event due at or before ``until``."""
        while self._queue and self._queue[0].deliver_at <= until:
            ev = heapq.heappop(self._queue)
            if ev.deliver_at < self.now:
                raise AssertionError("clock went backwards")
            self.now = ev.deliver_at
            if ev.kind != "msg" and not self._timers_on:
                continue
            self._dispatch(ev)
        self.now = max(self.now, until)
        return self.metrics

    def drain(self) -> Metrics:
        """Stop all timers and hooks, then deliver whatever is still in flight."""
        self._timers_on = False
        while self._queue:
            ev = heapq.heappop(self._queue)
            self.now = max(self.now, ev.deliver_at)
            if ev.kind == "msg":
                self._dispatch(ev)
        return self.metrics

    def in_flight(self) -> int:
        return sum(1 for ev in self._queue if ev.kind == "msg")
