"""Proximity overlay: the signalling registry and the client-side peer view.

Both are plain state machines. Methods mutate the receiver and return the
messages to send as ``(destination, message)`` pairs; ``SERVER`` stands for
whichever signalling server the client is currently attached to.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from geoloc.geo import GeoPosition, distance
from geoloc.wire import Dial, DialAck, Hangup, JoinOrPos, Message, PositionMessage

SERVER = -1

Outbound = list[tuple[int, Message]]

STALE_PERIODS = 5


@dataclass
class SignallingState:
    max_distance: float
    nodes_pos: dict[int, GeoPosition] = field(default_factory=dict)
    history: list[tuple[int, GeoPosition, int]] = field(default_factory=list)

    def on_node_pos(self, node_id: int, pos: GeoPosition, now: int = 0) -> list[int]:
        """Register a report; return the other nodes within ``max_distance``."""
        self.nodes_pos[node_id] = pos
        self.history.append((node_id, pos, now))
        return sorted(
            other
            for other, other_pos in self.nodes_pos.items()
            if other != node_id and distance(other_pos, pos) <= self.max_distance
        )

    def remove(self, node_id: int) -> None:
        self.nodes_pos.pop(node_id, None)


@dataclass
class PeerView:
    node_id: int
    max_distance: float
    max_peers: int
    announcement_time: int
    last_sent_pos: GeoPosition
    server_up: bool = True
    settle: bool = True
    peers: set[int] = field(default_factory=set)
    nodes_of_interest: set[int] = field(default_factory=set)
    # last heard position per node and when it was heard
    known: dict[int, tuple[GeoPosition, int]] = field(default_factory=dict)
    pending_dials: set[int] = field(default_factory=set)
    cooldown: dict[int, int] = field(default_factory=dict)
    seen_floods: set[tuple[int, int]] = field(default_factory=set)
    flood_seq: int = 0

    def __post_init__(self) -> None:
        self._peer_pos = self.last_sent_pos
        self._prev_tick_pos = self.last_sent_pos

    def _learn(self, node: int, pos: GeoPosition, now: int) -> None:
        if node != self.node_id:
            self.known[node] = (pos, now)

    def position_of(self, node: int) -> GeoPosition | None:
        entry = self.known.get(node)
        return entry[0] if entry else None

    def join(self, pos: GeoPosition) -> Outbound:
        self.last_sent_pos = self._peer_pos = self._prev_tick_pos = pos
        if not self.server_up:
            return []
        return [(SERVER, JoinOrPos(self.node_id, pos))]

    def on_server_response(self, peers: Iterable[tuple[int, GeoPosition]], now: int) -> None:
        for node, pos in peers:
            if node == self.node_id:
                continue
            self._learn(node, pos, now)
            self.nodes_of_interest.add(node)

    def _to_peers(self, msg: PositionMessage, exclude: Iterable[int] = ()) -> Outbound:
        skip = set(exclude)
        return [(p, msg) for p in sorted(self.peers) if p not in skip]

    def update_position(self, current: GeoPosition, now: int) -> Outbound:
        """Announcement tick: report when moved beyond ``max_distance``.

        A node that has stopped short of the threshold sends its exact
        position to its peers once (no server report) so that link lengths
        can be judged on fresh data.
        """
        out: Outbound = []
        stationary = current == self._prev_tick_pos
        self._prev_tick_pos = current
        if distance(self.last_sent_pos, current) > self.max_distance:
            if self.server_up:
                out.append((SERVER, JoinOrPos(self.node_id, current)))
                msg = PositionMessage(self.node_id, current, propagate=False)
                out += self._to_peers(msg)
            else:
                self.flood_seq += 1
                self.seen_floods.add((self.node_id, self.flood_seq))
                targets = frozenset(self.peers)
                msg = PositionMessage(
                    self.node_id, current, True, self.flood_seq, frozenset({self.node_id}), targets
                )
                out += self._to_peers(msg)
            self.last_sent_pos = self._peer_pos = current
        elif self.settle and stationary and current != self._peer_pos and self.peers:
            out += self._to_peers(PositionMessage(self.node_id, current, propagate=False))
            self._peer_pos = current
        return out

    def on_position_message(self, m: PositionMessage, my_pos: GeoPosition, now: int, src: int | None = None) -> Outbound:
        if m.sender == self.node_id:
            return []
        self._learn(m.sender, m.pos, now)
        if distance(my_pos, m.pos) <= self.max_distance:
            self.nodes_of_interest.add(m.sender)
        if not m.propagate or self.node_id in m.visited:
            return []
        key = (m.sender, m.seq)
        if key in self.seen_floods:
            return []
        self.seen_floods.add(key)
        visited = m.visited | {self.node_id}
        skip = visited | m.covered | ({src} if src is not None else set())
        targets = frozenset(p for p in self.peers if p not in skip)
        fwd = PositionMessage(m.sender, m.pos, True, m.seq, visited, targets)
        return [(p, fwd) for p in sorted(targets)]

    def review_peers(self, my_pos: GeoPosition, now: int) -> tuple[Outbound, list[int]]:
        """One maintenance pass. Returns outbound messages and dropped peers."""
        out: Outbound = []
        dropped: list[int] = []
        horizon = now - STALE_PERIODS * self.announcement_time
        for node in sorted(self.nodes_of_interest):
            if node not in self.peers and self.known.get(node, (None, horizon - 1))[1] < horizon:
                self.nodes_of_interest.discard(node)
        self.cooldown = {n: t for n, t in self.cooldown.items() if t > now}

        def dist(node: int) -> float:
            pos = self.position_of(node)
            return float("inf") if pos is None else distance(my_pos, pos)

        for p in sorted(self.peers):
            if dist(p) > self.max_distance:
                self.peers.discard(p)
                dropped.append(p)
                out.append((p, Hangup()))

        candidates = sorted(
            (dist(n), n)
            for n in self.nodes_of_interest
            if n not in self.peers
            and n not in self.pending_dials
            and n not in self.cooldown
            and n != self.node_id
            and dist(n) <= self.max_distance
        )
        for _, node in candidates:
            if len(self.peers) + len(self.pending_dials) >= self.max_peers:
                break
            self.pending_dials.add(node)
            out.append((node, Dial(self.node_id, my_pos)))

        while len(self.peers) > self.max_peers:
            far = max(self.peers, key=lambda p: (dist(p), p))
            self.peers.discard(far)
            dropped.append(far)
            out.append((far, Hangup()))
        return out, dropped

    def on_dial(self, src: int, pos: GeoPosition, my_pos: GeoPosition, now: int) -> tuple[bool, Outbound]:
        self._learn(src, pos, now)
        accept = src in self.peers or len(self.peers) < self.max_peers
        if accept:
            self.peers.add(src)
            self.pending_dials.discard(src)
        return accept, [(src, DialAck(accept, my_pos))]

    def on_dial_ack(self, src: int, accept: bool, pos: GeoPosition, now: int) -> tuple[bool, Outbound]:
        """Returns whether a link to ``src`` now exists."""
        self.pending_dials.discard(src)
        self._learn(src, pos, now)
        if not accept:
            self.cooldown[src] = now + self.announcement_time
            return False, []
        if src in self.peers:
            return True, []
        if len(self.peers) >= self.max_peers:
            return False, [(src, Hangup())]
        self.peers.add(src)
        return True, []

    def on_hangup(self, src: int) -> bool:
        self.pending_dials.discard(src)
        if src in self.peers:
            self.peers.discard(src)
            return True
        return False
