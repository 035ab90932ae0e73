"""Per-object bully election.

Among nearby nodes interested in the same object, the lowest id becomes that
object's bully and keeps the object-server link. Claims are re-broadcast
every ``broadcast_time`` and relayed hop by hop through interested peers, so
every node in a connected interest group converges on the group minimum and
knows through which neighbour (``via``) to reach it.
"""

from __future__ import annotations

from typing import Callable, Iterable

from geoloc.wire import ImTheBully

Outbound = list[tuple[int, ImTheBully]]
PeersFor = Callable[[int], Iterable[int]]


class BullyTable:
    def __init__(self, self_id: int, objects: Iterable[int] = (), *, bully_timeout: int = 6000, broadcast_time: int = 2000):
        self.self_id = self_id
        self.bully_timeout = bully_timeout
        self.broadcast_time = broadcast_time
        self.bullies: dict[int, int] = {}
        self.timeouts: dict[int, int] = {}
        self.via: dict[int, int] = {}
        self._relayed: dict[tuple[int, int], int] = {}
        for obj in objects:
            self.add_object(obj)

    def __repr__(self) -> str:
        return f"BullyTable(self={self.self_id}, bullies={self.bullies}, timeouts={self.timeouts})"

    def add_object(self, obj: int) -> None:
        if obj not in self.bullies:
            self.bullies[obj] = self.self_id

    def remove_object(self, obj: int) -> None:
        self.bullies.pop(obj, None)
        self.timeouts.pop(obj, None)
        self.via.pop(obj, None)

    def is_bully(self, obj: int) -> bool:
        return self.bullies.get(obj) == self.self_id

    def _promote(self, obj: int) -> None:
        self.bullies[obj] = self.self_id
        self.timeouts.pop(obj, None)
        self.via.pop(obj, None)

    def broadcast(self, interested_peers: PeersFor) -> Outbound:
        out: Outbound = []
        for obj in sorted(self.bullies):
            if self.bullies[obj] == self.self_id:
                claim = ImTheBully(self.self_id, obj)
                out += [(p, claim) for p in sorted(interested_peers(obj))]
        return out

    def on_claim(self, claim: ImTheBully, src: int, now: int, interested_peers: PeersFor) -> Outbound:
        """Handle a claim delivered by neighbour ``src``."""
        obj, sender = claim.object_id, claim.sender_id
        current = self.bullies.get(obj)
        if current is None or sender == self.self_id:
            return []
        if sender <= current:
            changed = sender != current
            self.bullies[obj] = sender
            self.timeouts[obj] = now + self.bully_timeout
            last = self._relayed.get((obj, sender))
            if changed or last is None or now - last >= self.broadcast_time // 2:
                self._relayed[(obj, sender)] = now
                self.via[obj] = src
                return [(p, claim) for p in sorted(interested_peers(obj)) if p != src]
            return []
        if current == self.self_id and sender > self.self_id:
            return [(src, ImTheBully(self.self_id, obj))]
        return []

    def expired(self, obj: int, now: int) -> bool:
        deadline = self.timeouts.get(obj)
        return deadline is not None and now >= deadline

    def on_timeout(self, obj: int) -> None:
        if obj in self.bullies:
            self._promote(obj)

    def on_peer_disconnect(self, peer: int) -> list[int]:
        """Self-promote for every object that was reached through ``peer``."""
        return self.on_peer_lost_interest(peer, list(self.bullies))

    def on_peer_lost_interest(self, peer: int, objects: Iterable[int]) -> list[int]:
        promoted = []
        for obj in sorted(objects):
            if obj in self.bullies and (self.bullies[obj] == peer or self.via.get(obj) == peer):
                if self.bullies[obj] != self.self_id:
                    self._promote(obj)
                    promoted.append(obj)
        return promoted

    def server_link_required(self) -> bool:
        return any(b == self.self_id for b in self.bullies.values())


def bully_init(objects: Iterable[int], self_id: int, **kw: int) -> BullyTable:
    return BullyTable(self_id, objects, **kw)
