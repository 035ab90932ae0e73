"""Location-scoped object stores for clients, edge servers and the cloud."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Union

from geoloc.bully import BullyTable
from geoloc.crdt import Crdt, CrdtError, OrMap, PnCounter, empty_like, kind_name, merge, own_counter
from geoloc.geo import GeoPosition, within
from geoloc.wire import DirectoryEntry


@dataclass(frozen=True)
class GeoObject:
    id: int
    pos: GeoPosition
    payload: Crdt

    @property
    def kind(self) -> str:
        return kind_name(self.payload)

    def merged(self, other: Crdt) -> GeoObject:
        return GeoObject(self.id, self.pos, merge(self.payload, other))


# -- mutations ----------------------------------------------------------------


@dataclass(frozen=True)
class Increment:
    n: int = 1


@dataclass(frozen=True)
class Put:
    key: str
    value: bytes
    timestamp: int


Mutation = Union[Increment, Put]


def apply_mutation(state: Crdt, mutation: Mutation, replica: int, floor: int = 0) -> tuple[Crdt, Crdt]:
    if isinstance(mutation, Increment):
        if not isinstance(state, PnCounter):
            raise CrdtError("increment needs a counter")
        return state.increment(replica, mutation.n, floor)
    if isinstance(mutation, Put):
        if not isinstance(state, OrMap):
            raise CrdtError("put needs a map")
        return state.put(mutation.key, mutation.value, replica, mutation.timestamp, floor)
    raise TypeError(f"unknown mutation {mutation!r}")


# -- regions ------------------------------------------------------------------


@dataclass(frozen=True)
class Region:
    """Half-open lat/lon rectangle ``[lat_min, lat_max) x [lon_min, lon_max)``."""

    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def contains(self, pos: GeoPosition) -> bool:
        return self.lat_min <= pos.lat < self.lat_max and self.lon_min <= pos.lon < self.lon_max


@dataclass(frozen=True)
class EdgeGrid:
    """Static grid of edge regions aligned on ``cell_deg`` multiples."""

    cell_deg: float
    cells: tuple[tuple[int, int], ...] = ()

    def cell_of(self, pos: GeoPosition) -> tuple[int, int]:
        return (math.floor(pos.lat / self.cell_deg), math.floor(pos.lon / self.cell_deg))

    def region(self, cell: tuple[int, int]) -> Region:
        i, j = cell
        d = self.cell_deg
        return Region(i * d, (i + 1) * d, j * d, (j + 1) * d)

    def index_of(self, pos: GeoPosition) -> Optional[int]:
        """Index of the edge serving ``pos``, or None outside every edge."""
        cell = self.cell_of(pos)
        try:
            return self.cells.index(cell)
        except ValueError:
            return None

    @classmethod
    def occupied(cls, cell_deg: float, positions: Iterable[GeoPosition]) -> EdgeGrid:
        probe = cls(cell_deg)
        return cls(cell_deg, tuple(sorted({probe.cell_of(p) for p in positions})))


# -- client side ----------------------------------------------------------------


@dataclass
class ClientStore:
    owner: int
    interest_radius: float
    objects: dict[int, GeoObject] = field(default_factory=dict)
    interest: set[int] = field(default_factory=set)
    # own high-water mark per object; survives eviction so a stale refetch
    # cannot make this replica reuse its own counter values or dots
    own_clock: dict[int, int] = field(default_factory=dict)
    unacked: dict[int, set[int]] = field(default_factory=dict)

    def holds(self, obj: int) -> bool:
        return obj in self.objects

    def refresh_interest(
        self,
        my_pos: GeoPosition,
        catalog: Mapping[int, DirectoryEntry],
        pinned: Iterable[int] = (),
        everything: bool = False,
    ) -> tuple[list[int], list[int]]:
        """Recompute the interest set; return ``(to_fetch, evicted)``.

        Objects with un-acked local deltas stay until acked, whatever their
        distance.
        """
        if everything:
            interest = set(catalog)
        else:
            interest = {o for o, e in catalog.items() if within(e.pos, my_pos, self.interest_radius)}
        interest |= set(pinned)
        interest |= {o for o, seqs in self.unacked.items() if seqs}
        self.interest = interest
        evicted = sorted(o for o in self.objects if o not in interest)
        for o in evicted:
            del self.objects[o]
        to_fetch = sorted(o for o in interest if o not in self.objects)
        return to_fetch, evicted

    def adopt(self, obj: GeoObject) -> GeoObject:
        """Take in a full state from a peer or server (merging with any local copy)."""
        mine = self.objects.get(obj.id)
        merged = obj if mine is None else mine.merged(obj.payload)
        self.objects[obj.id] = merged
        self._note_own(obj.id, merged.payload)
        return merged

    def apply_delta(self, obj: int, delta: Crdt) -> bool:
        """Merge a received delta; False when the object is not held."""
        mine = self.objects.get(obj)
        if mine is None:
            return False
        self.objects[obj] = mine.merged(delta)
        return True

    def _note_own(self, obj: int, payload: Crdt) -> None:
        self.own_clock[obj] = max(self.own_clock.get(obj, 0), own_counter(payload, self.owner))

    def mutate(self, obj: int, mutation: Mutation) -> Crdt:
        """Apply a local mutation; the object must already be held."""
        mine = self.objects.get(obj)
        if mine is None:
            raise KeyError(f"object {obj} not in store (fetch before mutate)")
        state, delta = apply_mutation(mine.payload, mutation, self.owner, self.own_clock.get(obj, 0))
        self.objects[obj] = GeoObject(mine.id, mine.pos, state)
        self._note_own(obj, state)
        return delta

    def track(self, obj: int, seq: int) -> None:
        self.unacked.setdefault(obj, set()).add(seq)

    def acked(self, obj: int, seq: int) -> None:
        seqs = self.unacked.get(obj)
        if seqs is not None:
            seqs.discard(seq)
            if not seqs:
                del self.unacked[obj]


@dataclass(frozen=True)
class UpdateRoute:
    """Where a locally issued delta goes."""

    peers: tuple[int, ...]
    server_direct: bool
    relay_via: Optional[int] = None


def route_update(obj: int, table: Optional[BullyTable], interested_peers: Iterable[int]) -> UpdateRoute:
    """Routing rule for a local write.

    Without a bully table (client-server) the delta goes straight to the
    server. Otherwise it fans out to interested peers, and reaches the server
    directly when this node is the object's bully or through ``via``, the
    neighbour on the path to the bully.
    """
    if table is None:
        return UpdateRoute((), True)
    peers = tuple(sorted(interested_peers))
    if table.is_bully(obj) or obj not in table.bullies:
        return UpdateRoute(peers, True)
    via = table.via.get(obj)
    if via is None:
        return UpdateRoute(peers, True)
    return UpdateRoute(peers, False, via)


def local_mutate(
    store: ClientStore, obj: int, mutation: Mutation, table: Optional[BullyTable], interested_peers: Iterable[int]
) -> tuple[Crdt, UpdateRoute]:
    return store.mutate(obj, mutation), route_update(obj, table, interested_peers)


def peer_sync(a: ClientStore, b: ClientStore, obj: int) -> tuple[ClientStore, ClientStore]:
    """Reconcile both copies of ``obj``: afterwards both hold the join.

    A side that is not interested keeps nothing; a side that is interested
    but lacks the object adopts the other's state.
    """
    sa, sb = a.objects.get(obj), b.objects.get(obj)
    if sa is None and sb is None:
        return a, b
    joined = sa if sb is None else sb if sa is None else sa.merged(sb.payload)
    for side in (a, b):
        if obj in side.interest or obj in side.objects:
            side.adopt(joined)
    return a, b


# -- servers ------------------------------------------------------------------


@dataclass
class ObjectServer:
    objects: dict[int, GeoObject] = field(default_factory=dict)
    subscribers: dict[int, set[int]] = field(default_factory=dict)

    def seed(self, obj: GeoObject) -> None:
        self.objects[obj.id] = obj

    def state(self, obj: int) -> Optional[GeoObject]:
        return self.objects.get(obj)

    def on_delta(self, obj: int, delta: Crdt) -> bool:
        """Merge; False when the object is unknown here."""
        mine = self.objects.get(obj)
        if mine is None:
            return False
        self.objects[obj] = mine.merged(delta)
        return True

    def subscribe(self, obj: int, node: int) -> None:
        self.subscribers.setdefault(obj, set()).add(node)

    def unsubscribe(self, obj: int, node: int) -> None:
        subs = self.subscribers.get(obj)
        if subs:
            subs.discard(node)

    def subscribers_of(self, obj: int, exclude: int | None = None) -> list[int]:
        return sorted(n for n in self.subscribers.get(obj, ()) if n != exclude)


@dataclass
class EdgeServer(ObjectServer):
    region: Region = field(default_factory=lambda: Region(0, 0, 0, 0))

    def seed(self, obj: GeoObject) -> None:
        if not self.region.contains(obj.pos):
            raise ValueError(f"object {obj.id} lies outside this edge's region")
        super().seed(obj)


@dataclass
class CloudServer(ObjectServer):
    pass


def fresh_object(entry: DirectoryEntry) -> GeoObject:
    return GeoObject(entry.object_id, entry.pos, empty_like(entry.kind))
