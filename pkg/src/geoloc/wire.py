"""Simulated wire messages and their canonical sizes.

Every message costs ``HEADER_SIZE`` bytes (u8 type, u64 source, u32 length)
plus the body listed next to each class. Positions are two f64 (16 bytes),
node and object ids are u64, booleans one byte, sets are a u32 count followed
by their u64 members. CRDT payloads use :func:`geoloc.crdt.serialized_size`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar, Optional

from geoloc.crdt import Crdt, serialized_size
from geoloc.geo import GeoPosition

HEADER_SIZE = 13
POS_SIZE = 16
ID_SIZE = 8
SET_HEADER = 4

CONTROL = "control"
DATA = "data"


def _set_size(n: int) -> int:
    return SET_HEADER + ID_SIZE * n


@dataclass(frozen=True)
class DirectoryEntry:
    object_id: int
    pos: GeoPosition
    kind: str  # "counter" | "map"

    SIZE: ClassVar[int] = ID_SIZE + POS_SIZE + 1


@dataclass(frozen=True)
class Message:
    category: ClassVar[str] = CONTROL
    heartbeat: ClassVar[bool] = False

    def body_size(self) -> int:
        return 0

    def size(self) -> int:
        return HEADER_SIZE + self.body_size()

    @property
    def type_name(self) -> str:
        return type(self).__name__


# -- overlay ------------------------------------------------------------------


@dataclass(frozen=True)
class JoinOrPos(Message):
    """Position report to a signalling server: id + position."""

    node_id: int
    pos: GeoPosition

    def body_size(self) -> int:
        return ID_SIZE + POS_SIZE


@dataclass(frozen=True)
class PeerList(Message):
    """Server reply: nearby nodes (id, position) and the object directory."""

    peers: tuple[tuple[int, GeoPosition], ...] = ()
    directory: tuple[DirectoryEntry, ...] = ()

    def body_size(self) -> int:
        return SET_HEADER + len(self.peers) * (ID_SIZE + POS_SIZE) + SET_HEADER + len(self.directory) * DirectoryEntry.SIZE


@dataclass(frozen=True)
class Redirect(Message):
    server_id: int

    def body_size(self) -> int:
        return ID_SIZE


@dataclass(frozen=True)
class PositionMessage(Message):
    """Position gossip. ``covered`` lists nodes the forwarder is itself
    sending this copy to, so receivers skip them; ``seq`` identifies the
    announcement for forward-once suppression."""

    sender: int
    pos: GeoPosition
    propagate: bool
    seq: int = 0
    visited: frozenset[int] = frozenset()
    covered: frozenset[int] = frozenset()

    def body_size(self) -> int:
        return ID_SIZE + POS_SIZE + 1 + 4 + _set_size(len(self.visited)) + _set_size(len(self.covered))


@dataclass(frozen=True)
class Dial(Message):
    node_id: int
    pos: GeoPosition

    def body_size(self) -> int:
        return ID_SIZE + POS_SIZE


@dataclass(frozen=True)
class DialAck(Message):
    accept: bool
    pos: GeoPosition

    def body_size(self) -> int:
        return 1 + POS_SIZE


@dataclass(frozen=True)
class Hangup(Message):
    pass


@dataclass(frozen=True)
class Interest(Message):
    """Full interest set of the sender, exchanged between peers."""

    object_ids: frozenset[int]

    def body_size(self) -> int:
        return _set_size(len(self.object_ids))


# -- bully ----------------------------------------------------------------------


@dataclass(frozen=True)
class ImTheBully(Message):
    heartbeat: ClassVar[bool] = True

    sender_id: int
    object_id: int

    def body_size(self) -> int:
        return 2 * ID_SIZE


# -- replication ----------------------------------------------------------------


@dataclass(frozen=True)
class Subscribe(Message):
    object_id: int

    def body_size(self) -> int:
        return ID_SIZE


@dataclass(frozen=True)
class Unsubscribe(Message):
    object_id: int

    def body_size(self) -> int:
        return ID_SIZE


@dataclass(frozen=True)
class FetchReq(Message):
    category: ClassVar[str] = DATA

    object_id: int
    subscribe: bool = False

    def body_size(self) -> int:
        return ID_SIZE + 1


@dataclass(frozen=True)
class FetchReply(Message):
    """Full object state, or ``state=None`` when the responder lacks it."""

    category: ClassVar[str] = DATA

    object_id: int
    pos: Optional[GeoPosition] = None
    state: Optional[Crdt] = None

    def body_size(self) -> int:
        if self.state is None:
            return ID_SIZE + 1
        return ID_SIZE + 1 + POS_SIZE + serialized_size(self.state)


@dataclass(frozen=True)
class DeltaMsg(Message):
    """One write's delta. ``(origin, seq)`` names the write; ``sent_at`` is
    its issue time; ``relay`` asks the receiver to route it toward the
    object server."""

    category: ClassVar[str] = DATA

    object_id: int
    origin: int
    seq: int
    sent_at: int
    delta: Crdt
    relay: bool = False
    subscribe: bool = False
    covered: frozenset[int] = field(default=frozenset())

    def body_size(self) -> int:
        return 4 * ID_SIZE + 2 + _set_size(len(self.covered)) + serialized_size(self.delta)


@dataclass(frozen=True)
class Ack(Message):
    category: ClassVar[str] = DATA

    object_id: int
    origin: int
    seq: int

    def body_size(self) -> int:
        return 3 * ID_SIZE
