from __future__ import annotations

from geoloc.crdt import OrMap, PnCounter, serialized_size
from geoloc.geo import GeoPosition
from geoloc.wire import (
    CONTROL,
    DATA,
    HEADER_SIZE,
    Ack,
    DeltaMsg,
    DirectoryEntry,
    FetchReply,
    FetchReq,
    Hangup,
    ImTheBully,
    Interest,
    JoinOrPos,
    PeerList,
    PositionMessage,
)

P = GeoPosition(41.15, -8.61)


def test_fixed_sizes():
    assert Hangup().size() == HEADER_SIZE == 13
    assert JoinOrPos(1, P).size() == 13 + 8 + 16
    assert ImTheBully(1, 2).size() == 13 + 16
    assert Ack(1, 2, 3).size() == 13 + 24
    assert FetchReq(1).size() == 13 + 9


def test_set_valued_sizes_grow_per_member():
    assert Interest(frozenset({1, 2, 3})).size() - Interest(frozenset()).size() == 24
    base = PositionMessage(1, P, True, 1)
    more = PositionMessage(1, P, True, 1, frozenset({1, 2}), frozenset({3}))
    assert more.size() - base.size() == 24


def test_peer_list_counts_peers_and_directory():
    empty = PeerList((), ())
    full = PeerList(((2, P),), (DirectoryEntry(5, P, "counter"),))
    assert full.size() - empty.size() == (8 + 16) + DirectoryEntry.SIZE


def test_payload_sizes_follow_crdt_encoding():
    _, d = OrMap().put("k", b"x" * 100, 1, 0)
    msg = DeltaMsg(1, 1, 1, 0, d)
    assert msg.size() == HEADER_SIZE + 4 * 8 + 2 + 4 + serialized_size(d)
    reply = FetchReply(1, P, PnCounter())
    assert reply.size() == HEADER_SIZE + 8 + 1 + 16 + 10
    assert FetchReply(1).size() == HEADER_SIZE + 9


def test_categories():
    assert ImTheBully.heartbeat and ImTheBully.category == CONTROL
    assert DeltaMsg.category == DATA and FetchReq.category == DATA
    assert JoinOrPos.category == CONTROL and not JoinOrPos.heartbeat
