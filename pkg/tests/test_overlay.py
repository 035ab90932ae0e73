from __future__ import annotations

from collections import deque

import pytest
from hypothesis import given, strategies as st

from geoloc.geo import GeoPosition, distance
from geoloc.overlay import SERVER, STALE_PERIODS, PeerView, SignallingState
from geoloc.wire import Dial, DialAck, Hangup, JoinOrPos, PositionMessage
from oracles import haversine_atan2, near_filter, nearest_k

ORIGIN = GeoPosition(41.15, -8.61)


def east(m: float) -> GeoPosition:
    return ORIGIN.offset(0, m)


def view(node: int, pos: GeoPosition = ORIGIN, **kw) -> PeerView:
    return PeerView(node, kw.pop("max_distance", 1000.0), kw.pop("max_peers", 5), 1000, pos, **kw)


class Net:
    """Delivers PeerView output in FIFO order; counts transmissions."""

    def __init__(self, views: dict[int, PeerView], pos: dict[int, GeoPosition]) -> None:
        self.views, self.pos = views, pos
        self.queue: deque = deque()
        self.sent: list[tuple[int, int, object]] = []
        self.now = 0

    def post(self, src: int, out) -> None:
        for dst, msg in out:
            self.sent.append((src, dst, msg))
            if dst != SERVER:
                self.queue.append((src, dst, msg))

    def pump(self) -> None:
        while self.queue:
            src, dst, msg = self.queue.popleft()
            v = self.views[dst]
            if isinstance(msg, PositionMessage):
                self.post(dst, v.on_position_message(msg, self.pos[dst], self.now, src))
            elif isinstance(msg, Dial):
                self.post(dst, v.on_dial(src, msg.pos, self.pos[dst], self.now)[1])
            elif isinstance(msg, DialAck):
                self.post(dst, v.on_dial_ack(src, msg.accept, msg.pos, self.now)[1])
            elif isinstance(msg, Hangup):
                v.on_hangup(src)

    def link(self, a: int, b: int) -> None:
        self.views[a].peers.add(b)
        self.views[b].peers.add(a)


# -- signalling ------------------------------------------------------------------


def test_first_registration_sees_nobody():
    s = SignallingState(1000)
    assert s.on_node_pos(1, ORIGIN) == []


def test_registry_matches_brute_force_filter():
    s = SignallingState(1000)
    spots = {2: east(900), 3: east(1500), 4: east(-3000)}
    for n, p in spots.items():
        s.on_node_pos(n, p)
    got = s.on_node_pos(1, ORIGIN)
    expect = near_filter({n: (p.lat, p.lon) for n, p in spots.items()}, 1, (ORIGIN.lat, ORIGIN.lon), 1000)
    assert got == expect == [2]


def test_reregistration_moves_the_node():
    s = SignallingState(1000)
    s.on_node_pos(2, east(5000))
    assert s.on_node_pos(1, ORIGIN) == []
    s.on_node_pos(2, east(100), now=10)
    assert s.on_node_pos(1, ORIGIN, now=20) == [2]
    assert s.nodes_pos[2] == east(100)
    assert [t for n, _, t in s.history if n == 2] == [0, 10]


# -- join and announcements ------------------------------------------------------------


def test_join_with_server_sends_one_report():
    v = view(1)
    out = v.join(ORIGIN)
    assert out == [(SERVER, JoinOrPos(1, ORIGIN))]
    v.on_server_response([(2, east(10)), (3, east(20))], 0)
    assert v.nodes_of_interest == {2, 3}


def test_join_without_server_is_silent_but_answers_dials():
    v = view(1, server_up=False)
    assert v.join(ORIGIN) == []
    assert v.peers == set() and v.nodes_of_interest == set()
    accepted, out = v.on_dial(2, east(10), ORIGIN, 0)
    assert accepted and out == [(2, DialAck(True, ORIGIN))]


def test_sequential_joins_second_sees_first():
    s = SignallingState(1000)
    a, b = view(1), view(2, east(50))
    s.on_node_pos(1, ORIGIN)
    b.on_server_response([(n, s.nodes_pos[n]) for n in s.on_node_pos(2, east(50))], 0)
    assert b.nodes_of_interest == {1}
    del a


def test_no_move_no_messages():
    v = view(1)
    v.join(ORIGIN)
    v.peers = {2, 3}
    assert v.update_position(ORIGIN, 1000) == []


def test_big_move_with_server_reports_once_and_tells_peers():
    v = view(1)
    v.join(ORIGIN)
    v.peers = {2, 3}
    out = v.update_position(east(1200), 1000)
    assert out[0] == (SERVER, JoinOrPos(1, east(1200)))
    assert [(d, m.propagate) for d, m in out[1:]] == [(2, False), (3, False)]
    assert v.last_sent_pos == east(1200)


def test_big_move_without_server_floods():
    v = view(1, server_up=False)
    v.join(ORIGIN)
    v.peers = {2}
    out = v.update_position(east(1200), 1000)
    assert len(out) == 1
    dst, msg = out[0]
    assert dst == 2 and msg.propagate and msg.visited == frozenset({1})


def test_small_move_then_stop_settles_once_to_peers():
    v = view(1)
    v.join(ORIGIN)
    v.peers = {2}
    assert v.update_position(east(300), 1000) == []  # still moving
    out = v.update_position(east(300), 2000)  # stopped
    assert [(d, m.propagate, m.pos) for d, m in out] == [(2, False, east(300))]
    assert v.update_position(east(300), 3000) == []


def test_chain_learns_position_without_server():
    pos = {1: ORIGIN, 2: east(600), 3: east(1200)}
    views = {n: view(n, p, server_up=False) for n, p in pos.items()}
    net = Net(views, pos)
    net.link(1, 2)
    net.link(2, 3)
    for n in views:
        views[n].join(pos[n])
    pos[1] = east(1100)
    net.post(1, views[1].update_position(pos[1], 1000))
    net.pump()
    assert views[3].position_of(1) == east(1100)
    assert 1 in views[3].nodes_of_interest


def test_remote_sender_without_propagation_is_ignored():
    v = view(1)
    out = v.on_position_message(PositionMessage(9, east(10_000), False), ORIGIN, 0)
    assert out == [] and v.nodes_of_interest == set()


def test_near_sender_becomes_candidate():
    v = view(1)
    v.on_position_message(PositionMessage(9, east(500), False), ORIGIN, 0)
    assert v.nodes_of_interest == {9}


def _flood_count(n: int, edges: list[tuple[int, int]], origin: int = 1) -> int:
    pos = {i: east(50 * i) for i in range(1, n + 1)}
    views = {i: view(i, pos[i], server_up=False) for i in pos}
    net = Net(views, pos)
    for a, b in edges:
        net.link(a, b)
    for i in views:
        views[i].join(pos[i])
    pos[origin] = pos[origin].offset(1500, 0)
    net.post(origin, views[origin].update_position(pos[origin], 1000))
    net.pump()
    for i in views:
        if i != origin:
            assert views[i].position_of(origin) == pos[origin]
    return sum(1 for _, _, m in net.sent if isinstance(m, PositionMessage))


def test_triangle_flood_bounded_by_edges():
    assert _flood_count(3, [(1, 2), (2, 3), (1, 3)]) <= 3


@pytest.mark.parametrize(
    "edges",
    [
        [(1, 2), (2, 3), (3, 4), (4, 5)],
        [(1, 2), (1, 3), (1, 4), (1, 5)],
        [(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)],
        [(1, 2), (2, 3), (2, 4), (4, 5), (4, 6)],
    ],
    ids=["line", "star", "clique4", "tree"],
)
def test_flood_bounded_by_edges(edges):
    n = max(max(e) for e in edges)
    assert _flood_count(n, edges) <= len(edges)


def test_four_cycle_costs_one_transmission_over_edge_count():
    # 2 and 4 both hand the flood to 3, and 3 cannot tell that 4 already has it
    assert _flood_count(4, [(1, 2), (2, 3), (3, 4), (4, 1)]) == 5


@given(st.integers(2, 7).flatmap(lambda n: st.tuples(
    st.just(n),
    st.sets(st.sampled_from([(a, b) for a in range(1, n + 1) for b in range(a + 1, n + 1)])),
    st.integers(1, n),
)))
def test_flood_terminates_and_uses_each_link_at_most_twice(case):
    n, extra, origin = case
    edges = sorted({(i, i + 1) for i in range(1, n)} | extra)  # a path keeps it connected
    assert _flood_count(n, edges, origin) <= 2 * len(edges)


def test_each_node_forwards_a_flood_at_most_once():
    v = view(2, server_up=False)
    v.peers = {1, 3, 4}
    m = PositionMessage(1, east(10), True, 1, frozenset({1}), frozenset({2}))
    first = v.on_position_message(m, ORIGIN, 0, src=1)
    assert sorted(d for d, _ in first) == [3, 4]
    assert v.on_position_message(m, ORIGIN, 0, src=3) == []
    assert all(2 in fwd.visited for _, fwd in first)


def test_five_node_line_disseminates_without_server():
    pos = {i: east(800 * (i - 1)) for i in range(1, 6)}
    views = {i: view(i, pos[i], server_up=False) for i in pos}
    net = Net(views, pos)
    for i in range(1, 5):
        net.link(i, i + 1)
    for i in views:
        views[i].join(pos[i])
    pos[3] = pos[3].offset(1100, 0)
    net.post(3, views[3].update_position(pos[3], 1000))
    net.pump()
    assert all(views[i].position_of(3) == pos[3] for i in (1, 2, 4, 5))


# -- review -----------------------------------------------------------------------


def test_steady_state_review_does_nothing():
    v = view(1, max_peers=2)
    for n, m in ((2, 100), (3, 200)):
        v.on_server_response([(n, east(m))], 0)
        v.peers.add(n)
    out, dropped = v.review_peers(ORIGIN, 1000)
    assert out == [] and dropped == []


def test_drifting_peer_is_hung_up():
    v = view(1)
    v.peers = {2}
    v.on_server_response([(2, east(1001))], 0)
    out, dropped = v.review_peers(ORIGIN, 1000)
    assert dropped == [2] and out == [(2, Hangup())]
    assert distance(ORIGIN, east(1001)) > 1000


def test_dials_nearest_first_with_id_tiebreak():
    v = view(1, max_peers=2)
    v.on_server_response([(5, east(300)), (4, east(300)), (3, east(100)), (2, east(900))], 0)
    out, _ = v.review_peers(ORIGIN, 0)
    assert [d for d, m in out if isinstance(m, Dial)] == [3, 4]


def test_seven_candidates_five_nearest_win():
    spots = {n: east(100 * n + (37 * n) % 50) for n in range(2, 9)}
    pos = {1: ORIGIN, **spots}
    views = {n: view(n, p) for n, p in pos.items()}
    net = Net(views, pos)
    views[1].on_server_response(list(spots.items()), 0)
    for t in range(0, 5000, 1000):
        net.post(1, views[1].review_peers(ORIGIN, t)[0])
        net.pump()
    expect = nearest_k((ORIGIN.lat, ORIGIN.lon), {n: (p.lat, p.lon) for n, p in spots.items()}, 5, 1000)
    assert views[1].peers == expect


def test_degree_bound_after_review_even_when_overfull():
    v = view(1, max_peers=2)
    for n in (2, 3, 4):
        v.on_server_response([(n, east(100 * n))], 0)
        v.peers.add(n)
    out, dropped = v.review_peers(ORIGIN, 0)
    assert len(v.peers) == 2 and dropped == [4]


def test_full_node_rejects_and_dialer_cools_down():
    full = view(2, max_peers=1)
    full.peers = {9}
    accepted, out = full.on_dial(1, ORIGIN, east(10), 0)
    assert not accepted and out == [(1, DialAck(False, east(10)))]
    dialer = view(1)
    dialer.on_server_response([(2, east(10))], 0)
    dialer.review_peers(ORIGIN, 0)
    linked, _ = dialer.on_dial_ack(2, False, east(10), 0)
    assert not linked
    out, _ = dialer.review_peers(ORIGIN, 500)
    assert out == []
    out, _ = dialer.review_peers(ORIGIN, 1000)
    assert [d for d, _ in out] == [2]


def test_accept_after_filling_up_hangs_up():
    v = view(1, max_peers=1)
    v.peers = {3}
    linked, out = v.on_dial_ack(2, True, east(10), 0)
    assert not linked and out == [(2, Hangup())]


def test_stale_candidates_expire():
    v = view(1)
    v.on_server_response([(2, east(100))], 0)
    v.pending_dials.add(2)  # keep it from being dialled
    v.review_peers(ORIGIN, STALE_PERIODS * 1000 + 1)
    assert 2 not in v.nodes_of_interest


def test_links_are_symmetric_after_dial():
    pos = {1: ORIGIN, 2: east(100)}
    views = {n: view(n, p) for n, p in pos.items()}
    net = Net(views, pos)
    views[1].on_server_response([(2, pos[2])], 0)
    net.post(1, views[1].review_peers(ORIGIN, 0)[0])
    net.pump()
    assert views[1].peers == {2} and views[2].peers == {1}


def test_oracle_distance_agrees_for_test_geometry():
    assert distance(ORIGIN, east(1001)) == pytest.approx(
        haversine_atan2(ORIGIN.lat, ORIGIN.lon, east(1001).lat, east(1001).lon), abs=1e-6
    )
