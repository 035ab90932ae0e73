from __future__ import annotations

import itertools
import random

import pytest
from hypothesis import given, strategies as st

from geoloc.crdt import (
    COUNTER_EMPTY_SIZE,
    COUNTER_ENTRY_SIZE,
    CausalContext,
    CrdtError,
    LwwRegister,
    OrMap,
    PnCounter,
    decode,
    empty_like,
    encode,
    merge,
    own_counter,
    serialized_size,
    to_json,
)
from oracles import counter_value, lww_winner

# -- strategies ------------------------------------------------------------------

replicas = st.integers(1, 6)


@st.composite
def counters(draw):
    c = PnCounter()
    for r, n, neg in draw(st.lists(st.tuples(replicas, st.integers(1, 5), st.booleans()), max_size=8)):
        c, _ = c.decrement(r, n) if neg else c.increment(r, n)
    return c


registers = st.builds(LwwRegister, st.binary(max_size=6), st.integers(0, 20), replicas)


@st.composite
def maps(draw):
    m = OrMap()
    clock = draw(st.integers(0, 3))
    for op, key, r, val in draw(
        st.lists(st.tuples(st.sampled_from("ppr"), st.sampled_from("abc"), replicas, st.binary(max_size=3)), max_size=8)
    ):
        if op == "p":
            m, _ = m.put(key, val, r, clock)
            clock += draw(st.integers(0, 2))
        else:
            m, _ = m.remove(key)
    return m


@st.composite
def map_triples(draw):
    """Three snapshots of one shared history.

    Independently built maps may reuse a dot for different values, which no
    real execution can do, so lattice laws are checked on reachable states.
    """
    states = {r: OrMap() for r in range(1, 4)}
    snaps = [OrMap()]
    for op, r, other, key, val, ts in draw(st.lists(st.tuples(
        st.sampled_from("ppprm"), st.integers(1, 3), st.integers(1, 3), st.sampled_from("abc"),
        st.binary(max_size=3), st.integers(0, 9),
    ), max_size=12)):
        if op == "p":
            states[r], _ = states[r].put(key, val, r, ts)
        elif op == "r":
            states[r], _ = states[r].remove(key)
        else:
            states[other] = merge(states[other], states[r])
        snaps.append(states[r])
    pick = st.sampled_from(snaps + list(states.values()))
    return draw(pick), draw(pick), draw(pick)


# -- counter -------------------------------------------------------------------------


def test_increment_from_empty():
    c, d = PnCounter().increment(1)
    assert c.value == 1
    assert d == PnCounter(pos={1: 1})


def test_second_delta_alone_reproduces_state():
    c1, _ = PnCounter().increment(1)
    c2, d2 = c1.increment(1)
    assert c2.value == 2
    assert merge(c1, d2) == c2
    assert d2 == PnCounter(pos={1: 2})


def test_increment_rejects_non_positive():
    with pytest.raises(ValueError):
        PnCounter().increment(1, 0)


def test_all_merge_orders_of_three_replicas_agree():
    deltas = [PnCounter().increment(r)[1] for r in (1, 2, 3)]
    results = set()
    for order in itertools.permutations(deltas):
        s = PnCounter()
        for d in order:
            s = merge(s, d)
        results.add(s)
    assert len(results) == 1
    assert results.pop().value == 3


def test_five_replicas_random_pairwise_merges():
    rng = random.Random(3)
    states = [PnCounter().increment(r)[0] for r in range(1, 6)]
    for _ in range(40):
        i, j = rng.sample(range(5), 2)
        states[i] = merge(states[i], states[j])
    total = states[0]
    for s in states:
        total = merge(total, s)
    assert total.value == 5


def test_floor_prevents_reusing_own_entries():
    stale = PnCounter()
    _, d = stale.increment(4, 1, floor=3)
    assert d.pos[4] == 4


def test_counter_value_matches_increment_oracle():
    rng = random.Random(1)
    ops = [(rng.randint(1, 4), 1) for _ in range(50)]
    c = PnCounter()
    for r, n in ops:
        c, _ = c.increment(r, n)
    assert c.value == counter_value(ops)


# -- register --------------------------------------------------------------------


def test_lww_by_timestamp_then_writer():
    a = LwwRegister(b"x", 5, 1)
    b = LwwRegister(b"y", 5, 2)
    c = LwwRegister(b"z", 4, 9)
    assert merge(a, b) == b
    assert merge(b, c) == b
    assert merge(c, a) == a


@given(st.lists(st.tuples(st.binary(max_size=4), st.integers(0, 9), replicas), min_size=1, max_size=6))
def test_register_matches_lww_oracle(writes):
    r = LwwRegister()
    for v, t, w in writes:
        r, _ = r.assign(v, t, w)
    # the initial register takes part like any other write
    assert r.value == lww_winner(writes + [(b"", 0, 0)])


# -- map -------------------------------------------------------------------------


def test_put_lookup_same_replica():
    m, _ = OrMap().put("k", b"v", 1, 0)
    assert m.lookup("k") == b"v"
    assert m.lookup("missing") is None


def test_concurrent_puts_lww_resolves():
    base = OrMap()
    m1, d1 = base.put("k", b"v1", 1, 5)
    m2, d2 = base.put("k", b"v2", 2, 9)
    assert merge(m1, d2).lookup("k") == b"v2"
    assert merge(m2, d1).lookup("k") == b"v2"
    assert merge(m1, d2) == merge(m2, d1)


def test_distinct_keys_union():
    m1, _ = OrMap().put("a", b"1", 1, 0)
    m2, _ = OrMap().put("b", b"2", 2, 0)
    joined = merge(m1, m2)
    assert set(joined.keys()) == {"a", "b"}


def test_remove_then_reappear_only_by_later_put():
    m, _ = OrMap().put("k", b"v", 1, 0)
    removed, rd = m.remove("k")
    assert removed.lookup("k") is None
    # the old put's delta arriving again cannot resurrect the key
    _, old = OrMap().put("k", b"v", 1, 0)
    assert merge(removed, old).lookup("k") is None
    again, _ = removed.put("k", b"w", 1, 1)
    assert again.lookup("k") == b"w"


def test_concurrent_put_survives_remove():
    base, _ = OrMap().put("k", b"v", 1, 0)
    removed, rd = base.remove("k")
    _, concurrent = base.put("k", b"new", 2, 1)
    assert merge(removed, concurrent).lookup("k") == b"new"


def test_review_delta_size_budget():
    _, d = OrMap().put("review/1/1", b"x" * 500, 1, 1234)
    size = serialized_size(d)
    assert 500 <= size < 500 + 128


def test_delta_carries_only_touched_entry():
    m, _ = OrMap().put("a", b"1", 1, 0)
    _, d = m.put("b", b"2", 1, 1)
    assert d.keys() == ["b"]


def test_map_dot_counter_respects_floor():
    _, d = OrMap().put("k", b"v", 3, 0, floor=7)
    assert list(d.entries["k"]) == [(3, 8)]


# -- generic properties ------------------------------------------------------------

ANY = st.one_of(counters(), registers, maps())


def test_kind_mismatch_is_an_error():
    with pytest.raises(CrdtError):
        merge(PnCounter(), OrMap())
    with pytest.raises(CrdtError):
        merge(LwwRegister(), PnCounter())


@given(st.one_of(
    st.tuples(counters(), counters(), counters()),
    st.tuples(registers, registers, registers),
    map_triples(),
))
def test_semilattice_laws(abc):
    a, b, c = abc
    assert merge(a, a) == a
    assert merge(a, b) == merge(b, a)
    assert merge(merge(a, b), c) == merge(a, merge(b, c))


@given(ANY)
def test_encoding_round_trip(x):
    data = encode(x)
    assert decode(data) == x
    assert serialized_size(x) == len(data)


@given(counters())
def test_counter_size_formula(c):
    assert serialized_size(c) == COUNTER_EMPTY_SIZE + COUNTER_ENTRY_SIZE * (len(c.pos) + len(c.neg))


def test_empty_counter_size_constant():
    assert serialized_size(PnCounter()) == COUNTER_EMPTY_SIZE == 10
    assert len(encode(PnCounter())) == 10


@given(maps(), st.sampled_from("abcd"), st.binary(max_size=20), replicas)
def test_state_at_least_as_large_as_its_delta(m, key, val, r):
    state, delta = m.put(key, val, r, 100)
    assert serialized_size(state) >= serialized_size(delta)


@pytest.mark.parametrize(
    "data",
    [b"", b"\x01", b"\x02\x01" + bytes(8), b"\x01\x09", encode(PnCounter()) + b"\x00", encode(PnCounter())[:-1]],
)
def test_decode_rejects_garbage(data):
    with pytest.raises(CrdtError):
        decode(data)


def test_empty_like_and_own_counter():
    assert empty_like("counter") == PnCounter()
    assert empty_like("map") == OrMap()
    with pytest.raises(ValueError):
        empty_like("set")
    c, _ = PnCounter().increment(2, 3)
    assert own_counter(c, 2) == 3
    m, _ = OrMap().put("k", b"", 2, 0)
    assert own_counter(m, 2) == 1


def test_causal_context_compaction():
    ctx = CausalContext.of([(1, 1), (1, 2), (1, 4), (2, 1)])
    assert dict(ctx.vv) == {1: 2, 2: 1}
    assert ctx.cloud == frozenset({(1, 4)})
    assert (1, 3) not in ctx and (1, 4) in ctx
    assert ctx.max_for(1) == 4


def test_json_dump_is_stable():
    m, _ = OrMap().put("k", b"\x00\x01", 1, 5)
    assert to_json(m) == {
        "kind": "map",
        "entries": {"k": [{"dot": [1, 1], "value": "0001", "timestamp": 5, "writer": 1}]},
        "context": {"vv": {"1": 1}, "cloud": []},
    }


# -- convergence ----------------------------------------------------------------------


def _random_ops(rng: random.Random, kind: str, n_replicas: int):
    """Each replica mutates its own state; returns every delta in issue order."""
    states = {r: empty_like(kind) for r in range(1, n_replicas + 1)}
    deltas = []
    for step in range(rng.randint(1, 12)):
        r = rng.randint(1, n_replicas)
        s = states[r]
        if kind == "counter":
            s, d = s.increment(r, rng.randint(1, 3)) if rng.random() < 0.7 else s.decrement(r, 1)
        elif kind == "map":
            key = rng.choice("abc")
            if rng.random() < 0.75:
                s, d = s.put(key, bytes([rng.randrange(256)]), r, rng.randint(0, 20))
            else:
                s, d = s.remove(key)
        else:
            s, d = s.assign(bytes([rng.randrange(256)]), rng.randint(0, 20), r)
        states[r] = s
        deltas.append(d)
        # occasional gossip so later ops observe earlier ones
        if rng.random() < 0.3:
            other = rng.randint(1, n_replicas)
            states[other] = merge(states[other], states[r])
    return states, deltas


@pytest.mark.parametrize("kind", ["counter", "register", "map"])
def test_delivery_order_and_duplication_do_not_matter(kind):
    rng = random.Random(kind)
    for _ in range(200):
        n = rng.randint(3, 5)
        _, deltas = _random_ops(rng, kind, n)
        finals = []
        for _ in range(n):
            inbox = deltas + rng.sample(deltas, k=rng.randint(0, len(deltas)))
            rng.shuffle(inbox)
            s = empty_like(kind)
            for d in inbox:
                s = merge(s, d)
            finals.append(s)
        assert all(f == finals[0] for f in finals)


@pytest.mark.parametrize("kind", ["counter", "register", "map"])
def test_deltas_suffice_to_rebuild_each_replica(kind):
    rng = random.Random("suff" + kind)
    for _ in range(200):
        states, deltas = _random_ops(rng, kind, 3)
        joined_states = empty_like(kind)
        for s in states.values():
            joined_states = merge(joined_states, s)
        joined_deltas = empty_like(kind)
        for d in deltas:
            joined_deltas = merge(joined_deltas, d)
        assert joined_deltas == joined_states
