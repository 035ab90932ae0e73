"""Delta-state CRDTs used as replicated object payloads.

Every mutator returns ``(new_state, delta)`` where the delta is a value of the
same type holding only what the mutation touched, so that
``merge(old_state, delta) == new_state``. Values are immutable.

Canonical wire encoding (version 1, all integers big-endian)::

    header       u8 version | u8 kind                         (2 bytes)
    PnCounter    u32 n_pos | n_pos * (u64 replica, u64 count)
                 u32 n_neg | n_neg * (u64 replica, u64 count)
    LwwRegister  u64 timestamp | u64 writer | u32 len | value
    OrMap        u32 n_keys | per key, sorted:
                     u16 key_len | utf-8 key | u32 n_dots |
                     per dot, sorted: u64 replica | u64 counter | register body
                 u32 n_vv | n_vv * (u64 replica, u64 counter)
                 u32 n_cloud | n_cloud * (u64 replica, u64 counter)

An empty PnCounter therefore encodes to ``COUNTER_EMPTY_SIZE`` (10) bytes and
each replica entry adds ``COUNTER_ENTRY_SIZE`` (16) bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Iterable, Mapping, Union

ENCODING_VERSION = 1

KIND_COUNTER = 1
KIND_REGISTER = 2
KIND_MAP = 3

HEADER_SIZE = 2
COUNTER_EMPTY_SIZE = HEADER_SIZE + 4 + 4
COUNTER_ENTRY_SIZE = 16

Dot = tuple[int, int]


class CrdtError(Exception):
    """Protocol bug: merging unrelated CRDT kinds or decoding garbage."""


def _frozen(d: Mapping[Any, Any]) -> Mapping[Any, Any]:
    return MappingProxyType(dict(d))


@dataclass(frozen=True, eq=False)
class PnCounter:
    pos: Mapping[int, int] = field(default_factory=dict)
    neg: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "pos", _frozen({k: v for k, v in self.pos.items() if v}))
        object.__setattr__(self, "neg", _frozen({k: v for k, v in self.neg.items() if v}))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PnCounter):
            return NotImplemented
        return dict(self.pos) == dict(other.pos) and dict(self.neg) == dict(other.neg)

    def __hash__(self) -> int:
        return hash((frozenset(self.pos.items()), frozenset(self.neg.items())))

    def __repr__(self) -> str:
        return f"PnCounter(pos={dict(self.pos)}, neg={dict(self.neg)})"

    @property
    def value(self) -> int:
        return sum(self.pos.values()) - sum(self.neg.values())

    def increment(self, replica: int, n: int = 1, floor: int = 0) -> tuple[PnCounter, PnCounter]:
        """Add ``n`` at ``replica``.

        ``floor`` is the replica's own last known entry, used when this copy
        was refetched from a stale source and lacks some of its own history.
        """
        if n < 1:
            raise ValueError("increment must be >= 1")
        entry = max(self.pos.get(replica, 0), floor) + n
        delta = PnCounter(pos={replica: entry})
        return merge(self, delta), delta

    def decrement(self, replica: int, n: int = 1, floor: int = 0) -> tuple[PnCounter, PnCounter]:
        if n < 1:
            raise ValueError("decrement must be >= 1")
        entry = max(self.neg.get(replica, 0), floor) + n
        delta = PnCounter(neg={replica: entry})
        return merge(self, delta), delta

    def _join(self, other: PnCounter) -> PnCounter:
        pos = dict(self.pos)
        for r, c in other.pos.items():
            pos[r] = max(pos.get(r, 0), c)
        neg = dict(self.neg)
        for r, c in other.neg.items():
            neg[r] = max(neg.get(r, 0), c)
        return PnCounter(pos, neg)


@dataclass(frozen=True, order=False)
class LwwRegister:
    value: bytes = b""
    timestamp: int = 0
    writer: int = 0

    def key(self) -> tuple[int, int, bytes]:
        return (self.timestamp, self.writer, self.value)

    def assign(self, value: bytes, timestamp: int, writer: int) -> tuple[LwwRegister, LwwRegister]:
        delta = LwwRegister(bytes(value), timestamp, writer)
        return merge(self, delta), delta

    def _join(self, other: LwwRegister) -> LwwRegister:
        return self if self.key() >= other.key() else other


@dataclass(frozen=True, eq=False)
class CausalContext:
    """Set of observed dots, kept as a version vector plus a dot cloud."""

    vv: Mapping[int, int] = field(default_factory=dict)
    cloud: frozenset[Dot] = frozenset()

    def __post_init__(self) -> None:
        vv = {r: c for r, c in self.vv.items() if c > 0}
        cloud = set(self.cloud)
        # absorb cloud dots that extend a contiguous prefix
        changed = True
        while changed:
            changed = False
            for r, c in sorted(cloud):
                if c <= vv.get(r, 0):
                    cloud.discard((r, c))
                    changed = True
                elif c == vv.get(r, 0) + 1:
                    vv[r] = c
                    cloud.discard((r, c))
                    changed = True
        object.__setattr__(self, "vv", _frozen(vv))
        object.__setattr__(self, "cloud", frozenset(cloud))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CausalContext):
            return NotImplemented
        return dict(self.vv) == dict(other.vv) and self.cloud == other.cloud

    def __hash__(self) -> int:
        return hash((frozenset(self.vv.items()), self.cloud))

    def __repr__(self) -> str:
        return f"CausalContext(vv={dict(self.vv)}, cloud={sorted(self.cloud)})"

    def __contains__(self, dot: Dot) -> bool:
        r, c = dot
        return c <= self.vv.get(r, 0) or dot in self.cloud

    def max_for(self, replica: int) -> int:
        top = self.vv.get(replica, 0)
        for r, c in self.cloud:
            if r == replica and c > top:
                top = c
        return top

    def union(self, other: CausalContext) -> CausalContext:
        vv = dict(self.vv)
        for r, c in other.vv.items():
            vv[r] = max(vv.get(r, 0), c)
        return CausalContext(vv, self.cloud | other.cloud)

    @classmethod
    def of(cls, dots: Iterable[Dot]) -> CausalContext:
        return cls({}, frozenset(dots))


@dataclass(frozen=True, eq=False)
class OrMap:
    """Observed-remove map from string keys to last-writer-wins registers.

    Each put mints a fresh dot; a key's visible value is the LWW-maximal
    register among its surviving dots. Concurrent puts keep both dots and
    LWW picks the winner; a remove only kills the dots it has observed.
    """

    entries: Mapping[str, Mapping[Dot, LwwRegister]] = field(default_factory=dict)
    context: CausalContext = field(default_factory=CausalContext)

    def __post_init__(self) -> None:
        clean = {k: _frozen(v) for k, v in self.entries.items() if v}
        object.__setattr__(self, "entries", _frozen(clean))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OrMap):
            return NotImplemented
        mine = {k: dict(v) for k, v in self.entries.items()}
        theirs = {k: dict(v) for k, v in other.entries.items()}
        return mine == theirs and self.context == other.context

    def __hash__(self) -> int:
        return hash((frozenset((k, frozenset(v.items())) for k, v in self.entries.items()), self.context))

    def __repr__(self) -> str:
        return f"OrMap(entries={ {k: dict(v) for k, v in self.entries.items()} }, context={self.context!r})"

    def keys(self) -> list[str]:
        return sorted(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, key: str) -> bytes | None:
        dots = self.entries.get(key)
        if not dots:
            return None
        return max(dots.values(), key=LwwRegister.key).value

    def put(self, key: str, value: bytes, replica: int, timestamp: int, floor: int = 0) -> tuple[OrMap, OrMap]:
        """Write ``key`` at ``replica``; ``floor`` is the replica's own last dot counter."""
        dot = (replica, max(self.context.max_for(replica), floor) + 1)
        observed = set(self.entries.get(key, {}))
        reg = LwwRegister(bytes(value), timestamp, replica)
        delta = OrMap({key: {dot: reg}}, CausalContext.of(observed | {dot}))
        return merge(self, delta), delta

    def remove(self, key: str) -> tuple[OrMap, OrMap]:
        observed = set(self.entries.get(key, {}))
        delta = OrMap({}, CausalContext.of(observed))
        return merge(self, delta), delta

    def _join(self, other: OrMap) -> OrMap:
        out: dict[str, dict[Dot, LwwRegister]] = {}
        for key in set(self.entries) | set(other.entries):
            a = self.entries.get(key, {})
            b = other.entries.get(key, {})
            kept = {d: v for d, v in a.items() if d in b or d not in other.context}
            kept.update({d: v for d, v in b.items() if d not in a and d not in self.context})
            if kept:
                out[key] = kept
        return OrMap(out, self.context.union(other.context))


Crdt = Union[PnCounter, LwwRegister, OrMap]


def merge(a: Crdt, b: Crdt) -> Crdt:
    """Least upper bound of two states (or a state and a delta) of one kind."""
    if type(a) is not type(b):
        raise CrdtError(f"cannot merge {type(a).__name__} with {type(b).__name__}")
    return a._join(b)  # type: ignore[arg-type]


def empty_like(kind: str) -> Crdt:
    if kind == "counter":
        return PnCounter()
    if kind == "map":
        return OrMap()
    if kind == "register":
        return LwwRegister()
    raise ValueError(f"unknown CRDT kind {kind!r}")


def kind_name(c: Crdt) -> str:
    return {PnCounter: "counter", OrMap: "map", LwwRegister: "register"}[type(c)]


def own_counter(c: Crdt, replica: int) -> int:
    """The replica's own high-water mark inside ``c``."""
    if isinstance(c, PnCounter):
        return max(c.pos.get(replica, 0), c.neg.get(replica, 0))
    if isinstance(c, OrMap):
        return c.context.max_for(replica)
    return 0


# -- encoding ---------------------------------------------------------------

_U16 = struct.Struct(">H")
_U32 = struct.Struct(">I")
_PAIR = struct.Struct(">QQ")
_REG = struct.Struct(">QQI")


def _encode_register_body(r: LwwRegister) -> bytes:
    return _REG.pack(r.timestamp, r.writer, len(r.value)) + r.value


def _encode_pairs(pairs: Mapping[int, int] | Iterable[Dot]) -> bytes:
    items = sorted(pairs.items()) if isinstance(pairs, Mapping) else sorted(pairs)
    return _U32.pack(len(items)) + b"".join(_PAIR.pack(a, b) for a, b in items)


def encode(c: Crdt) -> bytes:
    if isinstance(c, PnCounter):
        return bytes((ENCODING_VERSION, KIND_COUNTER)) + _encode_pairs(c.pos) + _encode_pairs(c.neg)
    if isinstance(c, LwwRegister):
        return bytes((ENCODING_VERSION, KIND_REGISTER)) + _encode_register_body(c)
    if isinstance(c, OrMap):
        parts = [bytes((ENCODING_VERSION, KIND_MAP)), _U32.pack(len(c.entries))]
        for key in sorted(c.entries):
            raw = key.encode("utf-8")
            dots = c.entries[key]
            parts.append(_U16.pack(len(raw)) + raw + _U32.pack(len(dots)))
            for dot in sorted(dots):
                parts.append(_PAIR.pack(*dot) + _encode_register_body(dots[dot]))
        parts.append(_encode_pairs(c.context.vv))
        parts.append(_encode_pairs(c.context.cloud))
        return b"".join(parts)
    raise CrdtError(f"not a CRDT: {type(c).__name__}")


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CrdtError("truncated CRDT encoding")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, st: struct.Struct) -> tuple[Any, ...]:
        return st.unpack(self.take(st.size))

    def pairs(self) -> list[tuple[int, int]]:
        (n,) = self.unpack(_U32)
        return [self.unpack(_PAIR) for _ in range(n)]  # type: ignore[misc]

    def register(self) -> LwwRegister:
        ts, writer, n = self.unpack(_REG)
        return LwwRegister(self.take(n), ts, writer)


def decode(data: bytes) -> Crdt:
    rd = _Reader(data)
    version, kind = rd.take(2)
    if version != ENCODING_VERSION:
        raise CrdtError(f"unsupported encoding version {version}")
    out: Crdt
    if kind == KIND_COUNTER:
        out = PnCounter(dict(rd.pairs()), dict(rd.pairs()))
    elif kind == KIND_REGISTER:
        out = rd.register()
    elif kind == KIND_MAP:
        (n_keys,) = rd.unpack(_U32)
        entries: dict[str, dict[Dot, LwwRegister]] = {}
        for _ in range(n_keys):
            (klen,) = rd.unpack(_U16)
            key = rd.take(klen).decode("utf-8")
            (n_dots,) = rd.unpack(_U32)
            entries[key] = {}
            for _ in range(n_dots):
                dot = rd.unpack(_PAIR)
                entries[key][dot] = rd.register()  # type: ignore[index]
        vv = dict(rd.pairs())
        cloud = frozenset(rd.pairs())
        out = OrMap(entries, CausalContext(vv, cloud))
    else:
        raise CrdtError(f"unknown CRDT kind tag {kind}")
    if rd.pos != len(data):
        raise CrdtError("trailing bytes after CRDT encoding")
    return out


def serialized_size(c: Crdt) -> int:
    """Byte length of the canonical encoding."""
    if isinstance(c, PnCounter):
        return COUNTER_EMPTY_SIZE + COUNTER_ENTRY_SIZE * (len(c.pos) + len(c.neg))
    return len(encode(c))


def to_json(c: Crdt) -> dict[str, Any]:
    """Debug dump with stable key order, for golden files."""
    if isinstance(c, PnCounter):
        return {
            "kind": "counter",
            "value": c.value,
            "pos": {str(k): v for k, v in sorted(c.pos.items())},
            "neg": {str(k): v for k, v in sorted(c.neg.items())},
        }
    if isinstance(c, LwwRegister):
        return {"kind": "register", "value": c.value.hex(), "timestamp": c.timestamp, "writer": c.writer}
    if isinstance(c, OrMap):
        return {
            "kind": "map",
            "entries": {
                k: [
                    {"dot": list(d), "value": r.value.hex(), "timestamp": r.timestamp, "writer": r.writer}
                    for d, r in sorted(c.entries[k].items())
                ]
                for k in sorted(c.entries)
            },
            "context": {
                "vv": {str(k): v for k, v in sorted(c.context.vv.items())},
                "cloud": [list(d) for d in sorted(c.context.cloud)],
            },
        }
    raise CrdtError(f"not a CRDT: {type(c).__name__}")
