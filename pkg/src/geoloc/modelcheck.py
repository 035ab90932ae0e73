"""Exhaustive bully check over small static topologies.

Every connected labelled graph on up to ``max_nodes`` nodes is simulated with
every single-crash schedule (no crash, or one node crashing at one of a few
instants). After the run settles, each surviving component must have exactly
one bully, the lowest id alive in it, and every member must agree on it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Any, Iterator, Optional

from geoloc.bully import BullyTable
from geoloc.simnet import LatencyModel, NodeKind, Simulator
from geoloc.wire import ImTheBully, Message

OBJECT = 7
Edge = tuple[int, int]


class BullyNode:
    kind = NodeKind.CLIENT

    def __init__(self, node_id: int, peers: set[int], broadcast_time: int, bully_timeout: int) -> None:
        self.node_id = node_id
        self.peers = set(peers)
        self.table = BullyTable(node_id, [OBJECT], bully_timeout=bully_timeout, broadcast_time=broadcast_time)

    def interested(self, obj: int) -> list[int]:
        return sorted(self.peers)

    def start(self, sim: Simulator, at: int) -> None:
        sim.set_timer(self.node_id, at, "broadcast")

    def on_timer(self, sim: Simulator, tag: str, data: Any) -> None:
        if tag == "broadcast":
            for dst, msg in self.table.broadcast(self.interested):
                sim.send(self.node_id, dst, msg)
            sim.set_timer(self.node_id, sim.now + self.table.broadcast_time, "broadcast")
        elif tag == "timeout" and self.table.expired(data, sim.now):
            self.table.on_timeout(data)

    def on_message(self, sim: Simulator, src: int, msg: Message) -> None:
        assert isinstance(msg, ImTheBully)
        if src not in self.peers:
            return
        out = self.table.on_claim(msg, src, sim.now, self.interested)
        deadline = self.table.timeouts.get(msg.object_id)
        if deadline == sim.now + self.table.bully_timeout:
            sim.set_timer(self.node_id, deadline, "timeout", msg.object_id)
        for dst, m in out:
            sim.send(self.node_id, dst, m)

    def link_down(self, peer: int) -> None:
        if peer in self.peers:
            self.peers.discard(peer)
            self.table.on_peer_disconnect(peer)


def connected_graphs(n: int) -> Iterator[tuple[Edge, ...]]:
    """All connected labelled simple graphs on nodes ``1..n``."""
    nodes = range(1, n + 1)
    pairs = list(itertools.combinations(nodes, 2))
    for mask in range(1 << len(pairs)):
        edges = tuple(p for i, p in enumerate(pairs) if mask >> i & 1)
        if _components(set(nodes), edges) == 1 or n == 1:
            yield edges


def _components(alive: set[int], edges: tuple[Edge, ...]) -> int:
    return len(components(alive, edges))


def components(alive: set[int], edges: tuple[Edge, ...]) -> list[set[int]]:
    adj: dict[int, set[int]] = {v: set() for v in alive}
    for a, b in edges:
        if a in alive and b in alive:
            adj[a].add(b)
            adj[b].add(a)
    seen: set[int] = set()
    out = []
    for v in sorted(alive):
        if v in seen:
            continue
        comp, stack = set(), [v]
        while stack:
            u = stack.pop()
            if u not in comp:
                comp.add(u)
                stack.extend(adj[u] - comp)
        seen |= comp
        out.append(comp)
    return out


@dataclass(frozen=True)
class Case:
    edges: tuple[Edge, ...]
    n: int
    crash: Optional[int]
    crash_at: int
    notify: bool  # neighbours see the link close, or rely on timeouts alone
    stagger: bool


@dataclass(frozen=True)
class Outcome:
    case: Case
    ok: bool
    detail: str


def run_case(case: Case, broadcast_time: int = 2000, bully_timeout: int = 6000, latency: int = 20) -> Outcome:
    sim = Simulator(LatencyModel(latency, latency, latency, latency))
    adj = {v: set() for v in range(1, case.n + 1)}
    for a, b in case.edges:
        adj[a].add(b)
        adj[b].add(a)
    nodes = {v: BullyNode(v, adj[v], broadcast_time, bully_timeout) for v in adj}
    for v, node in nodes.items():
        sim.add_node(node)
    for v, node in nodes.items():
        node.start(sim, broadcast_time + (37 * v % 11) * 100 if case.stagger else broadcast_time)
    if case.crash is not None:
        victim = case.crash

        def crash(s: Simulator) -> None:
            s.crash(victim)
            if case.notify:
                for u in sorted(adj[victim]):
                    nodes[u].link_down(victim)

        sim.call_at(case.crash_at, crash)
    horizon = case.crash_at + 4 * bully_timeout + 4 * broadcast_time
    sim.run(horizon)
    alive = set(nodes) - ({case.crash} if case.crash is not None else set())
    problems = []
    for comp in components(alive, case.edges):
        low = min(comp)
        bullies = sorted(v for v in comp if nodes[v].table.is_bully(OBJECT))
        if bullies != [low]:
            problems.append(f"component {sorted(comp)} has bullies {bullies}, expected [{low}]")
        beliefs = {v: nodes[v].table.bullies[OBJECT] for v in comp}
        if any(b != low for b in beliefs.values()):
            problems.append(f"component {sorted(comp)} beliefs {beliefs}")
    return Outcome(case, not problems, "; ".join(problems))


def cases(max_nodes: int = 4, crash_times: tuple[int, ...] = (0, 1000, 2500, 9000, 20000)) -> Iterator[Case]:
    for n in range(1, max_nodes + 1):
        for edges in connected_graphs(n):
            for stagger in (False, True):
                yield Case(edges, n, None, 0, False, stagger)
                for victim in range(1, n + 1):
                    for at in crash_times:
                        for notify in (False, True):
                            yield Case(edges, n, victim, at, notify, stagger)


def check_all(max_nodes: int = 4) -> tuple[int, list[Outcome]]:
    total, failures = 0, []
    for case in cases(max_nodes):
        total += 1
        outcome = run_case(case)
        if not outcome.ok:
            failures.append(outcome)
    return total, failures
