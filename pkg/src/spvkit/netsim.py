"""Seeded discrete-event gossip simulator with Byzantine relays.

Every random choice (forwarding coin, loss coin, link delay) is drawn from a
keyed hash of ``(seed, purpose, sender, receiver, message id, attempt)``.
Draws therefore do not depend on event processing order, and a run is
reproducible across processes and platforms.
"""
from __future__ import annotations

import csv
import enum
import hashlib
import heapq
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import networkx as nx
import numpy as np

from .fixtures import REGTEST_BITS, make_chain
from .headers import BlockHeader, CompactError, decode_compact, encode_header, hash_to_int, header_hash
from .merkle import sha256d
from .tx import Transaction

TOPOLOGY_KINDS = ("path", "ring", "complete", "d_regular_random", "small_world")
MAX_TOPOLOGY_RETRIES = 1000


class UnsatisfiableParams(ValueError):
    pass


# -- topology ----------------------------------------------------------------------

@dataclass(frozen=True)
class Topology:
    kind: str
    n_nodes: int
    edges: frozenset  # of (i, j) with i < j
    degree: Optional[int] = None
    rewire_p: Optional[float] = None
    seed: int = 0

    def neighbors(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {v: [] for v in range(self.n_nodes)}
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        return {v: sorted(ns) for v, ns in adj.items()}

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n_nodes))
        g.add_edges_from(self.edges)
        return g

    @property
    def diameter(self) -> int:
        return nx.diameter(self.graph()) if self.n_nodes > 1 else 0

    def to_json(self) -> dict:
        return {"kind": self.kind, "n": self.n_nodes, "degree": self.degree,
                "rewire_p": self.rewire_p, "seed": self.seed}


def _norm_edges(edges: Iterable[tuple[int, int]]) -> frozenset:
    return frozenset((min(i, j), max(i, j)) for i, j in edges if i != j)


def build_topology(kind: str, n: int, degree: Optional[int] = None, rewire_p: float = 0.1,
                   seed: int = 0) -> Topology:
    """Deterministic connected graph for ``(kind, n, params, seed)``.

    Random families retry with sub-seeds ``seed, seed+1, ...`` until connected.
    """
    if kind not in TOPOLOGY_KINDS:
        raise UnsatisfiableParams(f"unknown topology kind {kind!r}")
    if n < 2:
        raise UnsatisfiableParams("need at least two nodes")
    if kind == "path":
        return Topology(kind, n, _norm_edges((i, i + 1) for i in range(n - 1)), seed=seed)
    if kind == "ring":
        edges = [(i, (i + 1) % n) for i in range(n)] if n > 2 else [(0, 1)]
        return Topology(kind, n, _norm_edges(edges), seed=seed)
    if kind == "complete":
        return Topology(kind, n, _norm_edges((i, j) for i in range(n) for j in range(i + 1, n)), seed=seed)

    if degree is None or not 1 <= degree < n:
        raise UnsatisfiableParams(f"degree must satisfy 1 <= d < n, got {degree}")
    if kind == "d_regular_random" and (n * degree) % 2:
        raise UnsatisfiableParams(f"n*d must be even for a d-regular graph (n={n}, d={degree})")
    if kind == "small_world" and degree < 2:
        raise UnsatisfiableParams("small-world graphs need degree >= 2")
    for attempt in range(MAX_TOPOLOGY_RETRIES):
        sub_seed = seed + attempt
        if kind == "d_regular_random":
            g = nx.random_regular_graph(degree, n, seed=sub_seed)
        else:
            g = nx.watts_strogatz_graph(n, degree, rewire_p, seed=sub_seed)
        if nx.is_connected(g):
            return Topology(kind, n, _norm_edges(g.edges()), degree,
                            rewire_p if kind == "small_world" else None, seed)
    raise UnsatisfiableParams(f"no connected {kind} graph after {MAX_TOPOLOGY_RETRIES} attempts")


# -- configuration -----------------------------------------------------------------------

class Behavior(enum.Enum):
    DROP_ALL = "drop_all"
    SELECTIVE_DROP = "selective_drop"
    MODIFY_HEADERS = "modify_headers"


@dataclass(frozen=True)
class Adversary:
    behavior: Behavior
    targets: frozenset = frozenset()  # message ids (hex) for selective_drop

    def to_json(self) -> dict:
        return {"behavior": self.behavior.value, "targets": sorted(self.targets)}


def _edge_key(i: int, j: int) -> tuple[int, int]:
    return (min(i, j), max(i, j))


@dataclass(frozen=True)
class SimConfig:
    topology: Topology
    delay_mean_s: float = 1.0
    loss_prob: float = 0.0
    forward_prob: float = 1.0
    adversaries: Mapping[int, Adversary] = field(default_factory=dict)
    fee_floor: int = 0
    rate_limit_per_s: Optional[float] = None
    seed: int = 0
    edge_delay_means: Mapping[tuple[int, int], float] = field(default_factory=dict)
    edge_loss: Mapping[tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self):
        # undirected overrides: store under (min, max) so lookups in either direction hit
        for name in ("edge_delay_means", "edge_loss"):
            table = {_edge_key(i, j): v for (i, j), v in getattr(self, name).items()}
            object.__setattr__(self, name, table)
        probs = [self.loss_prob, self.forward_prob, *self.edge_loss.values()]
        if any(not 0 <= p <= 1 for p in probs):
            raise ValueError("probabilities must lie in [0, 1]")
        if self.delay_mean_s <= 0 or any(m <= 0 for m in self.edge_delay_means.values()):
            raise ValueError("delay means must be positive")
        if self.rate_limit_per_s is not None and self.rate_limit_per_s <= 0:
            raise ValueError("rate limit must be positive")

    def delay_mean(self, i: int, j: int) -> float:
        return self.edge_delay_means.get(_edge_key(i, j), self.delay_mean_s)

    def loss(self, i: int, j: int) -> float:
        return self.edge_loss.get(_edge_key(i, j), self.loss_prob)

    def to_json(self) -> dict:
        return {
            "topology": self.topology.to_json(),
            "delay_mean_s": self.delay_mean_s,
            "loss_prob": self.loss_prob,
            "forward_prob": self.forward_prob,
            "adversaries": {str(k): v.to_json() for k, v in sorted(self.adversaries.items())},
            "fee_floor": self.fee_floor,
            "rate_limit_per_s": self.rate_limit_per_s,
            "seed": self.seed,
            "edge_delay_means": [[i, j, m] for (i, j), m in sorted(self.edge_delay_means.items())],
            "edge_loss": [[i, j, p] for (i, j), p in sorted(self.edge_loss.items())],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SimConfig":
        t = obj["topology"]
        topo = build_topology(t["kind"], int(t["n"]), t.get("degree"), t.get("rewire_p", 0.1),
                              int(t.get("seed", obj.get("seed", 0))))
        adversaries = {
            int(k): Adversary(Behavior(v["behavior"]), frozenset(v.get("targets", ())))
            for k, v in obj.get("adversaries", {}).items()
        }
        return cls(
            topology=topo,
            delay_mean_s=float(obj.get("delay_mean_s", 1.0)),
            loss_prob=float(obj.get("loss_prob", 0.0)),
            forward_prob=float(obj.get("forward_prob", 1.0)),
            adversaries=adversaries,
            fee_floor=int(obj.get("fee_floor", 0)),
            rate_limit_per_s=obj.get("rate_limit_per_s"),
            seed=int(obj.get("seed", 0)),
            edge_delay_means={_edge_key(int(i), int(j)): float(m) for i, j, m in obj.get("edge_delay_means", [])},
            edge_loss={_edge_key(int(i), int(j)): float(p) for i, j, p in obj.get("edge_loss", [])},
        )

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# -- messages ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Message:
    """Gossip payload: a transaction or a batch of headers, identified by content hash."""

    kind: str  # "transaction" | "headers"
    tx: Optional[Transaction] = None
    headers: tuple[BlockHeader, ...] = ()

    @property
    def id(self) -> str:
        if self.kind == "transaction":
            return self.tx.id.hex()
        return sha256d(b"".join(encode_header(h) for h in self.headers)).hex()

    @property
    def fee(self) -> Optional[int]:
        return self.tx.fee if self.kind == "transaction" else None

    def well_formed(self) -> bool:
        if self.kind == "transaction":
            return self.tx is not None
        prev = None
        for h in self.headers:
            hh = header_hash(h)
            try:
                if hash_to_int(hh) >= decode_compact(h.n_bits):
                    return False
            except CompactError:
                return False
            if prev is not None and h.prev_hash != prev:
                return False
            prev = hh
        return bool(self.headers)

    def tampered(self) -> "Message":
        """Copy with one byte of the first header's Merkle root flipped."""
        h = self.headers[0]
        root = bytes([h.merkle_root[0] ^ 0xFF]) + h.merkle_root[1:]
        first = BlockHeader(h.version, h.prev_hash, root, h.timestamp, h.n_bits, h.nonce)
        return Message("headers", None, (first,) + self.headers[1:])


@dataclass(frozen=True)
class Scenario:
    origin: int
    message: Message
    duration_s: float = math.inf


# -- events and traces ---------------------------------------------------------------

class EventKind(enum.Enum):
    SEND = "send"
    RECEIVE = "receive"
    VERIFY = "verify"
    DROP = "drop"


@dataclass(frozen=True)
class Event:
    time_s: float
    kind: EventKind
    node: int
    msg_id: str
    detail: str = ""

    def to_json(self) -> dict:
        return {"t": self.time_s, "kind": self.kind.value, "node": self.node,
                "msg": self.msg_id, "detail": self.detail}


@dataclass
class Trace:
    events: list[Event]
    inventories: dict[int, list[str]]
    origin: int
    origin_msg: str
    n_nodes: int

    def to_jsonl(self) -> str:
        lines = [json.dumps(e.to_json(), sort_keys=True) for e in self.events]
        lines.append(json.dumps({"inventories": {str(k): v for k, v in sorted(self.inventories.items())}},
                                sort_keys=True))
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_jsonl().encode()).hexdigest()


class KeyedRandom:
    """Counter-style uniform draws from a keyed hash."""

    def __init__(self, seed: int):
        self._key = seed.to_bytes(8, "little", signed=seed < 0)

    def uniform(self, *key) -> float:
        msg = "|".join(str(k) for k in key).encode()
        d = hashlib.blake2b(msg, digest_size=8, key=self._key).digest()
        # 53-bit mantissa in [0, 1)
        return (int.from_bytes(d, "little") >> 11) / float(1 << 53)

    def exponential(self, mean: float, *key) -> float:
        return -mean * math.log1p(-self.uniform(*key))


@dataclass
class _TokenBucket:
    capacity: float
    rate: float
    tokens: float
    last: float = 0.0

    def take(self, now: float) -> bool:
        self.tokens = min(self.capacity, self.tokens + (now - self.last) * self.rate)
        self.last = now
        if self.tokens >= 1:
            self.tokens -= 1
            return True
        return False


def run(config: SimConfig, scenario: Scenario) -> Trace:
    """Propagate one message from ``scenario.origin`` and record every event."""
    topo = config.topology
    if not 0 <= scenario.origin < topo.n_nodes:
        raise ValueError(f"origin {scenario.origin} is not a node")
    adj = topo.neighbors()
    rng = KeyedRandom(config.seed)
    events: list[Event] = []
    inventory: dict[int, set[str]] = {v: set() for v in range(topo.n_nodes)}
    rejected: dict[int, set[str]] = {v: set() for v in range(topo.n_nodes)}
    attempts: dict[tuple[int, int, str], int] = {}
    buckets = {}
    if config.rate_limit_per_s is not None:
        cap = config.rate_limit_per_s
        buckets = {v: _TokenBucket(cap, cap, cap) for v in range(topo.n_nodes)}
    messages: dict[str, Message] = {}
    queue: list = []
    seq = 0

    def forward(node: int, msg: Message, now: float, exclude: Optional[int]) -> None:
        nonlocal seq
        mid = msg.id
        fee = msg.fee
        if fee is not None and fee < config.fee_floor:
            events.append(Event(now, EventKind.DROP, node, mid, "fee_floor"))
            return
        for nb in adj[node]:
            if nb == exclude:
                continue
            if rng.uniform("fwd", node, nb, mid) >= config.forward_prob:
                continue
            if buckets and not buckets[node].take(now):
                events.append(Event(now, EventKind.DROP, node, mid, f"rate_limit to={nb}"))
                continue
            a = attempts.get((node, nb, mid), 0)
            attempts[(node, nb, mid)] = a + 1
            events.append(Event(now, EventKind.SEND, node, mid, f"to={nb}"))
            if rng.uniform("loss", node, nb, mid, a) < config.loss(node, nb):
                events.append(Event(now, EventKind.DROP, node, mid, f"loss to={nb}"))
                continue
            arrive = now + rng.exponential(config.delay_mean(node, nb), "delay", node, nb, mid, a)
            messages[mid] = msg
            heapq.heappush(queue, (arrive, nb, mid, seq, node))
            seq += 1

    def on_first_receipt(node: int, msg: Message, now: float, sender: Optional[int]) -> None:
        mid = msg.id
        adv = config.adversaries.get(node)
        if adv is not None:
            inventory[node].add(mid)
            if adv.behavior is Behavior.DROP_ALL or (
                adv.behavior is Behavior.SELECTIVE_DROP and mid in adv.targets
            ):
                events.append(Event(now, EventKind.DROP, node, mid, "adversary"))
                return
            if adv.behavior is Behavior.MODIFY_HEADERS and msg.kind == "headers":
                forward(node, msg.tampered(), now, sender)
                return
            forward(node, msg, now, sender)
            return
        if not msg.well_formed():
            rejected[node].add(mid)
            events.append(Event(now, EventKind.VERIFY, node, mid, "fail"))
            events.append(Event(now, EventKind.DROP, node, mid, "invalid"))
            return
        inventory[node].add(mid)
        events.append(Event(now, EventKind.VERIFY, node, mid, "ok"))
        forward(node, msg, now, sender)

    msg0 = scenario.message
    on_first_receipt(scenario.origin, msg0, 0.0, None)
    while queue:
        now, node, mid, _, sender = heapq.heappop(queue)
        if now > scenario.duration_s:
            break
        events.append(Event(now, EventKind.RECEIVE, node, mid, f"from={sender}"))
        if mid in inventory[node] or mid in rejected[node]:
            events.append(Event(now, EventKind.DROP, node, mid, "duplicate"))
            continue
        on_first_receipt(node, messages[mid], now, sender)

    return Trace(events, {v: sorted(inv) for v, inv in inventory.items()},
                 scenario.origin, msg0.id, topo.n_nodes)


# -- metrics ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Metrics:
    propagation_delay_s: float
    redundancy: int
    delivery_fraction: float
    first_receipt: dict = field(default_factory=dict)

    def row(self, config_hash: str = "") -> dict:
        return {"config_hash": config_hash, "tau_s": self.propagation_delay_s,
                "redundancy": self.redundancy, "delivery": self.delivery_fraction}


METRIC_COLUMNS = ("config_hash", "tau_s", "redundancy", "delivery")


def measure(trace: Trace, honest_set: Optional[Iterable[int]] = None) -> Metrics:
    """Delay, transmissions and delivery for the scenario's original message.

    A node counts as delivered once it has verified the original message.
    Adversarial nodes never verify, so with the default ``honest_set`` (all
    nodes) delivery is measured network-wide.
    """
    honest = set(range(trace.n_nodes)) if honest_set is None else set(honest_set)
    mid = trace.origin_msg
    first: dict[int, float] = {}
    sends = 0
    t0 = 0.0
    for e in trace.events:
        if e.msg_id != mid:
            continue
        if e.kind is EventKind.SEND:
            sends += 1
        elif e.kind is EventKind.VERIFY and e.detail == "ok" and e.node not in first:
            first[e.node] = e.time_s
    delivered = {v: t for v, t in first.items() if v in honest}
    tau = max((t - t0 for t in delivered.values()), default=0.0)
    frac = len(delivered) / len(honest) if honest else 1.0
    return Metrics(tau, sends, frac, dict(sorted(first.items())))


def sweep(configs: Sequence[SimConfig], scenario: Scenario) -> list[dict]:
    return [measure(run(c, scenario)).row(c.digest()) for c in configs]


def rows_to_csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r[k] for k in columns})
    return buf.getvalue()


def median_delay(kind: str, n: int, seeds: Iterable[int], degree: Optional[int] = None,
                 forward_prob: float = 1.0, origin: int = 0, delay_mean_s: float = 1.0) -> float:
    """Median propagation delay of a transaction over a family of seeds."""
    taus = []
    for s in seeds:
        topo = build_topology(kind, n, degree, seed=s)
        cfg = SimConfig(topo, delay_mean_s=delay_mean_s, forward_prob=forward_prob, seed=s)
        msg = Message("transaction", tx=Transaction(fee=1, lock_time=s))
        taus.append(measure(run(cfg, Scenario(origin, msg))).propagation_delay_s)
    return float(np.median(taus))


# -- scenario files ----------------------------------------------------------------------

def scenario_from_json(obj: dict, seed: int = 0) -> Scenario:
    """``{"origin", "message": {"kind": "transaction", "fee"} | {"kind": "headers", "count"}, "duration_s"}``."""
    m = obj.get("message", {"kind": "transaction"})
    if m["kind"] == "transaction":
        msg = Message("transaction", tx=Transaction(fee=int(m.get("fee", 1)), lock_time=int(m.get("nonce", seed))))
    elif m["kind"] == "headers":
        fx = make_chain(int(m.get("count", 2)), 1, int(m.get("n_bits", REGTEST_BITS)), seed, with_pos=False)
        msg = Message("headers", headers=tuple(fx.headers))
    else:
        raise ValueError(f"unknown message kind {m['kind']!r}")
    duration = obj.get("duration_s")
    return Scenario(int(obj.get("origin", 0)), msg, math.inf if duration is None else float(duration))
