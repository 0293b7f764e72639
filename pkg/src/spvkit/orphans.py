"""Bounded orphan buffer with TTL expiry and a parent -> child dependency graph."""
from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .merkle import Hash
from .tx import Transaction

DEFAULT_TTL_S = 600.0
DEFAULT_MAX_DEPTH = 25
DEFAULT_MAX_SIZE = 10_000


class OrphanOutcome(enum.Enum):
    BUFFERED = "buffered"
    PROMOTED = "promoted"
    DUPLICATE = "duplicate"
    BUFFER_FULL = "buffer_full"
    DEPTH_EXCEEDED = "depth_exceeded"
    INVALID = "invalid"


@dataclass
class OrphanEntry:
    tx: Transaction
    arrival_s: float
    unresolved: set[Hash]


@dataclass
class OrphanReport:
    outcome: Optional[OrphanOutcome] = None
    promoted: list[Hash] = field(default_factory=list)
    invalid: list[Hash] = field(default_factory=list)
    evicted: list[Hash] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "outcome": self.outcome.value if self.outcome else None,
            "promoted": [h.hex() for h in self.promoted],
            "invalid": [h.hex() for h in self.invalid],
            "evicted": [h.hex() for h in self.evicted],
        }


@dataclass
class OrphanBuffer:
    ttl_s: float = DEFAULT_TTL_S
    max_depth: int = DEFAULT_MAX_DEPTH
    max_size: int = DEFAULT_MAX_SIZE
    entries: dict[Hash, OrphanEntry] = field(default_factory=dict)
    # parent id -> ids of buffered children waiting on it
    children: dict[Hash, set[Hash]] = field(default_factory=lambda: defaultdict(set))

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, txid: Hash) -> bool:
        return txid in self.entries

    def depth(self, txid: Hash) -> int:
        """Length of the longest chain of pending ancestors ending at ``txid``."""
        memo: dict[Hash, int] = {}

        def go(t: Hash) -> int:
            if t in memo:
                return memo[t]
            entry = self.entries.get(t)
            if entry is None:
                return 0
            memo[t] = 1 + max((go(p) for p in entry.unresolved), default=0)
            return memo[t]

        return go(txid)

    def pending_depth(self, tx: Transaction, unresolved: Iterable[Hash]) -> int:
        return 1 + max((self.depth(p) for p in unresolved), default=0)

    def add(self, tx: Transaction, unresolved: set[Hash], now_s: float) -> OrphanOutcome:
        txid = tx.id
        if txid in self.entries:
            return OrphanOutcome.DUPLICATE
        if self.pending_depth(tx, unresolved) > self.max_depth:
            return OrphanOutcome.DEPTH_EXCEEDED
        if len(self.entries) >= self.max_size:
            return OrphanOutcome.BUFFER_FULL
        self.entries[txid] = OrphanEntry(tx, now_s, set(unresolved))
        for p in unresolved:
            self.children[p].add(txid)
        return OrphanOutcome.BUFFERED

    def remove(self, txid: Hash) -> Optional[OrphanEntry]:
        entry = self.entries.pop(txid, None)
        if entry is None:
            return None
        for p in entry.unresolved:
            kids = self.children.get(p)
            if kids is not None:
                kids.discard(txid)
                if not kids:
                    del self.children[p]
        return entry

    def resolve(self, known_id: Hash, on_ready: Callable[[Transaction], bool]) -> tuple[list[Hash], list[Hash]]:
        """Mark ``known_id`` as available and promote every descendant that becomes complete.

        ``on_ready`` re-verifies a complete orphan and returns whether it is
        valid; valid ones become known in turn, so resolution cascades.
        Returns ``(promoted, invalid)`` in processing order.
        """
        promoted: list[Hash] = []
        invalid: list[Hash] = []
        queue = [known_id]
        while queue:
            parent = queue.pop(0)
            for child in sorted(self.children.pop(parent, ())):
                entry = self.entries.get(child)
                if entry is None:
                    continue
                entry.unresolved.discard(parent)
                if entry.unresolved:
                    continue
                self.remove(child)
                if on_ready(entry.tx):
                    promoted.append(child)
                    queue.append(child)
                else:
                    invalid.append(child)
        return promoted, invalid

    def expire(self, now_s: float) -> list[Hash]:
        stale = sorted(t for t, e in self.entries.items() if e.arrival_s + self.ttl_s < now_s)
        for t in stale:
            self.remove(t)
        return stale
