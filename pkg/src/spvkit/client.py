"""SPV client state machine.

A :class:`ClientState` holds the header chain, the stored inclusion proofs and
the per-transaction verdicts.  Mutating operations (``ingest_headers``,
``verify_spv``, ``accept_transaction``, ``orphan_submit``, ``orphan_tick``)
update the state in place and return a report; take a :meth:`ClientState.snapshot`
first if the previous state is needed.  Queries never touch the network.
"""
from __future__ import annotations

import copy
import enum
import math
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .headers import (
    BlockHeader,
    ChainParams,
    HeaderChain,
    ValidationVerdict,
    extend_chain,
    header_hash,
    is_consistent,
)
from .merkle import Hash, IndexOutOfRange, MerkleProof, verify_proof
from .orphans import (
    DEFAULT_MAX_DEPTH,
    DEFAULT_MAX_SIZE,
    DEFAULT_TTL_S,
    OrphanBuffer,
    OrphanOutcome,
    OrphanReport,
)
from .tx import LockChecker, Transaction, hashlock_checker

DEFAULT_ANOMALY_WINDOW = 32
DEFAULT_FINALITY_DEPTH = 6


class InvalidGenesis(ValueError):
    pass


@dataclass(frozen=True)
class ClientConfig:
    params: ChainParams
    anomaly_window: int = DEFAULT_ANOMALY_WINDOW
    finality_depth: int = DEFAULT_FINALITY_DEPTH
    orphan_ttl_s: float = DEFAULT_TTL_S
    orphan_max_depth: int = DEFAULT_MAX_DEPTH
    orphan_max_size: int = DEFAULT_MAX_SIZE
    lock_checker: LockChecker = hashlock_checker


@dataclass
class ClientState:
    config: ClientConfig
    chain: HeaderChain
    proofs: dict[Hash, tuple[MerkleProof, int]] = field(default_factory=dict)
    verdicts: dict[Hash, Optional[bool]] = field(default_factory=dict)
    orphans: OrphanBuffer = field(default_factory=OrphanBuffer)
    recent_tips: deque = field(default_factory=deque)
    # transactions whose outputs may be spent: id -> body (None when only the id is proven)
    known_txs: dict[Hash, Optional[Transaction]] = field(default_factory=dict)
    height_of: dict[Hash, int] = field(default_factory=dict)

    @property
    def height(self) -> int:
        return self.chain.height

    def snapshot(self) -> "ClientState":
        return copy.deepcopy(self)

    def _set_chain(self, chain: HeaderChain) -> None:
        self.chain = chain
        self.height_of = {h: i for i, h in enumerate(chain.hashes)}


def init_client(genesis: BlockHeader, config: ClientConfig) -> ClientState:
    chain, verdicts = extend_chain(HeaderChain(), [genesis], config.params)
    if len(chain) != 1:
        raise InvalidGenesis(f"genesis rejected: {verdicts[0].value}")
    state = ClientState(
        config=config,
        chain=chain,
        orphans=OrphanBuffer(config.orphan_ttl_s, config.orphan_max_depth, config.orphan_max_size),
        recent_tips=deque(maxlen=config.anomaly_window),
    )
    state._set_chain(chain)
    state.recent_tips.append(chain.tip_hash)
    return state


# -- header ingestion -------------------------------------------------------------

@dataclass
class IngestReport:
    appended: int = 0
    verdicts: list[ValidationVerdict] = field(default_factory=list)
    skipped_known: int = 0
    reorg_depth: int = 0
    rejected_branch: Optional[str] = None
    unconnected: bool = False
    rollback_anomaly: bool = False
    reverted: list[Hash] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "appended": self.appended,
            "verdicts": [v.value for v in self.verdicts],
            "skipped_known": self.skipped_known,
            "reorg_depth": self.reorg_depth,
            "rejected_branch": self.rejected_branch,
            "unconnected": self.unconnected,
            "rollback_anomaly": self.rollback_anomaly,
            "reverted": [t.hex() for t in self.reverted],
        }


def ingest_headers(state: ClientState, incoming: Sequence[BlockHeader]) -> IngestReport:
    """Extend the chain or switch to a heavier consistent branch.

    Extensions of the current tip keep the valid prefix of ``incoming``.  A
    branch forking below the tip is taken only whole: every header valid, the
    result consistent, and cumulative work strictly greater than the current
    chain.  Verdicts of transactions in displaced blocks revert to ``None``.
    """
    report = IngestReport()
    incoming = list(incoming)
    while incoming and header_hash(incoming[0]) in state.height_of:
        incoming.pop(0)
        report.skipped_known += 1

    if incoming:
        attach = incoming[0].prev_hash
        params = state.config.params
        if attach == state.chain.tip_hash:
            before = len(state.chain)
            chain, report.verdicts = extend_chain(state.chain, incoming, params)
            state._set_chain(chain)
            report.appended = len(chain) - before
        elif attach in state.height_of:
            fork = state.height_of[attach]
            candidate, report.verdicts = extend_chain(state.chain.truncated(fork + 1), incoming, params)
            if len(candidate) - (fork + 1) < len(incoming):
                report.rejected_branch = "invalid_header"
            elif not is_consistent(candidate):
                report.rejected_branch = "inconsistent"
            elif candidate.work <= state.chain.work:
                report.rejected_branch = "insufficient_work"
            else:
                report.reorg_depth = len(state.chain) - (fork + 1)
                report.appended = len(incoming)
                report.reverted = _revert_above(state, fork)
                state._set_chain(candidate)
        else:
            report.unconnected = True

    report.rollback_anomaly = any(h not in state.height_of for h in state.recent_tips)
    if not state.recent_tips or state.recent_tips[-1] != state.chain.tip_hash:
        state.recent_tips.append(state.chain.tip_hash)
    return report


def _revert_above(state: ClientState, fork_height: int) -> list[Hash]:
    reverted = sorted(t for t, (_, k) in state.proofs.items() if k > fork_height)
    for t in reverted:
        del state.proofs[t]
        state.verdicts[t] = None
    return reverted


# -- transaction verification --------------------------------------------------------

def verify_spv(state: ClientState, tx_id: Hash, proof: MerkleProof, block_index: int) -> bool:
    """Fold ``tx_id`` through ``proof`` and compare with the block's Merkle root.

    No signature or script evaluation happens here.  A successful check is
    stored; a failed one never overrides an earlier success.
    """
    if not 0 <= block_index < len(state.chain):
        raise IndexOutOfRange(f"block index {block_index} outside chain of {len(state.chain)}")
    ok = verify_proof(tx_id, proof, state.chain[block_index].merkle_root)
    if ok:
        state.proofs[tx_id] = (proof, block_index)
        state.verdicts[tx_id] = True
        _make_known(state, tx_id, None)
    elif state.verdicts.get(tx_id) is not True:
        state.verdicts[tx_id] = False
    return ok


def local_validation_holds(state: ClientState) -> bool:
    """Every ``True`` verdict is backed by a stored proof that verifies against the chain."""
    for txid, verdict in state.verdicts.items():
        if verdict is not True:
            continue
        entry = state.proofs.get(txid)
        if entry is None:
            return False
        proof, k = entry
        if k >= len(state.chain) or not verify_proof(txid, proof, state.chain[k].merkle_root):
            return False
    return True


def confirmations(state: ClientState, tx_id: Hash) -> int:
    entry = state.proofs.get(tx_id)
    if entry is None:
        return 0
    proof, k = entry
    if k >= len(state.chain) or not verify_proof(tx_id, proof, state.chain[k].merkle_root):
        return 0
    return state.chain.height - k + 1


def is_final(state: ClientState, tx_id: Hash, depth: Optional[int] = None) -> bool:
    d = state.config.finality_depth if depth is None else depth
    return confirmations(state, tx_id) >= d


class AcceptMode(enum.Enum):
    INCLUSION_ONLY = "inclusion_only"
    STRICT = "strict"


class Failure(enum.Enum):
    MALFORMED_BUNDLE = "MalformedBundle"
    PARENT_INCLUSION = "ParentInclusion"
    MISSING_PARENT_OUTPUT = "MissingParentOutput"
    BAD_WITNESS = "BadWitness"
    LOCAL_DOUBLE_SPEND = "LocalDoubleSpend"


@dataclass(frozen=True)
class ProofBundle:
    payment: Transaction
    parents: tuple[Transaction, ...]
    parent_proofs: tuple[tuple[MerkleProof, int], ...]

    def to_json(self) -> dict:
        return {
            "payment": self.payment.to_hex(),
            "parents": [p.to_hex() for p in self.parents],
            "parent_proofs": [
                {"proof": proof.to_json(), "block_index": k} for proof, k in self.parent_proofs
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ProofBundle":
        try:
            return cls(
                Transaction.from_hex(obj["payment"]),
                tuple(Transaction.from_hex(p) for p in obj["parents"]),
                tuple(
                    (MerkleProof.from_json(pp["proof"]), int(pp["block_index"]))
                    for pp in obj["parent_proofs"]
                ),
            )
        except (KeyError, TypeError, AttributeError) as exc:
            raise ValueError(f"malformed bundle: {exc!r}") from exc


@dataclass(frozen=True)
class Check:
    name: str
    subject: int
    ok: bool


@dataclass
class Decision:
    accepted: bool
    mode: AcceptMode
    checks: list[Check] = field(default_factory=list)
    failures: list[Failure] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "accepted": self.accepted,
            "mode": self.mode.value,
            "checks": [{"check": c.name, "subject": c.subject, "ok": c.ok} for c in self.checks],
            "failures": [f.value for f in self.failures],
        }


def accept_transaction(state: ClientState, bundle: ProofBundle, mode: AcceptMode | str = AcceptMode.STRICT) -> Decision:
    """Decide whether to accept a payment given proofs for the transactions it spends.

    ``inclusion_only`` checks only that each parent is proven into the chain.
    ``strict`` also requires every input to point at an existing parent
    output, its witness to satisfy that output's lock, and no output to be
    spent twice inside the bundle.  Spends elsewhere on the network are
    invisible to an SPV client and are not checked.
    """
    mode = AcceptMode(mode)
    checks: list[Check] = []
    failures: list[Failure] = []

    def fail(f: Failure) -> None:
        if f not in failures:
            failures.append(f)

    if len(bundle.parents) != len(bundle.parent_proofs):
        fail(Failure.MALFORMED_BUNDLE)
    for i, (parent, (proof, k)) in enumerate(zip(bundle.parents, bundle.parent_proofs)):
        ok = 0 <= k < len(state.chain) and verify_spv(state, parent.id, proof, k)
        checks.append(Check("parent_inclusion", i, ok))
        if not ok:
            fail(Failure.PARENT_INCLUSION)

    if mode is AcceptMode.STRICT:
        by_id = {p.id: p for p in bundle.parents}
        spent = set()
        for j, inp in enumerate(bundle.payment.inputs):
            parent = by_id.get(inp.parent_txid)
            exists = parent is not None and 0 <= inp.output_index < len(parent.outputs)
            checks.append(Check("output_exists", j, exists))
            if not exists:
                fail(Failure.MISSING_PARENT_OUTPUT)
                continue
            lock = parent.outputs[inp.output_index].lock_condition
            unlocked = bool(state.config.lock_checker(lock, inp.unlock_witness))
            checks.append(Check("witness", j, unlocked))
            if not unlocked:
                fail(Failure.BAD_WITNESS)
            key = (inp.parent_txid, inp.output_index)
            unique = key not in spent
            spent.add(key)
            checks.append(Check("local_double_spend", j, unique))
            if not unique:
                fail(Failure.LOCAL_DOUBLE_SPEND)

    decision = Decision(not failures, mode, checks, failures)
    if decision.accepted:
        for p in bundle.parents:
            state.known_txs[p.id] = p
        _make_known(state, bundle.payment.id, bundle.payment)
    return decision


# -- orphans ----------------------------------------------------------------

def _inputs_valid(state: ClientState, tx: Transaction) -> bool:
    for inp in tx.inputs:
        parent = state.known_txs.get(inp.parent_txid)
        if parent is None:
            # proven by id only; outputs unavailable for checking
            continue
        if not 0 <= inp.output_index < len(parent.outputs):
            return False
        if not state.config.lock_checker(parent.outputs[inp.output_index].lock_condition, inp.unlock_witness):
            return False
    return True


def _make_known(state: ClientState, txid: Hash, body: Optional[Transaction]) -> tuple[list[Hash], list[Hash]]:
    if state.known_txs.get(txid) is None:
        state.known_txs[txid] = body

    def ready(tx: Transaction) -> bool:
        if _inputs_valid(state, tx):
            state.known_txs[tx.id] = tx
            return True
        return False

    return state.orphans.resolve(txid, ready)


def orphan_submit(state: ClientState, tx: Transaction, now_s: float) -> OrphanReport:
    report = OrphanReport()
    txid = tx.id
    if txid in state.known_txs or txid in state.orphans:
        report.outcome = OrphanOutcome.DUPLICATE
        return report
    unresolved = {p for p in tx.parent_ids if p not in state.known_txs}
    if unresolved:
        report.outcome = state.orphans.add(tx, unresolved, now_s)
        return report
    if not _inputs_valid(state, tx):
        report.outcome = OrphanOutcome.INVALID
        report.invalid.append(txid)
        return report
    report.outcome = OrphanOutcome.PROMOTED
    report.promoted.append(txid)
    promoted, invalid = _make_known(state, txid, tx)
    report.promoted += promoted
    report.invalid += invalid
    return report


def orphan_tick(state: ClientState, now_s: float) -> OrphanReport:
    return OrphanReport(evicted=state.orphans.expire(now_s))


# -- polling, discovery, divergence ----------------------------------------------------

@dataclass(frozen=True)
class PollParams:
    tau_min_s: float = 60.0
    tau_max_s: float = 3600.0
    kappa: float = 1.0
    lambda_weight: float = 0.0
    window_w: int = 16

    def __post_init__(self):
        if not 0 < self.tau_min_s <= self.tau_max_s:
            raise ValueError("need 0 < tau_min <= tau_max")
        if self.window_w < 2:
            raise ValueError("window must hold at least two samples")


def next_poll_interval(samples: Sequence[float], params: PollParams) -> float:
    recent = np.asarray(samples[-params.window_w:], dtype=float)
    if recent.size < 2:
        return params.tau_max_s
    mean = recent.mean()
    var = recent.var(ddof=1)
    tau = params.kappa * mean + params.lambda_weight * math.sqrt(var)
    return float(min(params.tau_max_s, max(params.tau_min_s, tau)))


def discover_peers(
    seeds: Iterable[Hashable],
    address_oracle: Callable[[Hashable], Iterable[Hashable]],
    max_depth: int,
    max_per_round: int,
) -> set:
    """Breadth-first closure of ``address_oracle`` from ``seeds``.

    Each round admits at most ``max_per_round`` new peers, taken in sorted
    order, and at most ``max_depth`` rounds run after the seeds.
    """
    found = set(seeds)
    if not found:
        raise ValueError("at least one seed is required")
    frontier = sorted(found)
    for _ in range(max_depth):
        fresh = set()
        for peer in frontier:
            fresh.update(a for a in address_oracle(peer) if a not in found)
        frontier = sorted(fresh)[:max_per_round]
        if not frontier:
            break
        found.update(frontier)
    return found


@dataclass(frozen=True)
class DivergenceAlert:
    diverged: bool
    first_divergence: Optional[int]
    majority_tip: Optional[Hash]
    dissenters: tuple = ()


def detect_divergence(views: Mapping[Hashable, Sequence[BlockHeader]]) -> DivergenceAlert:
    """Compare peers' header views; report only, never reject.

    ``first_divergence`` is the lowest height at which two views hold
    different headers.  ``majority_tip`` needs strictly more than half of the
    views; peers off that tip are dissenters (none when there is no majority).
    """
    if not views:
        raise ValueError("need at least one view")
    hashes = {peer: [header_hash(h) for h in hs] for peer, hs in views.items()}
    first = None
    for i in range(max(len(v) for v in hashes.values())):
        if len({v[i] for v in hashes.values() if len(v) > i}) > 1:
            first = i
            break
    tips = {peer: (v[-1] if v else b"") for peer, v in hashes.items()}
    tip, count = Counter(tips.values()).most_common(1)[0]
    majority = tip if count * 2 > len(tips) else None
    dissenters = tuple(sorted(p for p, t in tips.items() if majority is not None and t != majority))
    diverged = first is not None or len(set(tips.values())) > 1
    return DivergenceAlert(diverged, first, majority, dissenters)
