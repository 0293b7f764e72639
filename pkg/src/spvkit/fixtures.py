"""Deterministic fixture chains mined against an easy target.

Headers carry real proof-of-work: the nonce is searched until the header
hash falls below the target, so tests exercise the same checks as live data.
"""
from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .client import ProofBundle
from .headers import (
    ZERO_HASH,
    BlockHeader,
    ChainParams,
    decode_compact,
    hash_to_int,
    header_hash,
)
from .merkle import Hash, MerkleTree, prove, tree_from_leaf_hashes
from .tx import Transaction, TxInput, TxOutput, hashlock

REGTEST_BITS = 0x207FFFFF  # about one hash in two succeeds
EASY_BITS = 0x2000FFFF  # about one in 256
MODERATE_BITS = 0x1F00FFFF  # about one in 65536
GENESIS_TIME = 1_700_000_000
DEFAULT_SPACING_S = 600
DEFAULT_MAX_ITER = 1 << 22


class MiningExhausted(RuntimeError):
    pass


def mine_header(version: int, prev_hash: Hash, merkle_root: Hash, timestamp: int, n_bits: int,
                max_iter: int = DEFAULT_MAX_ITER, start_nonce: int = 0) -> BlockHeader:
    target = decode_compact(n_bits)
    for nonce in range(start_nonce, min(start_nonce + max_iter, 1 << 32)):
        h = BlockHeader(version, prev_hash, merkle_root, timestamp, n_bits, nonce)
        if hash_to_int(header_hash(h)) < target:
            return h
    raise MiningExhausted(f"no nonce below target {n_bits:#010x} within {max_iter} attempts")


def mine_on(prev: Optional[BlockHeader], merkle_roots: Sequence[Hash], n_bits: int,
            spacing_s: int = DEFAULT_SPACING_S, max_iter: int = DEFAULT_MAX_ITER,
            version: int = 1) -> list[BlockHeader]:
    """Mine one header per Merkle root, linked after ``prev`` (``None`` starts a genesis)."""
    out = []
    prev_hash = ZERO_HASH if prev is None else header_hash(prev)
    ts = GENESIS_TIME if prev is None else prev.timestamp + spacing_s
    for root in merkle_roots:
        h = mine_header(version, prev_hash, root, ts, n_bits, max_iter)
        out.append(h)
        prev_hash = header_hash(h)
        ts += spacing_s
    return out


def block_tree(txs: Sequence[Transaction]) -> MerkleTree:
    return tree_from_leaf_hashes(tx.id for tx in txs)


def _secret(seed: int, label: str) -> bytes:
    return hashlib.sha256(f"spvkit-fixture/{seed}/{label}".encode()).digest()


def random_transaction(rng: random.Random, label: str = "") -> Transaction:
    parent = rng.randbytes(32)
    secret = rng.randbytes(16)
    return Transaction(
        inputs=(TxInput(parent, rng.randrange(4), rng.randbytes(16)),),
        outputs=(TxOutput(rng.randrange(1, 10**8), hashlock(secret)),),
        lock_time=0,
        fee=rng.randrange(0, 5000),
    )


@dataclass
class PointOfSale:
    """Two funding transactions and a payment spending one output of each."""

    tx1: Transaction
    tx2: Transaction
    tx3: Transaction
    secret1: bytes
    secret2: bytes


def point_of_sale(seed: int) -> PointOfSale:
    s1, s2 = _secret(seed, "tx1"), _secret(seed, "tx2")
    merchant = _secret(seed, "merchant")
    tx1 = Transaction(
        inputs=(TxInput(_secret(seed, "funding1"), 0, b""),),
        outputs=(TxOutput(5_000, hashlock(s1)),),
        fee=100,
    )
    tx2 = Transaction(
        inputs=(TxInput(_secret(seed, "funding2"), 0, b""),),
        outputs=(TxOutput(3_000, hashlock(s2)),),
        fee=100,
    )
    tx3 = Transaction(
        inputs=(TxInput(tx1.id, 0, s1), TxInput(tx2.id, 0, s2)),
        outputs=(TxOutput(7_500, hashlock(merchant)),),
        fee=500,
    )
    return PointOfSale(tx1, tx2, tx3, s1, s2)


@dataclass
class FixtureChain:
    headers: list[BlockHeader]
    blocks: list[list[Transaction]]
    params: ChainParams
    seed: int
    pos: Optional[PointOfSale] = None
    pos_blocks: tuple[int, int] = (0, 0)
    trees: list[MerkleTree] = field(default_factory=list)

    def proof_for(self, block: int, index: int):
        return prove(self.trees[block], index)

    def locate(self, txid: Hash) -> tuple[int, int]:
        for b, txs in enumerate(self.blocks):
            for i, tx in enumerate(txs):
                if tx.id == txid:
                    return b, i
        raise KeyError(txid.hex())

    def bundle(self) -> ProofBundle:
        """Payment from the point-of-sale scenario with proofs for both parents."""
        if self.pos is None:
            raise ValueError("fixture was built without a point-of-sale scenario")
        proofs = []
        for parent in (self.pos.tx1, self.pos.tx2):
            b, i = self.locate(parent.id)
            proofs.append((self.proof_for(b, i), b))
        return ProofBundle(self.pos.tx3, (self.pos.tx1, self.pos.tx2), tuple(proofs))


def make_chain(n_blocks: int, txs_per_block: int = 4, n_bits: int = REGTEST_BITS, seed: int = 0,
               spacing_s: int = DEFAULT_SPACING_S, max_iter: int = DEFAULT_MAX_ITER,
               with_pos: bool = True) -> FixtureChain:
    """Mine ``n_blocks`` headers over seeded random transactions.

    With ``with_pos`` the funding transactions of :func:`point_of_sale` are
    placed in blocks 1 and 2 (clamped to the chain length).
    """
    if n_blocks < 1 or txs_per_block < 1:
        raise ValueError("need at least one block and one transaction per block")
    rng = random.Random(seed)
    blocks = [[random_transaction(rng) for _ in range(txs_per_block)] for _ in range(n_blocks)]
    pos = None
    pos_blocks = (0, 0)
    if with_pos:
        pos = point_of_sale(seed)
        b1, b2 = min(1, n_blocks - 1), min(2, n_blocks - 1)
        i1 = rng.randrange(txs_per_block)
        i2 = rng.randrange(txs_per_block)
        if b1 == b2 and i1 == i2:
            if txs_per_block == 1:
                blocks[b2].append(pos.tx2)
                i2 = len(blocks[b2]) - 1
            else:
                i2 = (i1 + 1) % txs_per_block
        blocks[b1][i1] = pos.tx1
        if blocks[b2][i2] is not pos.tx2:
            blocks[b2][i2] = pos.tx2
        pos_blocks = (b1, b2)
    trees = [block_tree(txs) for txs in blocks]
    headers = mine_on(None, [t.root for t in trees], n_bits, spacing_s, max_iter)
    return FixtureChain(headers, blocks, ChainParams.from_bits(n_bits), seed, pos, pos_blocks, trees)
