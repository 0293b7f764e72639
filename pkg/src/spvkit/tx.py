"""Toy transactions with a canonical byte encoding and a pluggable lock check.

Canonical encoding (all integers little-endian)::

    u32 n_inputs
      n_inputs x [ 32B parent_txid | u32 output_index | u32 len | witness ]
    u32 n_outputs
      n_outputs x [ u64 value | u32 len | lock_condition ]
    u32 lock_time
    u64 fee

The transaction id is the Merkle leaf hash of that encoding, so ids are
domain-separated from internal tree nodes.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Callable

from .merkle import Hash, leaf_hash

LockChecker = Callable[[bytes, bytes], bool]


@dataclass(frozen=True)
class TxInput:
    parent_txid: Hash
    output_index: int
    unlock_witness: bytes = b""


@dataclass(frozen=True)
class TxOutput:
    value: int
    lock_condition: bytes = b""


@dataclass(frozen=True)
class Transaction:
    inputs: tuple[TxInput, ...] = ()
    outputs: tuple[TxOutput, ...] = ()
    lock_time: int = 0
    fee: int = 0

    def __post_init__(self):
        if self.fee < 0:
            raise ValueError("fee must be non-negative")

    def encode(self) -> bytes:
        parts = [struct.pack("<I", len(self.inputs))]
        for i in self.inputs:
            if len(i.parent_txid) != 32:
                raise ValueError("parent txid must be 32 bytes")
            parts.append(i.parent_txid)
            parts.append(struct.pack("<II", i.output_index, len(i.unlock_witness)))
            parts.append(i.unlock_witness)
        parts.append(struct.pack("<I", len(self.outputs)))
        for o in self.outputs:
            parts.append(struct.pack("<QI", o.value, len(o.lock_condition)))
            parts.append(o.lock_condition)
        parts.append(struct.pack("<IQ", self.lock_time, self.fee))
        return b"".join(parts)

    @property
    def id(self) -> Hash:
        return leaf_hash(self.encode())

    @property
    def parent_ids(self) -> tuple[Hash, ...]:
        return tuple(dict.fromkeys(i.parent_txid for i in self.inputs))

    def to_hex(self) -> str:
        return self.encode().hex()

    @classmethod
    def from_hex(cls, text: str) -> "Transaction":
        return decode_transaction(bytes.fromhex(text))


def decode_transaction(data: bytes) -> Transaction:
    """Parse the canonical encoding; raises ``ValueError`` on truncation or trailing bytes."""
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise ValueError("truncated transaction encoding")
        out = data[pos:pos + n]
        pos += n
        return out

    try:
        (n_in,) = struct.unpack("<I", take(4))
        inputs = []
        for _ in range(n_in):
            parent = take(32)
            idx, wlen = struct.unpack("<II", take(8))
            inputs.append(TxInput(parent, idx, take(wlen)))
        (n_out,) = struct.unpack("<I", take(4))
        outputs = []
        for _ in range(n_out):
            value, llen = struct.unpack("<QI", take(12))
            outputs.append(TxOutput(value, take(llen)))
        lock_time, fee = struct.unpack("<IQ", take(12))
    except struct.error as exc:
        raise ValueError(str(exc)) from exc
    if pos != len(data):
        raise ValueError("trailing bytes after transaction")
    return Transaction(tuple(inputs), tuple(outputs), lock_time, fee)


def hashlock(secret: bytes) -> bytes:
    """Lock condition that is satisfied by revealing ``secret``."""
    return hashlib.sha256(secret).digest()


def hashlock_checker(lock_condition: bytes, witness: bytes) -> bool:
    return hashlib.sha256(witness).digest() == lock_condition
