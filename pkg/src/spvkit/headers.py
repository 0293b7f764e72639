"""Block headers: codec, compact targets, proof-of-work checks and chain selection.

Hashes and targets are compared as 256-bit *big-endian* integers.  Cumulative
work is ``sum(2**256 // target)`` with exact integer arithmetic.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .merkle import (
    Hash,
    MerkleProof,
    MerkleTree,
    build_tree,
    leaf_hash,
    node_hash,
    prove,
    sha256d,
    verify_proof,
)

HEADER_SIZE = 80
ZERO_HASH = bytes(32)
RETARGET_WINDOW = 2016
TARGET_SPACING_S = 600
RETARGET_CLAMP = 4

_HEADER_FMT = struct.Struct("<i32s32sIII")


class WrongLength(ValueError):
    pass


class CompactError(ValueError):
    pass


class ZeroTarget(CompactError):
    pass


class TargetOverflow(CompactError):
    pass


class NoConsistentCandidate(ValueError):
    pass


@dataclass(frozen=True)
class BlockHeader:
    version: int
    prev_hash: Hash
    merkle_root: Hash
    timestamp: int
    n_bits: int
    nonce: int

    def encode(self) -> bytes:
        return encode_header(self)

    @property
    def hash(self) -> Hash:
        return header_hash(self)

    def to_json(self) -> dict:
        return {
            "version": self.version,
            "prev_hash": self.prev_hash.hex(),
            "merkle_root": self.merkle_root.hex(),
            "timestamp": self.timestamp,
            "n_bits": f"{self.n_bits:08x}",
            "nonce": self.nonce,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BlockHeader":
        return cls(
            int(obj["version"]),
            bytes.fromhex(obj["prev_hash"]),
            bytes.fromhex(obj["merkle_root"]),
            int(obj["timestamp"]),
            int(obj["n_bits"], 16),
            int(obj["nonce"]),
        )


def encode_header(h: BlockHeader) -> bytes:
    if len(h.prev_hash) != 32 or len(h.merkle_root) != 32:
        raise WrongLength("header hash fields must be 32 bytes")
    return _HEADER_FMT.pack(h.version, h.prev_hash, h.merkle_root, h.timestamp, h.n_bits, h.nonce)


def decode_header(data: bytes) -> BlockHeader:
    if len(data) != HEADER_SIZE:
        raise WrongLength(f"header must be {HEADER_SIZE} bytes, got {len(data)}")
    return BlockHeader(*_HEADER_FMT.unpack(bytes(data)))


def decode_headers(blob: bytes) -> list[BlockHeader]:
    """Split raw concatenated 80-byte records."""
    if len(blob) % HEADER_SIZE:
        raise WrongLength(f"{len(blob)} bytes is not a whole number of headers")
    return [decode_header(blob[i:i + HEADER_SIZE]) for i in range(0, len(blob), HEADER_SIZE)]


def header_hash(h: BlockHeader) -> Hash:
    return sha256d(encode_header(h))


def hash_to_int(h: Hash) -> int:
    return int.from_bytes(h, "big")


# -- compact targets ---------------------------------------------------------

def decode_compact(n_bits: int) -> int:
    exponent = n_bits >> 24
    mantissa = n_bits & 0xFFFFFF
    if mantissa & 0x800000:
        raise CompactError(f"sign bit set in compact value {n_bits:#010x}")
    if exponent <= 3:
        target = mantissa >> (8 * (3 - exponent))
    else:
        target = mantissa << (8 * (exponent - 3))
    if target == 0:
        raise ZeroTarget(f"compact value {n_bits:#010x} decodes to zero")
    if target >= 1 << 256:
        raise TargetOverflow(f"compact value {n_bits:#010x} exceeds 2**256")
    return target


def encode_compact(target: int) -> int:
    if target <= 0:
        raise ZeroTarget("target must be positive")
    if target >= 1 << 256:
        raise TargetOverflow("target must be below 2**256")
    size = (target.bit_length() + 7) // 8
    if size <= 3:
        mantissa = target << (8 * (3 - size))
    else:
        mantissa = target >> (8 * (size - 3))
    # keep the sign bit clear by moving one byte into the exponent
    if mantissa & 0x800000:
        mantissa >>= 8
        size += 1
    return (size << 24) | mantissa


def canonical_target(target: int) -> int:
    return decode_compact(encode_compact(target))


def retarget(prev_target: int, actual_timespan_s: float, expected_timespan_s: float) -> int:
    """Scale the target by the clamped ratio of observed to expected timespan."""
    if actual_timespan_s <= 0 or expected_timespan_s <= 0:
        raise ValueError("timespans must be positive")
    lo = expected_timespan_s / RETARGET_CLAMP
    hi = expected_timespan_s * RETARGET_CLAMP
    actual = min(max(actual_timespan_s, lo), hi)
    # exact rational scaling; timespans may be floats
    scaled = prev_target * Fraction(actual) / Fraction(expected_timespan_s)
    new_target = int(scaled)
    new_target = min(max(new_target, 1), (1 << 256) - 1)
    return canonical_target(new_target)


@dataclass(frozen=True)
class ChainParams:
    """Network constants used to derive the expected target at each height."""

    pow_limit: int
    retarget_window: int = RETARGET_WINDOW
    target_spacing_s: int = TARGET_SPACING_S

    def __post_init__(self):
        object.__setattr__(self, "pow_limit", canonical_target(self.pow_limit))

    @classmethod
    def from_bits(cls, n_bits: int, **kw) -> "ChainParams":
        return cls(decode_compact(n_bits), **kw)


def expected_target(headers: Sequence[BlockHeader], height: int, params: ChainParams) -> int:
    """Target the header at ``height`` must meet, given ``headers[:height]``."""
    if height == 0:
        return params.pow_limit
    prev_target = decode_compact(headers[height - 1].n_bits)
    window = params.retarget_window
    if height % window != 0:
        return prev_target
    actual = headers[height - 1].timestamp - headers[height - window].timestamp
    new_target = retarget(prev_target, max(actual, 1), window * params.target_spacing_s)
    return min(new_target, params.pow_limit)


# -- validation ----------------------------------------------------------------

class ValidationVerdict(enum.Enum):
    OK = "ok"
    LINKAGE = "linkage"
    POW = "pow"
    MALFORMED = "malformed"

    @property
    def ok(self) -> bool:
        return self is ValidationVerdict.OK


def validate_header(prev: Optional[BlockHeader], h: BlockHeader, expected_target: int) -> ValidationVerdict:
    """Return the first failing check: linkage, then proof-of-work, then well-formedness.

    ``prev=None`` marks a genesis header, whose ``prev_hash`` must be all zero.
    """
    want_prev = ZERO_HASH if prev is None else header_hash(prev)
    if h.prev_hash != want_prev:
        return ValidationVerdict.LINKAGE
    if hash_to_int(header_hash(h)) >= expected_target:
        return ValidationVerdict.POW
    if prev is not None and h.timestamp <= prev.timestamp:
        return ValidationVerdict.MALFORMED
    try:
        if h.n_bits != encode_compact(expected_target):
            return ValidationVerdict.MALFORMED
    except CompactError:
        return ValidationVerdict.MALFORMED
    return ValidationVerdict.OK


def header_work(h: BlockHeader) -> int:
    return (1 << 256) // decode_compact(h.n_bits)


@dataclass(frozen=True)
class HeaderChain:
    headers: tuple[BlockHeader, ...] = ()
    work: int = 0
    _hashes: tuple[Hash, ...] = field(default=(), compare=False, repr=False)

    @classmethod
    def from_headers(cls, headers: Iterable[BlockHeader]) -> "HeaderChain":
        """Wrap headers without validating them (e.g. an untrusted candidate)."""
        hs = tuple(headers)
        work = 0
        for h in hs:
            try:
                work += header_work(h)
            except CompactError:
                pass
        return cls(hs, work, tuple(header_hash(h) for h in hs))

    def __len__(self) -> int:
        return len(self.headers)

    def __getitem__(self, i):
        return self.headers[i]

    @property
    def hashes(self) -> tuple[Hash, ...]:
        if len(self._hashes) != len(self.headers):
            object.__setattr__(self, "_hashes", tuple(header_hash(h) for h in self.headers))
        return self._hashes

    @property
    def tip(self) -> Optional[BlockHeader]:
        return self.headers[-1] if self.headers else None

    @property
    def tip_hash(self) -> Hash:
        return self.hashes[-1] if self.headers else b""

    @property
    def height(self) -> int:
        return len(self.headers) - 1

    def appended(self, extra: Sequence[BlockHeader]) -> "HeaderChain":
        extra = tuple(extra)
        return HeaderChain(
            self.headers + extra,
            self.work + sum(header_work(h) for h in extra),
            self.hashes + tuple(header_hash(h) for h in extra),
        )

    def truncated(self, length: int) -> "HeaderChain":
        hs = self.headers[:length]
        return HeaderChain(hs, sum(header_work(h) for h in hs), self.hashes[:length])


def extend_chain(
    chain: HeaderChain, incoming: Sequence[BlockHeader], params: ChainParams
) -> tuple[HeaderChain, list[ValidationVerdict]]:
    """Append the longest valid prefix of ``incoming`` to ``chain``.

    Stops at the first header that fails validation; the returned verdict list
    ends with that failure (headers after it are not examined).
    """
    headers = list(chain.headers)
    verdicts: list[ValidationVerdict] = []
    accepted: list[BlockHeader] = []
    for h in incoming:
        prev = headers[-1] if headers else None
        try:
            target = expected_target(headers + [h], len(headers), params)
        except CompactError:
            verdicts.append(ValidationVerdict.MALFORMED)
            break
        verdict = validate_header(prev, h, target)
        verdicts.append(verdict)
        if not verdict.ok:
            break
        headers.append(h)
        accepted.append(h)
    return chain.appended(accepted), verdicts


def parse_chain(headers: Sequence[BlockHeader], params: ChainParams) -> HeaderChain:
    return extend_chain(HeaderChain(), headers, params)[0]


def cumulative_work(chain: HeaderChain | Sequence[BlockHeader]) -> int:
    headers = chain.headers if isinstance(chain, HeaderChain) else chain
    return sum((1 << 256) // decode_compact(h.n_bits) for h in headers)


def is_consistent(chain: HeaderChain | Sequence[BlockHeader]) -> bool:
    """Linkage, positive work with valid proof-of-work, strictly rising timestamps.

    Each header's proof-of-work is checked against its own ``n_bits``; the
    genesis ``prev_hash`` is not constrained here.
    """
    headers = chain.headers if isinstance(chain, HeaderChain) else tuple(chain)
    prev_hash = None
    prev_ts = None
    for h in headers:
        try:
            target = decode_compact(h.n_bits)
        except CompactError:
            return False
        hh = header_hash(h)
        if hash_to_int(hh) >= target:
            return False
        if prev_hash is not None and (h.prev_hash != prev_hash or h.timestamp <= prev_ts):
            return False
        prev_hash, prev_ts = hh, h.timestamp
    return True


def select_chain(candidates: Iterable[HeaderChain]) -> HeaderChain:
    """Heaviest consistent candidate; equal work goes to the smaller tip hash."""
    best = None
    for c in candidates:
        if not is_consistent(c):
            continue
        w = cumulative_work(c)
        if best is None or w > best[0] or (w == best[0] and c.tip_hash < best[1].tip_hash):
            best = (w, c)
    if best is None:
        raise NoConsistentCandidate("no candidate chain satisfies the consistency predicate")
    return best[1]


def diff_sync(local_height: int, remote: Sequence[BlockHeader]) -> list[BlockHeader]:
    """Headers the local side is missing: indices strictly above ``local_height``."""
    return list(remote[max(local_height + 1, 0):])


def sync_bytes(headers: Sequence[BlockHeader]) -> int:
    return sum(len(encode_header(h)) for h in headers)


# -- compressed header tree ---------------------------------------------------------

@dataclass(frozen=True)
class ChtCommitment:
    root: Hash
    leaf_count: int


def cht_tree(headers: Sequence[BlockHeader]) -> MerkleTree:
    return build_tree(header_hash(h) for h in headers)


def cht_commit(headers: Sequence[BlockHeader]) -> ChtCommitment:
    tree = cht_tree(headers)
    return ChtCommitment(tree.root, tree.leaf_count)


def cht_prove(headers: Sequence[BlockHeader], index: int) -> MerkleProof:
    return prove(cht_tree(headers), index)


def cht_verify(header: BlockHeader, proof: MerkleProof, commitment: ChtCommitment) -> bool:
    if not 0 <= proof.leaf_index < commitment.leaf_count:
        return False
    return verify_proof(leaf_hash(header_hash(header)), proof, commitment.root)


def cht_append(tree: MerkleTree, header: BlockHeader) -> MerkleTree:
    """Add one header to a CHT, recomputing only the new leaf's path to the root."""
    hasher = tree.hasher
    levels = [list(level) for level in tree.levels]
    pos = len(levels[0])
    levels[0].append(leaf_hash(header_hash(header), hasher))
    depth = 0
    while len(levels[depth]) > 1:
        parent = pos // 2
        left_i = parent * 2
        level = levels[depth]
        left = level[left_i]
        right = level[left_i + 1] if left_i + 1 < len(level) else left
        if depth + 1 == len(levels):
            levels.append([])
        up = levels[depth + 1]
        new = node_hash(left, right, hasher)
        if parent < len(up):
            up[parent] = new
        else:
            up.append(new)
        pos = parent
        depth += 1
    return MerkleTree(tuple(tuple(level) for level in levels[: depth + 1]), hasher)
