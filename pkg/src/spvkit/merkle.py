"""Binary Merkle trees: construction, inclusion proofs and proof verification.

Leaves are hashed as ``H(0x00 || payload)`` and internal nodes as
``H(0x01 || left || right)``.  A level of odd width pairs its last node with
itself, which is the convention used by Bitcoin block trees.

The hash function is pluggable; every function takes an optional ``hasher``
(``bytes -> 32 bytes``) and defaults to double SHA-256.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

HASH_SIZE = 32
LEAF_PREFIX = b"\x00"
NODE_PREFIX = b"\x01"

Hash = bytes
Hasher = Callable[[bytes], bytes]


class EmptyLeafSet(ValueError):
    pass


class IndexOutOfRange(IndexError):
    pass


def sha256d(data: bytes) -> Hash:
    return hashlib.sha256(hashlib.sha256(data).digest()).digest()


def leaf_hash(payload: bytes, hasher: Hasher = sha256d) -> Hash:
    return hasher(LEAF_PREFIX + bytes(payload))


def node_hash(left: Hash, right: Hash, hasher: Hasher = sha256d) -> Hash:
    return hasher(NODE_PREFIX + left + right)


@dataclass(frozen=True)
class MerkleTree:
    """All levels of a tree, leaves first; ``levels[-1]`` holds the root."""

    levels: tuple[tuple[Hash, ...], ...]
    hasher: Hasher = field(default=sha256d, compare=False, repr=False)

    @property
    def root(self) -> Hash:
        return self.levels[-1][0]

    @property
    def leaf_count(self) -> int:
        return len(self.levels[0])

    @property
    def height(self) -> int:
        return len(self.levels) - 1


@dataclass(frozen=True)
class ProofStep:
    sibling: Hash
    sibling_is_right: bool


@dataclass(frozen=True)
class MerkleProof:
    leaf_index: int
    steps: tuple[ProofStep, ...] = ()

    def __len__(self) -> int:
        return len(self.steps)

    def to_json(self) -> dict:
        return {
            "leaf_index": self.leaf_index,
            "steps": [
                {"sibling_hex": s.sibling.hex(), "is_right": s.sibling_is_right}
                for s in self.steps
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MerkleProof":
        """Inverse of :meth:`to_json`. Raises ``ValueError`` on malformed input."""
        try:
            index = obj["leaf_index"]
            steps = tuple(
                ProofStep(bytes.fromhex(s["sibling_hex"]), bool(s["is_right"]))
                for s in obj["steps"]
            )
        except (KeyError, TypeError, AttributeError) as exc:
            raise ValueError(f"malformed proof: {exc!r}") from exc
        if not isinstance(index, int) or isinstance(index, bool) or index < 0:
            raise ValueError("malformed proof: leaf_index must be a non-negative int")
        if any(len(s.sibling) != HASH_SIZE for s in steps):
            raise ValueError("malformed proof: sibling hashes must be 32 bytes")
        return cls(index, steps)


def _next_level(level: Sequence[Hash], hasher: Hasher) -> tuple[Hash, ...]:
    out = []
    for i in range(0, len(level), 2):
        left = level[i]
        right = level[i + 1] if i + 1 < len(level) else left
        out.append(node_hash(left, right, hasher))
    return tuple(out)


def tree_from_leaf_hashes(hashes: Iterable[Hash], hasher: Hasher = sha256d) -> MerkleTree:
    """Build a tree whose level 0 is ``hashes`` as given (no leaf hashing).

    Used for block trees, where level 0 holds transaction ids.
    """
    level = tuple(bytes(h) for h in hashes)
    if not level:
        raise EmptyLeafSet("a Merkle tree needs at least one leaf")
    levels = [level]
    while len(level) > 1:
        level = _next_level(level, hasher)
        levels.append(level)
    return MerkleTree(tuple(levels), hasher)


def build_tree(leaves: Iterable[bytes], hasher: Hasher = sha256d) -> MerkleTree:
    return tree_from_leaf_hashes((leaf_hash(x, hasher) for x in leaves), hasher)


def prove(tree: MerkleTree, index: int) -> MerkleProof:
    if not 0 <= index < tree.leaf_count:
        raise IndexOutOfRange(f"leaf index {index} outside 0..{tree.leaf_count - 1}")
    steps = []
    pos = index
    for level in tree.levels[:-1]:
        if pos % 2 == 0:
            sib = level[pos + 1] if pos + 1 < len(level) else level[pos]
            steps.append(ProofStep(sib, True))
        else:
            steps.append(ProofStep(level[pos - 1], False))
        pos //= 2
    return MerkleProof(index, tuple(steps))


def fold_proof(leaf: Hash, proof: MerkleProof, hasher: Hasher = sha256d) -> Hash:
    h = leaf
    for step in proof.steps:
        if step.sibling_is_right:
            h = node_hash(h, step.sibling, hasher)
        else:
            h = node_hash(step.sibling, h, hasher)
    return h


def verify_proof(leaf: Hash, proof: MerkleProof, root: Hash, hasher: Hasher = sha256d) -> bool:
    """True iff folding ``leaf`` through ``proof`` reproduces ``root``.

    Anything malformed (wrong hash sizes, bad step objects) is a plain ``False``.
    """
    try:
        if len(leaf) != HASH_SIZE or len(root) != HASH_SIZE:
            return False
        if any(len(s.sibling) != HASH_SIZE for s in proof.steps):
            return False
        return fold_proof(bytes(leaf), proof, hasher) == bytes(root)
    except (TypeError, AttributeError):
        return False


def proof_length(leaf_count: int) -> int:
    """``ceil(log2(leaf_count))``, the number of steps in any proof of the tree."""
    return (leaf_count - 1).bit_length()
