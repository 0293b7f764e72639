"""
Merkle inclusion proofs
=======================

Build a tree over a handful of payloads, prove one of them, and watch a
single flipped bit break the proof.
"""
from spvkit.merkle import build_tree, leaf_hash, proof_length, prove, verify_proof

payloads = [f"payment #{i}".encode() for i in range(11)]
tree = build_tree(payloads)
print("leaves:", tree.leaf_count, "height:", tree.height)
print("root:  ", tree.root.hex())

# %%
# A proof is one sibling per level, so 11 leaves need ceil(log2 11) = 4 steps.
proof = prove(tree, 6)
print("proof steps:", len(proof), "expected:", proof_length(tree.leaf_count))
for step in proof.steps:
    side = "right" if step.sibling_is_right else "left"
    print(f"  sibling on the {side}: {step.sibling.hex()[:16]}...")

print("verifies:", verify_proof(leaf_hash(payloads[6]), proof, tree.root))

# %%
# Tampering with the leaf, or proving the wrong payload, fails.
print("wrong payload:", verify_proof(leaf_hash(b"payment #7"), proof, tree.root))
bad_root = bytes([tree.root[0] ^ 1]) + tree.root[1:]
print("wrong root:   ", verify_proof(leaf_hash(payloads[6]), proof, bad_root))

# %%
# Proofs serialise to plain JSON for transport.
import json

print(json.dumps(proof.to_json())[:120], "...")
