"""
Header chains, work and fork choice
===================================

Mine a short chain against an easy target, validate it, and compare it to
a heavier fork whose timestamps never move forward.
"""
from spvkit.fixtures import EASY_BITS, make_chain, mine_on
from spvkit.headers import (
    HeaderChain,
    cht_commit,
    cht_prove,
    cht_verify,
    cumulative_work,
    decode_compact,
    encode_header,
    extend_chain,
    header_hash,
    is_consistent,
    select_chain,
)

fx = make_chain(6, 4, EASY_BITS, seed=2)
print(f"target for n_bits {EASY_BITS:#010x}: {decode_compact(EASY_BITS):#x}")
for i, h in enumerate(fx.headers):
    print(f"  #{i} nonce={h.nonce:<6d} hash={header_hash(h).hex()[:20]}...")

chain, verdicts = extend_chain(HeaderChain(), fx.headers, fx.params)
print("verdicts:", [v.value for v in verdicts])
print("header bytes on the wire:", sum(len(encode_header(h)) for h in chain.headers))

# %%
# A fork from block 1 with more headers, but every timestamp equal to its parent's.
g1 = fx.headers[1]
stuck = HeaderChain.from_headers([*fx.headers[:2], *mine_on(g1, [bytes([i]) * 32 for i in range(8)], EASY_BITS, spacing_s=0)])
print("honest work:", cumulative_work(chain), "consistent:", is_consistent(chain))
print("fork work:  ", cumulative_work(stuck), "consistent:", is_consistent(stuck))
print("selected tip is honest:", select_chain([stuck, chain]).tip_hash == chain.tip_hash)

# %%
# A compressed header tree commits to all headers; one header is proven in log n steps.
commitment = cht_commit(fx.headers)
proof = cht_prove(fx.headers, 4)
print("CHT root:", commitment.root.hex()[:20], "... proof steps:", len(proof))
print("header 4 in CHT:", cht_verify(fx.headers[4], proof, commitment))
