"""
A point-of-sale payment checked by an SPV client
================================================

The payer funds two outputs in earlier blocks and hands the merchant a
bundle: the payment, both parent transactions and their Merkle proofs.
The merchant only holds headers.
"""
from spvkit.client import (
    AcceptMode,
    ClientConfig,
    ProofBundle,
    accept_transaction,
    confirmations,
    ingest_headers,
    init_client,
)
from spvkit.fixtures import REGTEST_BITS, make_chain, mine_on
from spvkit.tx import Transaction, TxInput

fx = make_chain(8, 4, REGTEST_BITS, seed=5)
merchant = init_client(fx.headers[0], ClientConfig(fx.params))
print(ingest_headers(merchant, fx.headers[1:]).to_json())

bundle = fx.bundle()
decision = accept_transaction(merchant, bundle, AcceptMode.STRICT)
print("accepted:", decision.accepted)
for c in decision.checks:
    print(f"  {c.name:<20s} #{c.subject}: {'ok' if c.ok else 'FAIL'}")

tx1 = fx.pos.tx1
print("parent 1 confirmations:", confirmations(merchant, tx1.id))

# %%
# A forged witness passes inclusion-only checking but not strict checking.
pay = fx.pos.tx3
forged = Transaction((TxInput(tx1.id, 0, b"guess"), pay.inputs[1]), pay.outputs, fee=pay.fee)
fake = ProofBundle(forged, bundle.parents, bundle.parent_proofs)
print("inclusion only:", accept_transaction(merchant, fake, "inclusion_only").accepted)
print("strict:        ", accept_transaction(merchant, fake, "strict").to_json()["failures"])

# %%
# A heavier branch from block 0 displaces the parents' blocks; their proofs are dropped.
branch = mine_on(fx.headers[0], [bytes([i]) * 32 for i in range(1, 10)], REGTEST_BITS)
report = ingest_headers(merchant, branch)
print("reorg depth:", report.reorg_depth, "reverted proofs:", len(report.reverted),
      "rollback anomaly:", report.rollback_anomaly)
print("parent 1 confirmations now:", confirmations(merchant, tx1.id))
