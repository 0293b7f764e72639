"""
Attack probabilities and resource costs
=======================================

Closed-form numbers an integrator needs when picking a confirmation depth
and sizing a device.
"""
from spvkit import seccalc as sc

print(f"{'alpha':>6} {'z':>3} {'(q/p)^z':>12} {'race':>12} {'race/(q/p)^z':>13}")
for row in sc.security_table([0.1, 0.3, 0.45], [1, 3, 6, 10]):
    ratio = row["race_prob"] / row["fraud_bound"]
    print(f"{row['alpha']:>6} {row['z']:>3} {row['fraud_bound']:>12.3e} {row['race_prob']:>12.3e} {ratio:>13.2f}")

# %%
# The race probability is not bounded by a fixed multiple of (q/p)^z: the
# last column keeps growing with z.  The depth needed for a 2^-20 bound:
for alpha in (0.1, 0.2, 0.3):
    print(f"alpha={alpha}: k >= {sc.min_confirmations(alpha, 20)}")

# %%
# Bandwidth, memory and CPU for a light client.
print("query with full header sync:", sc.packet_cost(300, 2**20, 800_000), "bytes")
print("query once synced:          ", sc.amortised_query_cost(300, 2**20), "bytes")
print("memory for 800k headers, 100 proofs:", sc.memory_cost(800_000, 100, 2**12), "bytes")
print("cycles to check 1000 payments:", sc.cycle_cost(1000, 1024, 300))
print(f"payments per second at 1 GHz: {sc.throughput(1e9, 1024, 300):,.0f}")

# %%
# Polling for headers: a window of kappa mean block intervals catches a block with
print({k: round(sc.poll_capture_prob(k), 4) for k in (0.5, 1, 2, 3)})
