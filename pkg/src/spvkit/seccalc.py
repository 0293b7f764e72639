"""Closed-form security, economics and resource calculators for SPV clients.

Conventions: ``alpha`` is the attacker's share of hash power (``q``), the honest
share is ``p = 1 - alpha``.  Hash counts use ``ceil(log2 m)`` so byte and cycle
figures stay exact integers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from numbers import Real
from typing import Iterable, Sequence

HASH_BYTES = 32
HEADER_BYTES = 80


class DivergentSeries(ValueError):
    pass


class NonPositiveCost(ValueError):
    pass


class ZeroBits(ValueError):
    pass


def _check_alpha(alpha) -> None:
    if not 0 <= alpha < 1:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")


def ceil_log2(m: int) -> int:
    if m < 1:
        raise ValueError("m must be >= 1")
    return (m - 1).bit_length()


@dataclass(frozen=True)
class AdversaryModel:
    alpha: float

    def __post_init__(self):
        _check_alpha(self.alpha)

    @property
    def q(self) -> float:
        return self.alpha

    @property
    def p(self) -> float:
        return 1 - self.alpha

    @property
    def ratio(self) -> float:
        return self.alpha / (1 - self.alpha)


# -- fraud and race probabilities ---------------------------------------------

def fraud_bound(alpha: Real, k: int) -> Real:
    """``(alpha / (1 - alpha)) ** k`` clamped to ``[0, 1]``.

    Works with ``fractions.Fraction`` inputs, in which case the result is exact.
    """
    _check_alpha(alpha)
    if k < 0:
        raise ValueError("k must be non-negative")
    value = (alpha / (1 - alpha)) ** k
    return min(value, 1)


def reorg_tail_bound(alpha: float, d: int) -> float:
    """Geometric tail ``sum_{k>d} r**k = r**(d+1) / (1 - r)`` with ``r = alpha/(1-alpha)``."""
    _check_alpha(alpha)
    r = alpha / (1 - alpha)
    if r >= 1:
        raise DivergentSeries(f"tail diverges for alpha={alpha} (ratio {r} >= 1)")
    return min(r ** (d + 1) / (1 - r), 1.0)


def race_success_prob(alpha: float, z: int) -> float:
    """Probability an attacker eventually overtakes an honest lead of ``z`` blocks.

    The attacker's progress while the merchant waits for ``z`` blocks is
    Poisson with mean ``z * q / p``; from a remaining deficit of ``z - k`` the
    catch-up probability is ``(q/p) ** (z - k)``.
    """
    _check_alpha(alpha)
    if z < 0:
        raise ValueError("z must be non-negative")
    if alpha >= 0.5:
        return 1.0
    q, p = alpha, 1 - alpha
    lam = z * q / p
    pmf = math.exp(-lam)
    not_caught = 0.0
    for k in range(z + 1):
        not_caught += pmf * (1 - (q / p) ** (z - k))
        pmf *= lam / (k + 1)
    return min(max(1.0 - not_caught, 0.0), 1.0)


def min_confirmations(alpha: float, kappa_sec: float, k_max: int = 1 << 20) -> int:
    """Smallest ``k`` with ``fraud_bound(alpha, k) <= 2**-kappa_sec`` (bisection)."""
    _check_alpha(alpha)
    if alpha >= 0.5:
        raise DivergentSeries("no finite depth suffices for alpha >= 0.5")
    goal = 2.0 ** -kappa_sec
    if fraud_bound(alpha, 0) <= goal:
        return 0
    lo, hi = 0, 1
    while fraud_bound(alpha, hi) > goal:
        lo, hi = hi, hi * 2
        if hi > k_max:
            raise ValueError("required depth exceeds k_max")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if fraud_bound(alpha, mid) <= goal:
            hi = mid
        else:
            lo = mid
    return hi


def attack_count_bound(capital: float, unit_cost: float, detection_rate: float) -> int:
    """``floor((capital / unit_cost) * detection_rate)``: attacks affordable before detection."""
    if unit_cost <= 0:
        raise NonPositiveCost("unit cost must be positive")
    if detection_rate <= 0:
        raise ValueError("detection rate must be positive")
    return math.floor(capital / unit_cost * detection_rate)


# -- economics ------------------------------------------------------------------------

@dataclass(frozen=True)
class BlockCost:
    energy: float = 0.0
    energy_rate: float = 0.0
    amortisation: float = 0.0
    capital_rate: float = 0.0

    def __post_init__(self):
        if min(self.energy, self.energy_rate, self.amortisation, self.capital_rate) < 0:
            raise ValueError("cost components must be non-negative")

    @property
    def total(self) -> float:
        return self.energy * self.energy_rate + self.amortisation * self.capital_rate


@dataclass(frozen=True)
class CostModel:
    blocks: tuple[BlockCost, ...] = ()


def fork_cost(model: CostModel | Iterable[BlockCost]) -> float:
    blocks = model.blocks if isinstance(model, CostModel) else model
    return sum(b.total for b in blocks)


def deterrence_holds(expected_fraud_value: float, cost: float) -> bool:
    return expected_fraud_value <= cost


def incentive_compatible(fee: float, reward: float, verify_cost: float, gamma: float,
                         kappa: float, withhold_cost: float) -> bool:
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    delta_min = verify_cost + gamma * (kappa - withhold_cost)
    return fee + reward >= delta_min


# -- filters and relays ------------------------------------------------------------------

def bloom_fpr(k_hashes: int, n_inserted: int, m_bits: int) -> float:
    if m_bits <= 0:
        raise ZeroBits("filter needs at least one bit")
    return (1 - math.exp(-k_hashes * n_inserted / m_bits)) ** k_hashes


def bloom_expected_false_matches(fpr: float, n_block: int, k_interest: int) -> float:
    return fpr * (n_block - k_interest)


def relay_visibility(p_upstream: float, k_relays: int) -> float:
    if not 0 <= p_upstream <= 1 or k_relays < 0:
        raise ValueError("need 0 <= p <= 1 and k >= 0")
    return 1 - (1 - p_upstream) ** k_relays


# -- bandwidth, memory, cycles ------------------------------------------------------------

def packet_cost(tx_bytes: int, m_txs_per_block: int, n_headers: int) -> int:
    """Transaction + Merkle path + full header chain, in bytes."""
    return tx_bytes + HASH_BYTES * ceil_log2(m_txs_per_block) + HEADER_BYTES * n_headers


def amortised_query_cost(tx_bytes: int, m_txs_per_block: int) -> int:
    return tx_bytes + HASH_BYTES * ceil_log2(m_txs_per_block)


def memory_cost(n_headers: int, k_txs: int, m_txs_per_block: int) -> int:
    return HEADER_BYTES * n_headers + HASH_BYTES * k_txs * ceil_log2(m_txs_per_block)


def cycle_cost(k_txs: int, m_txs_per_block: int, cycles_per_hash: int) -> int:
    return k_txs * ceil_log2(m_txs_per_block) * cycles_per_hash


def throughput(cpu_cycles_per_s: float, m_txs_per_block: int, cycles_per_hash: float) -> float:
    """Transactions verified per second when each costs ``ceil(log2 m)`` hashes."""
    per_tx = ceil_log2(m_txs_per_block) * cycles_per_hash
    return math.inf if per_tx == 0 else cpu_cycles_per_s / per_tx


# -- polling and propagation shapes ----------------------------------------------------------

def poll_capture_prob(kappa: float) -> float:
    """Chance that a poll window of ``kappa`` mean inter-arrival times sees a block."""
    if kappa < 0:
        raise ValueError("kappa must be non-negative")
    return -math.expm1(-kappa)


def latency_bound(n_nodes: int, max_degree: int, p_forward: float) -> float:
    """``log n / log(1 + degree * p)`` with unit constant (a shape, not a prediction)."""
    if n_nodes < 2 or max_degree < 1 or not 0 < p_forward <= 1:
        raise ValueError("need n >= 2, degree >= 1, 0 < p <= 1")
    return math.log(n_nodes) / math.log1p(max_degree * p_forward)


def redundancy_bound(n_nodes: int, p_forward: float) -> float:
    if n_nodes < 2 or not 0 < p_forward <= 1:
        raise ValueError("need n >= 2 and 0 < p <= 1")
    return n_nodes * p_forward * math.log(n_nodes)


def suppression_cost_shape(rho: float, n_nodes: int, relay_bandwidth: float) -> float:
    # uncalibrated: the constant in the lower bound is unknown
    return rho * n_nodes * relay_bandwidth


def delivery_guarantee_shape(n_nodes: int) -> float:
    # uncalibrated: 1 - exp(-log n) with unit constant
    return 1 - math.exp(-math.log(n_nodes))


# -- tables --------------------------------------------------------------------------------

TABLE_COLUMNS = ("alpha", "z", "fraud_bound", "race_prob", "reorg_tail")


def security_table(alphas: Sequence[float], zs: Sequence[int]) -> list[dict]:
    rows = []
    for a in alphas:
        for z in zs:
            try:
                tail = reorg_tail_bound(a, z)
            except DivergentSeries:
                tail = math.inf
            rows.append({
                "alpha": a,
                "z": z,
                "fraud_bound": fraud_bound(a, z),
                "race_prob": race_success_prob(a, z),
                "reorg_tail": tail,
            })
    return rows
