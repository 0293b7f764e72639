"""Acceptance gate: one test per criterion, each with its stated tolerance and time budget.

Run ``pytest tests/test_acceptance.py -v``; the terminal summary lists PASS/FAIL per criterion.
"""
import json
import math
import os
import random
import subprocess
import sys
import time
from fractions import Fraction

import pytest

from chainsim import run_sequence
from oracles import header_bytes, naive_root, poll_capture_monte_carlo, race_monte_carlo
from spvkit import netsim as ns
from spvkit import seccalc as sc
from spvkit.client import ClientConfig, ingest_headers, init_client, orphan_submit, orphan_tick
from spvkit.fixtures import EASY_BITS, MODERATE_BITS, REGTEST_BITS, make_chain, mine_on
from spvkit.headers import (
    BlockHeader,
    ChainParams,
    HeaderChain,
    ValidationVerdict,
    cumulative_work,
    decode_compact,
    decode_header,
    diff_sync,
    encode_compact,
    encode_header,
    extend_chain,
    hash_to_int,
    header_hash,
    is_consistent,
    select_chain,
    sync_bytes,
    validate_header,
)
from spvkit.merkle import MerkleProof, ProofStep, prove, sha256d, tree_from_leaf_hashes, verify_proof
from spvkit.orphans import OrphanOutcome
from spvkit.tx import Transaction, TxInput

V = ValidationVerdict


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def note(record, text):
    record("detail", text)
    print(text)


def _flip(b: bytes, pos: int, mask: int) -> bytes:
    return b[:pos] + bytes([b[pos] ^ mask]) + b[pos + 1:]


def _txids(n: int, tag: str) -> list[bytes]:
    return [sha256d(f"{tag}/{i}".encode()) for i in range(n)]


# 1 -----------------------------------------------------------------------------------------

@pytest.mark.criterion(1, "Merkle oracle equivalence and single-byte tamper rejection")
def test_c01_merkle_oracle_equivalence(record_property):
    masks = [1 << b for b in range(8)]
    checked = 0
    with Timer() as t:
        for n in range(1, 17):
            leaves = _txids(n, f"c1/{n}")
            tree = tree_from_leaf_hashes(leaves)
            root = tree.root
            assert root == naive_root(leaves)
            for i in range(n):
                proof = prove(tree, i)
                assert verify_proof(leaves[i], proof, root)
                for pos in range(32):
                    for m in masks:
                        assert not verify_proof(_flip(leaves[i], pos, m), proof, root)
                        assert not verify_proof(leaves[i], proof, _flip(root, pos, m))
                        checked += 2
                for s, step in enumerate(proof.steps):
                    for pos in range(32):
                        for m in masks:
                            bad = list(proof.steps)
                            bad[s] = ProofStep(_flip(step.sibling, pos, m), step.sibling_is_right)
                            assert not verify_proof(leaves[i], MerkleProof(i, tuple(bad)), root)
                            checked += 1
    note(record_property, f"{checked} tampered proofs rejected, {t.elapsed:.2f} s")
    assert t.elapsed < 5


# 2 -----------------------------------------------------------------------------------------

@pytest.mark.criterion(2, "Zero false positives for non-member ids under honest proofs")
def test_c02_zero_false_positives(record_property):
    blocks = {n: _txids(n, f"c2/{n}") for n in range(1, 17)}
    trees = {n: tree_from_leaf_hashes(b) for n, b in blocks.items()}
    everything = {t for b in blocks.values() for t in b}
    # candidates: every other block's ids, every inner node of every tree, and fresh ids
    for tree in trees.values():
        for level in tree.levels[1:]:
            everything.update(level)
    everything.update(_txids(64, "c2/fresh"))
    false_positives = checks = 0
    with Timer() as t:
        for n, tree in trees.items():
            members = set(blocks[n])
            outsiders = sorted(everything - members)
            for i in range(n):
                proof = prove(tree, i)
                for cand in outsiders:
                    checks += 1
                    false_positives += verify_proof(cand, proof, tree.root)
    note(record_property, f"{false_positives} false positives in {checks} checks, {t.elapsed:.2f} s")
    assert false_positives == 0
    assert t.elapsed < 10


# 3 -----------------------------------------------------------------------------------------

@pytest.mark.criterion(3, "Packet cost 300 B / 2^20 / 800,000 headers = 64,000,940 bytes")
def test_c03_packet_cost(record_property):
    got = sc.packet_cost(300, 2**20, 800_000)
    note(record_property, f"{got} bytes = {got / 1e6} MB")
    assert got == 64_000_940


# 4 -----------------------------------------------------------------------------------------

@pytest.mark.criterion(4, "Cycle cost 3,000,000 and memory 80n + 32k log2 m")
def test_c04_cycle_and_memory(record_property):
    assert sc.cycle_cost(1000, 1024, 300) == 3_000_000
    grid = [(1, 1, 2), (800_000, 10, 1024), (1000, 7, 2**20)]
    for n, k, m in grid:
        assert sc.memory_cost(n, k, m) == 80 * n + 32 * k * int(math.log2(m))
    note(record_property, "cycles 3000000; memory exact on 3 points")


# 5 -----------------------------------------------------------------------------------------

RACE_ALPHAS = (0.1, 0.2, 0.3, 0.45)
RACE_ZS = (1, 3, 6, 10)
RACE_TRIALS = 1_000_000


@pytest.mark.criterion(5, "Race probability within 3 sigma of a 10^6-trial simulation")
def test_c05_race_vs_monte_carlo(record_property):
    worst = 0.0
    with Timer() as t:
        for a in RACE_ALPHAS:
            for z in RACE_ZS:
                p = sc.race_success_prob(a, z)
                est = race_monte_carlo(a, z, RACE_TRIALS, seed=1000 * z + int(a * 100))
                sigma = math.sqrt(p * (1 - p) / RACE_TRIALS)
                score = abs(est - p) / sigma
                worst = max(worst, score)
                assert score <= 3, (a, z, p, est)
    note(record_property, f"16 cells, worst |z-score| {worst:.2f}, {t.elapsed:.1f} s")
    assert t.elapsed < 60


# 6 -----------------------------------------------------------------------------------------

@pytest.mark.criterion(6, "log fraud_bound affine in k with negative slope (exact ratios)")
def test_c06_exponential_decay(record_property):
    for alpha in (Fraction(1, 100), Fraction(1, 10), Fraction(1, 4), Fraction(2, 5), Fraction(49, 100)):
        ratio = alpha / (1 - alpha)
        assert ratio < 1
        values = [sc.fraud_bound(alpha, k) for k in range(41)]
        assert values[0] == 1
        assert all(isinstance(v, Fraction) for v in values)
        assert all(values[k + 1] / values[k] == ratio for k in range(40))
    note(record_property, "consecutive ratios exactly alpha/(1-alpha) < 1 for 5 alphas, k <= 40")


# 7 -----------------------------------------------------------------------------------------

def _remine(h: BlockHeader, target: int, **changes) -> BlockHeader:
    fields = dict(version=h.version, prev_hash=h.prev_hash, merkle_root=h.merkle_root,
                  timestamp=h.timestamp, n_bits=h.n_bits, nonce=0)
    fields.update(changes)
    for nonce in range(1 << 24):
        cand = BlockHeader(**{**fields, "nonce": nonce})
        if hash_to_int(header_hash(cand)) < target:
            return cand
    raise AssertionError("remining failed")


@pytest.mark.criterion(7, "Header codec round trip and field corruption verdicts")
def test_c07_header_codec_and_corruptions(record_property):
    with Timer() as t:
        rng = random.Random(7)
        for _ in range(10_000):
            f = (rng.randrange(-(2**31), 2**31), rng.randbytes(32), rng.randbytes(32),
                 rng.randrange(2**32), rng.randrange(2**32), rng.randrange(2**32))
            raw = header_bytes(*f)
            h = decode_header(raw)
            assert (h.version, h.prev_hash, h.merkle_root, h.timestamp, h.n_bits, h.nonce) == f
            assert encode_header(h) == raw

        fx = make_chain(3, 2, MODERATE_BITS, seed=7, with_pos=False)
        params = fx.params
        hs = fx.headers
        target = params.pow_limit
        assert [validate_header(p, h, target) for p, h in zip([None, *hs], hs)] == [V.OK] * 3
        cases = 0

        def expect(i, corrupted, verdict):
            nonlocal cases
            prev = hs[i - 1] if i else None
            assert validate_header(prev, corrupted, target) is verdict, (i, corrupted, verdict)
            chain, verdicts = extend_chain(HeaderChain(), [*hs[:i], corrupted, *hs[i + 1:]], params)
            assert len(chain) == i and verdicts[-1] is verdict
            cases += 1

        for i, h in enumerate(hs):
            # fields covered by the hash: any change breaks proof-of-work
            expect(i, BlockHeader(h.version ^ 1, h.prev_hash, h.merkle_root, h.timestamp, h.n_bits, h.nonce), V.POW)
            expect(i, BlockHeader(h.version, h.prev_hash, h.merkle_root[::-1], h.timestamp, h.n_bits, h.nonce), V.POW)
            expect(i, BlockHeader(h.version, h.prev_hash, h.merkle_root, h.timestamp + 1, h.n_bits, h.nonce), V.POW)
            expect(i, BlockHeader(h.version, h.prev_hash, h.merkle_root, h.timestamp, h.n_bits, h.nonce ^ 1), V.POW)
            expect(i, BlockHeader(h.version, h.prev_hash, h.merkle_root, h.timestamp, h.n_bits - 1, h.nonce), V.POW)
            # linkage is checked before proof-of-work
            expect(i, BlockHeader(h.version, _flip(h.prev_hash, 0, 1), h.merkle_root, h.timestamp, h.n_bits, h.nonce), V.LINKAGE)
            # re-mined headers with valid work but bad content
            expect(i, _remine(h, target, n_bits=encode_compact(decode_compact(h.n_bits) * 2)), V.MALFORMED)
            if i:
                expect(i, _remine(h, target, timestamp=hs[i - 1].timestamp), V.MALFORMED)
        # a child whose parent was altered no longer links
        alt = _remine(hs[1], target, merkle_root=bytes(32))
        assert validate_header(alt, hs[2], target) is V.LINKAGE
    note(record_property, f"10000 round trips, {cases} corruption cases, {t.elapsed:.2f} s")
    assert t.elapsed < 5


# 8 -----------------------------------------------------------------------------------------

@pytest.mark.criterion(8, "Heavier timestamp-inconsistent chain loses to lighter consistent chain")
def test_c08_chain_selection(record_property):
    g = mine_on(None, [sha256d(b"c8/genesis")], EASY_BITS)[0]
    honest = [g, *mine_on(g, [sha256d(b"c8/h%d" % i) for i in range(3)], EASY_BITS)]
    # same proof-of-work per header but timestamps never advance
    stuck = [g, *mine_on(g, [sha256d(b"c8/s%d" % i) for i in range(5)], EASY_BITS, spacing_s=0)]
    a, b = HeaderChain.from_headers(honest), HeaderChain.from_headers(stuck)
    assert cumulative_work(b) > cumulative_work(a)
    assert is_consistent(a) and not is_consistent(b)
    assert select_chain([b, a]) is a and select_chain([a, b]) is a

    state = init_client(g, ClientConfig(ChainParams.from_bits(EASY_BITS)))
    ingest_headers(state, honest[1:])
    rep = ingest_headers(state, stuck[1:])
    assert rep.rejected_branch is not None and state.chain.tip_hash == a.tip_hash
    note(record_property, f"work {cumulative_work(b)} > {cumulative_work(a)} rejected; client kept honest tip")


# 9 -----------------------------------------------------------------------------------------

@pytest.mark.criterion(9, "Local validation, monotonicity and n-k+1 over 1000 random sequences")
def test_c09_client_properties(record_property):
    reorgs = reverted = steps = 0
    with Timer() as t:
        for seed in range(1000):
            h = run_sequence(seed, 15)
            steps += h.steps
            reorgs += h.reorgs
            reverted += h.reverted
    note(record_property, f"{steps} steps, {reorgs} reorgs, {reverted} proofs reverted, {t.elapsed:.1f} s")
    assert reorgs > 0 and reverted > 0
    assert t.elapsed < 30


# 10 ----------------------------------------------------------------------------------------

@pytest.mark.criterion(10, "Orphan TTL eviction, size cap and depth limit")
def test_c10_orphan_policy(record_property):
    fx = make_chain(1, 1, REGTEST_BITS, seed=10, with_pos=False)
    config = ClientConfig(fx.params)

    def fresh():
        return init_client(fx.headers[0], config)

    # TTL: kept at exactly 600 s, evicted just after
    s = fresh()
    tx = Transaction((TxInput(b"\x01" * 32, 0, b""),))
    assert orphan_submit(s, tx, 0.0).outcome is OrphanOutcome.BUFFERED
    assert orphan_tick(s, 600.0).evicted == []
    assert orphan_tick(s, 600.001).evicted == [tx.id] and len(s.orphans) == 0

    # size cap at the default 10,000
    s = fresh()
    for i in range(10_000):
        assert orphan_submit(s, Transaction((TxInput(b"\x02" * 32, i, b""),)), 0.0).outcome is OrphanOutcome.BUFFERED
    over = Transaction((TxInput(b"\x02" * 32, 10_000, b""),))
    assert orphan_submit(s, over, 0.0).outcome is OrphanOutcome.BUFFER_FULL
    assert len(s.orphans) == 10_000

    # depth: a chain of 25 pending orphans is the limit
    s = fresh()
    parent = b"\x03" * 32
    for d in range(1, 26):
        child = Transaction((TxInput(parent, 0, b""),), lock_time=d)
        assert orphan_submit(s, child, 0.0).outcome is OrphanOutcome.BUFFERED
        assert s.orphans.depth(child.id) == d
        parent = child.id
    deep = Transaction((TxInput(parent, 0, b""),), lock_time=26)
    assert orphan_submit(s, deep, 0.0).outcome is OrphanOutcome.DEPTH_EXCEEDED
    note(record_property, "ttl 600 s, cap 10000, depth 25 enforced")


# 11 ----------------------------------------------------------------------------------------

SIM_CONFIG = {
    "topology": {"kind": "small_world", "n": 40, "degree": 4, "rewire_p": 0.2},
    "seed": 1234,
    "loss_prob": 0.1,
    "forward_prob": 0.9,
    "rate_limit_per_s": 5,
    "adversaries": {"3": {"behavior": "modify_headers"}, "9": {"behavior": "drop_all"}},
    "scenario": {"origin": 0, "message": {"kind": "headers", "count": 3}},
}


@pytest.mark.criterion(11, "Byte-identical trace digests across two fresh processes")
def test_c11_simulator_determinism(record_property, tmp_path):
    cfg = tmp_path / "sim.json"
    cfg.write_text(json.dumps(SIM_CONFIG))
    digests, traces = [], []
    with Timer() as t:
        for k, hashseed in enumerate(("0", "4242")):
            out = tmp_path / f"run{k}"
            env = {**os.environ, "PYTHONHASHSEED": hashseed}
            proc = subprocess.run([sys.executable, "-m", "spvkit", "sim", str(cfg), "--out", str(out), "--format", "json"],
                                  capture_output=True, text=True, env=env, check=True)
            digests.append(json.loads(proc.stdout)["trace_digest"])
            traces.append((out / "trace.jsonl").read_bytes())
    note(record_property, f"digest {digests[0][:16]}..., {len(traces[0])} trace bytes, {t.elapsed:.2f} s")
    assert digests[0] == digests[1] and traces[0] == traces[1]
    assert t.elapsed < 10


# 12 ----------------------------------------------------------------------------------------

@pytest.mark.criterion(12, "Median delay path > 6-regular > complete; cut vertex delivers 2/5")
def test_c12_topology_trends(record_property):
    with Timer() as t:
        seeds = range(32)
        path = ns.median_delay("path", 64, seeds)
        regular = ns.median_delay("d_regular_random", 64, seeds, degree=6)
        complete = ns.median_delay("complete", 64, seeds)
        cfg = ns.SimConfig(ns.build_topology("path", 5), adversaries={2: ns.Adversary(ns.Behavior.DROP_ALL)})
        msg = ns.Message("transaction", tx=Transaction(fee=1))
        delivery = ns.measure(ns.run(cfg, ns.Scenario(0, msg))).delivery_fraction
    note(record_property, f"median tau {path:.2f} > {regular:.2f} > {complete:.3f}; delivery {delivery}, {t.elapsed:.1f} s")
    assert path > regular > complete
    assert delivery == 2 / 5
    assert t.elapsed < 60


# 13 ----------------------------------------------------------------------------------------

@pytest.mark.criterion(13, "Poll capture 1 - exp(-kappa) within 1% over 10^5 windows")
def test_c13_polling_capture(record_property):
    parts = []
    with Timer() as t:
        for i, kappa in enumerate((0.5, 1.0, 3.0)):
            empirical = poll_capture_monte_carlo(kappa, rate=1 / 600, windows=100_000, seed=130 + i)
            predicted = sc.poll_capture_prob(kappa)
            parts.append(f"k={kappa}: {empirical:.4f} vs {predicted:.4f}")
            assert abs(empirical - predicted) <= 0.01
    note(record_property, "; ".join(parts) + f", {t.elapsed:.2f} s")
    assert t.elapsed < 10


# 14 ----------------------------------------------------------------------------------------

@pytest.mark.criterion(14, "Differential sync transfers exactly 80 bytes per new header")
def test_c14_differential_sync(record_property):
    fx = make_chain(60, 1, REGTEST_BITS, seed=14, with_pos=False)
    remote = fx.headers
    rng = random.Random(14)
    for _ in range(100):
        h = rng.randrange(0, len(remote))
        state = init_client(remote[0], ClientConfig(fx.params))
        ingest_headers(state, remote[1:h + 1])
        assert state.height == h
        missing = diff_sync(state.height, remote)
        wire = b"".join(encode_header(x) for x in missing)
        assert sync_bytes(missing) == len(wire) == 80 * (len(remote) - 1 - h)
        assert ingest_headers(state, missing).appended == len(missing)
        assert state.chain.tip_hash == header_hash(remote[-1])
    note(record_property, "100 random split points, bytes == 80 * new headers")
