import json
import math

import pytest

from oracles import first_arrival_times
from spvkit import netsim as ns
from spvkit.fixtures import REGTEST_BITS, make_chain
from spvkit.tx import Transaction


def tx_msg(fee=1, nonce=0):
    return ns.Message("transaction", tx=Transaction(fee=fee, lock_time=nonce))


def headers_msg(count=3, seed=0):
    return ns.Message("headers", headers=tuple(make_chain(count, 1, REGTEST_BITS, seed, with_pos=False).headers))


# -- topology -----------------------------------------------------------------------------

@pytest.mark.parametrize("kind,n,d,edges", [
    ("path", 5, None, 4), ("ring", 6, None, 6), ("complete", 5, None, 10),
    ("d_regular_random", 10, 3, 15), ("small_world", 12, 4, 24),
])
def test_topology_shapes(kind, n, d, edges):
    t = ns.build_topology(kind, n, d, seed=4)
    assert len(t.edges) == edges
    assert t.graph().number_of_nodes() == n
    assert ns.build_topology(kind, n, d, seed=4) == t


def test_topology_errors():
    with pytest.raises(ns.UnsatisfiableParams):
        ns.build_topology("d_regular_random", 5, 3)
    with pytest.raises(ns.UnsatisfiableParams):
        ns.build_topology("d_regular_random", 5, None)
    with pytest.raises(ns.UnsatisfiableParams):
        ns.build_topology("star", 5)
    with pytest.raises(ns.UnsatisfiableParams):
        ns.build_topology("path", 1)


def test_path_diameter():
    assert ns.build_topology("path", 7).diameter == 6
    assert ns.build_topology("complete", 7).diameter == 1


# -- propagation --------------------------------------------------------------------------

def test_complete_graph_first_receipt_matches_shortest_paths():
    topo = ns.build_topology("complete", 8)
    cfg = ns.SimConfig(topo, seed=17)
    msg = tx_msg()
    metrics = ns.measure(ns.run(cfg, ns.Scenario(0, msg)))
    expected = first_arrival_times(8, topo.neighbors(), 0, 17, msg.id)
    assert metrics.first_receipt.keys() == expected.keys()
    for v, t in expected.items():
        assert metrics.first_receipt[v] == pytest.approx(t, abs=1e-12)
    assert metrics.propagation_delay_s == pytest.approx(max(expected.values()))


def test_complete_graph_redundancy_counts_every_forward():
    cfg = ns.SimConfig(ns.build_topology("complete", 4), seed=1)
    m = ns.measure(ns.run(cfg, ns.Scenario(0, tx_msg())))
    # origin sends 3; each other node forwards to its 2 non-sender neighbours
    assert m.redundancy == 3 + 3 * 2
    assert m.delivery_fraction == 1.0


def test_cut_vertex_drop_all():
    cfg = ns.SimConfig(ns.build_topology("path", 5), adversaries={2: ns.Adversary(ns.Behavior.DROP_ALL)})
    trace = ns.run(cfg, ns.Scenario(0, tx_msg()))
    assert ns.measure(trace).delivery_fraction == pytest.approx(2 / 5)
    assert ns.measure(trace, honest_set=[0, 1, 3, 4]).delivery_fraction == pytest.approx(2 / 4)


def test_selective_drop_only_hits_targets():
    topo = ns.build_topology("path", 4)
    a, b = tx_msg(nonce=1), tx_msg(nonce=2)
    adv = {1: ns.Adversary(ns.Behavior.SELECTIVE_DROP, frozenset({a.id}))}
    cfg = ns.SimConfig(topo, adversaries=adv)
    assert ns.measure(ns.run(cfg, ns.Scenario(0, a))).delivery_fraction == pytest.approx(1 / 4)
    assert ns.measure(ns.run(cfg, ns.Scenario(0, b))).delivery_fraction == pytest.approx(3 / 4)


def test_modified_headers_rejected_downstream():
    cfg = ns.SimConfig(ns.build_topology("path", 4), adversaries={1: ns.Adversary(ns.Behavior.MODIFY_HEADERS)})
    msg = headers_msg(3)
    trace = ns.run(cfg, ns.Scenario(0, msg))
    fails = [e for e in trace.events if e.kind is ns.EventKind.VERIFY and e.detail == "fail"]
    assert [e.node for e in fails] == [2]
    assert fails[0].msg_id != msg.id
    assert ns.measure(trace).delivery_fraction == pytest.approx(1 / 4)


def test_fee_floor_blocks_forwarding():
    cfg = ns.SimConfig(ns.build_topology("ring", 5), fee_floor=10)
    assert ns.measure(ns.run(cfg, ns.Scenario(0, tx_msg(fee=5)))).delivery_fraction == pytest.approx(1 / 5)
    assert ns.measure(ns.run(cfg, ns.Scenario(0, tx_msg(fee=10)))).delivery_fraction == 1.0


def test_rate_limit_drops_excess_sends():
    cfg = ns.SimConfig(ns.build_topology("complete", 6), rate_limit_per_s=2.0)
    trace = ns.run(cfg, ns.Scenario(0, tx_msg()))
    origin_sends = [e for e in trace.events if e.kind is ns.EventKind.SEND and e.node == 0]
    assert len(origin_sends) == 2
    assert any(e.detail.startswith("rate_limit") for e in trace.events)


def test_total_loss_and_zero_forwarding():
    topo = ns.build_topology("path", 3)
    lossy = ns.SimConfig(topo, loss_prob=1.0)
    assert ns.measure(ns.run(lossy, ns.Scenario(0, tx_msg()))).delivery_fraction == pytest.approx(1 / 3)
    quiet = ns.SimConfig(topo, forward_prob=0.0)
    assert ns.measure(ns.run(quiet, ns.Scenario(0, tx_msg()))).redundancy == 0


def test_per_edge_overrides():
    topo = ns.build_topology("path", 3)
    cfg = ns.SimConfig(topo, edge_loss={(1, 2): 1.0})
    m = ns.measure(ns.run(cfg, ns.Scenario(0, tx_msg())))
    assert set(m.first_receipt) == {0, 1}
    slow = ns.SimConfig(topo, edge_delay_means={(0, 1): 1000.0})
    fast = ns.SimConfig(topo)
    t_slow = ns.measure(ns.run(slow, ns.Scenario(0, tx_msg()))).first_receipt[1]
    t_fast = ns.measure(ns.run(fast, ns.Scenario(0, tx_msg()))).first_receipt[1]
    assert t_slow == pytest.approx(1000 * t_fast)


def test_duration_cutoff():
    cfg = ns.SimConfig(ns.build_topology("path", 6))
    m = ns.measure(ns.run(cfg, ns.Scenario(0, tx_msg(), duration_s=0.0)))
    assert m.first_receipt == {0: 0.0}


def test_config_validation():
    topo = ns.build_topology("path", 3)
    with pytest.raises(ValueError):
        ns.SimConfig(topo, loss_prob=1.5)
    with pytest.raises(ValueError):
        ns.SimConfig(topo, delay_mean_s=0)
    with pytest.raises(ValueError):
        ns.run(ns.SimConfig(topo), ns.Scenario(7, tx_msg()))


# -- determinism and serialisation --------------------------------------------------------

def test_same_seed_same_trace():
    topo = ns.build_topology("d_regular_random", 20, 4, seed=2)
    cfg = ns.SimConfig(topo, loss_prob=0.1, forward_prob=0.8, seed=5)
    a = ns.run(cfg, ns.Scenario(3, tx_msg()))
    b = ns.run(cfg, ns.Scenario(3, tx_msg()))
    assert a.to_jsonl() == b.to_jsonl()
    c = ns.run(ns.SimConfig(topo, loss_prob=0.1, forward_prob=0.8, seed=6), ns.Scenario(3, tx_msg()))
    assert c.digest() != a.digest()


def test_config_json_roundtrip():
    topo = ns.build_topology("small_world", 10, 4, rewire_p=0.2, seed=3)
    cfg = ns.SimConfig(
        topo, delay_mean_s=2.0, loss_prob=0.05, forward_prob=0.7, seed=3, fee_floor=4,
        adversaries={4: ns.Adversary(ns.Behavior.SELECTIVE_DROP, frozenset({"ab"}))},
        edge_delay_means={(1, 0): 3.0}, edge_loss={(2, 3): 0.5}, rate_limit_per_s=5.0,
    )
    back = ns.SimConfig.from_json(json.loads(json.dumps(cfg.to_json())))
    assert back == cfg and back.digest() == cfg.digest()
    assert len(cfg.digest()) == 16


def test_trace_jsonl_is_parseable():
    trace = ns.run(ns.SimConfig(ns.build_topology("ring", 4)), ns.Scenario(0, tx_msg()))
    lines = [json.loads(x) for x in trace.to_jsonl().splitlines()]
    assert lines[-1]["inventories"]["0"] == [trace.origin_msg]
    assert {e["kind"] for e in lines[:-1]} <= {"send", "receive", "verify", "drop"}


def test_sweep_and_csv():
    topo = ns.build_topology("ring", 6)
    cfgs = [ns.SimConfig(topo, forward_prob=p) for p in (0.5, 1.0)]
    rows = ns.sweep(cfgs, ns.Scenario(0, tx_msg()))
    text = ns.rows_to_csv(rows, ns.METRIC_COLUMNS)
    assert text.splitlines()[0] == ",".join(ns.METRIC_COLUMNS)
    assert len(text.splitlines()) == 3


def test_scenario_from_json():
    s = ns.scenario_from_json({"origin": 2, "message": {"kind": "headers", "count": 2}, "duration_s": 5})
    assert s.origin == 2 and len(s.message.headers) == 2 and s.duration_s == 5
    assert ns.scenario_from_json({}).duration_s == math.inf
    with pytest.raises(ValueError):
        ns.scenario_from_json({"message": {"kind": "block"}})
