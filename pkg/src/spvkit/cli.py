"""Command-line harness.

Exit codes: 0 success/accept, 1 reject, 2 input error, 3 resource guard.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import netsim, seccalc
from .client import AcceptMode, ClientConfig, ProofBundle, accept_transaction, confirmations, ingest_headers, init_client, is_final, verify_spv
from .fixtures import DEFAULT_MAX_ITER, EASY_BITS, MiningExhausted, block_tree, make_chain
from .headers import ChainParams, HeaderChain, decode_header, encode_header, extend_chain
from .merkle import MerkleProof, prove
from .tx import Transaction

EXIT_OK, EXIT_REJECT, EXIT_INPUT, EXIT_RESOURCE = 0, 1, 2, 3


class InputError(Exception):
    pass


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _load_json(path: str):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def _load_chain(path: str):
    obj = _load_json(path)
    try:
        params = ChainParams(int(obj["network_target_hex"], 16))
        headers = [decode_header(bytes.fromhex(h)) for h in obj["headers"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: malformed chain file: {exc}") from exc
    return params, headers


def _client_for(path: str):
    params, headers = _load_chain(path)
    if not headers:
        raise InputError(f"{path}: chain has no headers")
    try:
        state = init_client(headers[0], ClientConfig(params))
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    ingest_headers(state, headers[1:])
    return state


def _floats(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise InputError(f"bad number list {text!r}") from exc
    if not vals:
        raise InputError("grid must be non-empty")
    return vals


def _emit(args, rows: list[dict], columns: Sequence[str]) -> str:
    if args.format == "json":
        return _dump(rows)
    return netsim.rows_to_csv(rows, columns)


def _output(args, text: str, default_name: str) -> None:
    if args.out:
        out = Path(args.out)
        target = out / default_name if out.is_dir() else out
        _write(target, text)
    else:
        sys.stdout.write(text)


# -- commands -------------------------------------------------------------------------

def cmd_fixture(args) -> int:
    out = Path(args.out or "fixture")
    bits = int(args.target_bits, 16)
    try:
        fx = make_chain(args.blocks, args.txs, bits, args.seed, max_iter=args.max_iter)
    except MiningExhausted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    files = {
        out / "chain.json": _dump({
            "network_target_hex": f"{fx.params.pow_limit:064x}",
            "headers": [encode_header(h).hex() for h in fx.headers],
        }),
        out / "bundle.json": _dump(fx.bundle().to_json()),
    }
    for b, txs in enumerate(fx.blocks):
        tree = fx.trees[b]
        files[out / "blocks" / f"block_{b:04d}.json"] = _dump({
            "index": b,
            "merkle_root": tree.root.hex(),
            "txs": [
                {"hex": tx.to_hex(), "txid": tx.id.hex(), "proof": prove(tree, i).to_json()}
                for i, tx in enumerate(txs)
            ],
        })
    try:
        for path, text in files.items():
            _write(path, text)
    except OSError as exc:
        print(f"error: cannot write fixture: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(f"wrote {len(fx.headers)} headers to {out}")
    return EXIT_OK


def cmd_verify_chain(args) -> int:
    params, headers = _load_chain(args.chain)
    chain, verdicts = extend_chain(HeaderChain(), headers, params)
    if len(chain) == len(headers):
        print(f"OK {len(chain)} headers")
        return EXIT_OK
    print(f"FAIL at header {len(chain)}: {verdicts[-1].value} ({len(chain)} valid)")
    return EXIT_REJECT


def cmd_prove(args) -> int:
    obj = _load_json(args.block)
    try:
        txs = [Transaction.from_hex(t["hex"]) for t in obj["txs"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{args.block}: malformed block file: {exc}") from exc
    if not txs:
        raise InputError("block has no transactions")
    index = args.index
    if args.txid is not None:
        ids = [t.id.hex() for t in txs]
        if args.txid not in ids:
            raise InputError(f"txid {args.txid} not in block")
        index = ids.index(args.txid)
    if index is None or not 0 <= index < len(txs):
        raise InputError("need a valid --index or --txid")
    proof = prove(block_tree(txs), index)
    _output(args, _dump({"txid": txs[index].id.hex(), "block_index": obj.get("index"), "proof": proof.to_json()}), "proof.json")
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        bundle = ProofBundle.from_json(_load_json(args.bundle))
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    state = _client_for(args.chain)
    decision = accept_transaction(state, bundle, AcceptMode(args.mode))
    _output(args, _dump(decision.to_json()), "decision.json")
    return EXIT_OK if decision.accepted else EXIT_REJECT


def cmd_confirmations(args) -> int:
    state = _client_for(args.chain)
    obj = _load_json(args.proof)
    try:
        proof = MerkleProof.from_json(obj["proof"])
        txid = bytes.fromhex(args.txid or obj["txid"])
        block = int(args.block if args.block is not None else obj["block_index"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{args.proof}: {exc}") from exc
    if not 0 <= block < len(state.chain):
        raise InputError(f"block index {block} outside chain")
    verify_spv(state, txid, proof, block)
    n = confirmations(state, txid)
    _output(args, _dump({"txid": txid.hex(), "block_index": block, "confirmations": n,
                         "final": is_final(state, txid)}), "confirmations.json")
    return EXIT_OK if n > 0 else EXIT_REJECT


def cmd_tables(args) -> int:
    alphas = _floats(args.alpha_grid)
    zs = [int(z) for z in _floats(args.z_grid)]
    if any(not 0 <= a < 1 for a in alphas) or any(z < 0 for z in zs):
        raise InputError("alpha must lie in [0,1) and z must be non-negative")
    rows = seccalc.security_table(alphas, zs)
    _output(args, _emit(args, rows, seccalc.TABLE_COLUMNS), "tables.csv")
    return EXIT_OK


def _sim_inputs(args):
    obj = _load_json(args.config)
    try:
        config = netsim.SimConfig.from_json(obj)
        if args.seed is not None:
            config = dataclasses.replace(config, seed=args.seed)
        scen_obj = _load_json(args.scenario) if args.scenario else obj.get("scenario", {})
        scenario = netsim.scenario_from_json(scen_obj, config.seed)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad simulation config: {exc}") from exc
    return config, scenario


def cmd_sim(args) -> int:
    config, scenario = _sim_inputs(args)
    trace = netsim.run(config, scenario)
    row = {**netsim.measure(trace).row(config.digest()), "trace_digest": trace.digest()}
    if args.out:
        out = Path(args.out)
        try:
            _write(out / "trace.jsonl", trace.to_jsonl())
            _write(out / "metrics.csv", netsim.rows_to_csv([row], netsim.METRIC_COLUMNS))
        except OSError as exc:
            raise InputError(str(exc)) from exc
        row["trace_path"] = str(out / "trace.jsonl")
    if args.format == "json":
        sys.stdout.write(_dump(row))
    else:
        sys.stdout.write(netsim.rows_to_csv([row], [*netsim.METRIC_COLUMNS, "trace_digest"]))
    return EXIT_OK


def cmd_sweep(args) -> int:
    base, scenario = _sim_inputs(args)
    probs = _floats(args.forward_probs) if args.forward_probs else [base.forward_prob]
    seeds = [int(s) for s in _floats(args.seeds)] if args.seeds else [base.seed]
    rows = []
    for p in probs:
        for s in seeds:
            cfg = dataclasses.replace(base, forward_prob=p, seed=s)
            m = netsim.measure(netsim.run(cfg, scenario))
            rows.append({**m.row(cfg.digest()), "forward_prob": p, "seed": s})
    columns = ["forward_prob", "seed", *netsim.METRIC_COLUMNS]
    _output(args, _emit(args, rows, columns), "sweep.csv")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default=None, help="output file or directory")
    common.add_argument("--format", choices=("json", "csv"), default="csv")

    parser = argparse.ArgumentParser(prog="spvkit", description="SPV toolkit harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fixture", parents=[common], help="mine a deterministic fixture chain")
    p.add_argument("--blocks", type=int, default=8)
    p.add_argument("--txs", type=int, default=8)
    p.add_argument("--target-bits", default=f"{EASY_BITS:08x}", help="compact target, hex")
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    p.set_defaults(func=cmd_fixture)

    p = sub.add_parser("verify-chain", parents=[common], help="validate a chain file")
    p.add_argument("chain")
    p.set_defaults(func=cmd_verify_chain)

    p = sub.add_parser("prove", parents=[common], help="Merkle proof for a transaction in a block file")
    p.add_argument("block")
    p.add_argument("--index", type=int)
    p.add_argument("--txid")
    p.set_defaults(func=cmd_prove)

    p = sub.add_parser("verify", parents=[common], help="accept or reject a payment bundle")
    p.add_argument("bundle")
    p.add_argument("chain")
    p.add_argument("--mode", choices=[m.value for m in AcceptMode] + ["inclusion", "strict"], default="strict")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("confirmations", parents=[common], help="confirmation depth of a proven transaction")
    p.add_argument("chain")
    p.add_argument("proof", help="proof file as written by `prove`")
    p.add_argument("--txid")
    p.add_argument("--block", type=int)
    p.set_defaults(func=cmd_confirmations)

    p = sub.add_parser("tables", parents=[common], help="fraud / race / reorg probability grid")
    p.add_argument("--alpha-grid", default="0.1,0.2,0.3,0.45")
    p.add_argument("--z-grid", default="0,1,3,6,10")
    p.set_defaults(func=cmd_tables)

    p = sub.add_parser("sim", parents=[common], help="run one gossip simulation")
    p.add_argument("config")
    p.add_argument("--scenario")
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("sweep", parents=[common], help="metrics over a forward-probability / seed grid")
    p.add_argument("config")
    p.add_argument("--scenario")
    p.add_argument("--forward-probs")
    p.add_argument("--seeds")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "mode", None) == "inclusion":
        args.mode = AcceptMode.INCLUSION_ONLY.value
    if args.command == "fixture" and args.seed is None:
        args.seed = 0
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
