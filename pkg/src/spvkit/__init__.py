"""Simplified payment verification toolkit.

Modules:

* :mod:`spvkit.merkle` -- Merkle trees and inclusion proofs
* :mod:`spvkit.headers` -- header codec, proof-of-work, chain selection, CHT
* :mod:`spvkit.client` -- the SPV client state machine
* :mod:`spvkit.seccalc` -- security and resource calculators
* :mod:`spvkit.netsim` -- seeded gossip simulator
* :mod:`spvkit.cli` -- command-line harness
"""
from .client import (
    AcceptMode,
    ClientConfig,
    ClientState,
    ProofBundle,
    accept_transaction,
    confirmations,
    ingest_headers,
    init_client,
    verify_spv,
)
from .headers import BlockHeader, ChainParams, HeaderChain, parse_chain, select_chain, validate_header
from .merkle import MerkleProof, MerkleTree, build_tree, prove, verify_proof
from .tx import Transaction, TxInput, TxOutput

__version__ = "0.1.0"
