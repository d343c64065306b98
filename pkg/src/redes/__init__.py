"""Redes: a permissioned, currency-free blockchain for wireless network access federation."""

from redes.ledger import (
    GENESIS,
    Block,
    Transaction,
    canonical_hash,
    forge_block,
    mine_proof,
    new_transaction,
    valid_chain,
    valid_proof,
)

__all__ = [
    "GENESIS",
    "Block",
    "Transaction",
    "canonical_hash",
    "forge_block",
    "mine_proof",
    "new_transaction",
    "valid_chain",
    "valid_proof",
]

__version__ = "0.1.0"
