"""Blocks, transactions, canonical hashing and the issuer-side proof of work.

Everything here is a pure value or a pure function. The JSON shape produced by
:meth:`Block.to_dict` is the wire and on-disk format used by every other module.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import time
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

DEFAULT_DIFFICULTY = 4
MAX_DIFFICULTY = 16
MAX_IDENTIFIER_LENGTH = 128

ALLOW = "allow"
DENY = "deny"
ACTIONS = (ALLOW, DENY)

# Both vocabularies used for access control end up as one of the two on-chain values.
ACTION_ALIASES = {
    "allow": ALLOW,
    "allowed": ALLOW,
    "add": ALLOW,
    "deny": DENY,
    "denied": DENY,
    "remove": DENY,
    "delete": DENY,
}

CANONICAL_MAC = re.compile(r"^[0-9a-f]{2}(:[0-9a-f]{2}){5}$")
_SEPARATED_MAC = re.compile(r"^[0-9a-f]{2}([:-])[0-9a-f]{2}(\1[0-9a-f]{2}){4}$")
_DOTTED_MAC = re.compile(r"^[0-9a-f]{4}\.[0-9a-f]{4}\.[0-9a-f]{4}$")
_BARE_MAC = re.compile(r"^[0-9a-f]{12}$")
_HEX_DIGEST = re.compile(r"^[0-9a-f]{64}$")


class LedgerError(ValueError):
    """Base class for rejected ledger input."""


class InvalidMac(LedgerError):
    pass


class InvalidAction(LedgerError):
    pass


class EmptyIdentifier(LedgerError):
    pass


class EmptyPending(LedgerError):
    pass


class InvalidDifficulty(LedgerError):
    pass


class MalformedBlock(LedgerError):
    """Raised when wire/log JSON does not describe a well-formed block."""


def check_difficulty(difficulty: int) -> int:
    if isinstance(difficulty, bool) or not isinstance(difficulty, int):
        raise InvalidDifficulty(f"difficulty must be an integer, got {difficulty!r}")
    if not 1 <= difficulty <= MAX_DIFFICULTY:
        raise InvalidDifficulty(f"difficulty must be in 1..{MAX_DIFFICULTY}, got {difficulty}")
    return difficulty


def normalize_mac(mac: str) -> str:
    """Return ``mac`` as six lowercase ``:``-separated octets.

    Accepts ``:`` or ``-`` separated pairs, ``xxxx.xxxx.xxxx`` grouping and bare
    12-digit hex.
    """
    if not isinstance(mac, str):
        raise InvalidMac(f"MAC address must be a string, got {type(mac).__name__}")
    value = mac.strip().lower()
    if _SEPARATED_MAC.match(value):
        digits = value.replace(value[2], "")
    elif _DOTTED_MAC.match(value):
        digits = value.replace(".", "")
    elif _BARE_MAC.match(value):
        digits = value
    else:
        raise InvalidMac(f"malformed MAC address: {mac!r}")
    return ":".join(digits[i : i + 2] for i in range(0, 12, 2))


def normalize_action(action: str) -> str:
    if not isinstance(action, str):
        raise InvalidAction(f"action must be a string, got {type(action).__name__}")
    try:
        return ACTION_ALIASES[action.strip().lower()]
    except KeyError:
        raise InvalidAction(f"unknown action {action!r}; expected one of {sorted(ACTION_ALIASES)}") from None


def _check_identifier(name: str, value) -> str:
    if not isinstance(value, str) or not value.strip():
        raise EmptyIdentifier(f"{name} must be a non-empty string")
    if len(value) > MAX_IDENTIFIER_LENGTH:
        raise EmptyIdentifier(f"{name} longer than {MAX_IDENTIFIER_LENGTH} characters")
    return value


@dataclass(frozen=True)
class Transaction:
    sender: str
    recipient: str
    mac: str
    action: str

    def to_dict(self) -> dict:
        return {
            "sender": self.sender,
            "recipient": self.recipient,
            "mac": self.mac,
            "action": self.action,
        }

    @classmethod
    def from_dict(cls, data) -> Transaction:
        """Strict parse: wire transactions must already be canonical."""
        if not isinstance(data, dict) or set(data) != {"sender", "recipient", "mac", "action"}:
            raise MalformedBlock(f"transaction must have exactly sender/recipient/mac/action: {data!r}")
        try:
            sender = _check_identifier("sender", data["sender"])
            recipient = _check_identifier("recipient", data["recipient"])
        except EmptyIdentifier as exc:
            raise MalformedBlock(str(exc)) from None
        mac, action = data["mac"], data["action"]
        if not isinstance(mac, str) or not CANONICAL_MAC.match(mac):
            raise MalformedBlock(f"non-canonical MAC in transaction: {mac!r}")
        if action not in ACTIONS:
            raise MalformedBlock(f"non-canonical action in transaction: {action!r}")
        return cls(sender, recipient, mac, action)


def new_transaction(sender: str, recipient: str, mac: str, action: str) -> Transaction:
    """Validate and normalize a submitted transaction."""
    return Transaction(
        sender=_check_identifier("sender", sender),
        recipient=_check_identifier("recipient", recipient),
        mac=normalize_mac(mac),
        action=normalize_action(action),
    )


@dataclass(frozen=True)
class Block:
    index: int
    timestamp: float
    transactions: tuple[Transaction, ...] = field(default_factory=tuple)
    proof: int = 0
    previous_hash: str = ""

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "timestamp": self.timestamp,
            "transactions": [tx.to_dict() for tx in self.transactions],
            "proof": self.proof,
            "previous_hash": self.previous_hash,
        }

    def canonical_json(self) -> str:
        return canonical_json(self)

    @classmethod
    def from_dict(cls, data) -> Block:
        if not isinstance(data, dict):
            raise MalformedBlock(f"block must be a JSON object, got {type(data).__name__}")
        expected = {"index", "timestamp", "transactions", "proof", "previous_hash"}
        if set(data) != expected:
            raise MalformedBlock(f"block keys must be exactly {sorted(expected)}, got {sorted(data)}")
        index, timestamp, proof = data["index"], data["timestamp"], data["proof"]
        if not _is_int(index) or index < 1:
            raise MalformedBlock(f"index must be a positive integer, got {index!r}")
        if not _is_int(proof) or proof < 0:
            raise MalformedBlock(f"proof must be a non-negative integer, got {proof!r}")
        if isinstance(timestamp, bool) or not isinstance(timestamp, (int, float)):
            raise MalformedBlock(f"timestamp must be a number, got {timestamp!r}")
        if not math.isfinite(timestamp) or timestamp < 0:
            raise MalformedBlock(f"timestamp out of range: {timestamp!r}")
        previous_hash = data["previous_hash"]
        if not isinstance(previous_hash, str) or not previous_hash:
            raise MalformedBlock("previous_hash must be a non-empty string")
        if index > 1 and not _HEX_DIGEST.match(previous_hash):
            raise MalformedBlock(f"previous_hash is not a SHA-256 hex digest: {previous_hash!r}")
        raw_txs = data["transactions"]
        if not isinstance(raw_txs, list):
            raise MalformedBlock("transactions must be a list")
        if index > 1 and not raw_txs:
            raise MalformedBlock("only the genesis block may have no transactions")
        txs = tuple(Transaction.from_dict(tx) for tx in raw_txs)
        return cls(index, float(timestamp), txs, proof, previous_hash)


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


# Network-wide constant first block; every chain must start with exactly this.
GENESIS = Block(index=1, timestamp=0.0, transactions=(), proof=100, previous_hash="1")


def canonical_json(block: Block) -> str:
    """Sorted-key, whitespace-free JSON with the timestamp fixed to 6 decimals."""
    txs = ",".join(
        json.dumps(tx.to_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        for tx in block.transactions
    )
    previous_hash = json.dumps(block.previous_hash, ensure_ascii=False)
    return (
        f'{{"index":{block.index},"previous_hash":{previous_hash},"proof":{block.proof},'
        f'"timestamp":{block.timestamp:.6f},"transactions":[{txs}]}}'
    )


def canonical_hash(block: Block) -> str:
    return hashlib.sha256(canonical_json(block).encode("utf-8")).hexdigest()


def valid_proof(last_proof: int, proof: int, difficulty: int = DEFAULT_DIFFICULTY) -> bool:
    digest = hashlib.sha256(f"{last_proof}{proof}".encode("ascii")).hexdigest()
    return digest.startswith("0" * difficulty)


class MiningResult(NamedTuple):
    proof: int
    attempts: int


def mine_proof(last_proof: int, difficulty: int = DEFAULT_DIFFICULTY) -> MiningResult:
    """Smallest non-negative proof accepted after ``last_proof``, plus hashes spent finding it."""
    check_difficulty(difficulty)
    prefix = "0" * difficulty
    head = str(last_proof)
    proof = 0
    while not hashlib.sha256(f"{head}{proof}".encode("ascii")).hexdigest().startswith(prefix):
        proof += 1
    return MiningResult(proof, proof + 1)


def forge_block_with_cost(
    chain: Sequence[Block],
    pending: Iterable[Transaction],
    difficulty: int = DEFAULT_DIFFICULTY,
    timestamp: float | None = None,
) -> tuple[Block, int]:
    txs = tuple(pending)
    if not txs:
        raise EmptyPending("no pending transactions to forge")
    tip = chain[-1]
    proof, attempts = mine_proof(tip.proof, difficulty)
    if timestamp is None:
        timestamp = time.time()
    block = Block(
        index=tip.index + 1,
        timestamp=round(float(timestamp), 6),
        transactions=txs,
        proof=proof,
        previous_hash=canonical_hash(tip),
    )
    return block, attempts


def forge_block(
    chain: Sequence[Block],
    pending: Iterable[Transaction],
    difficulty: int = DEFAULT_DIFFICULTY,
    timestamp: float | None = None,
) -> Block:
    """Mine and build the block extending ``chain`` with ``pending`` in submission order."""
    return forge_block_with_cost(chain, pending, difficulty, timestamp)[0]


@dataclass
class ValidationStats:
    """Hash evaluations spent validating chains."""

    linkage_hashes: int = 0
    proof_checks: int = 0

    @property
    def total(self) -> int:
        return self.linkage_hashes + self.proof_checks


def valid_chain(
    chain: Sequence[Block],
    difficulty: int = DEFAULT_DIFFICULTY,
    stats: ValidationStats | None = None,
) -> bool:
    """Check genesis, hash linkage, index continuity and proofs of every block.

    Pure: applying the chain to the access-control list is the adopter's job.
    """
    if not chain or chain[0] != GENESIS:
        return False
    last_block = chain[0]
    for block in chain[1:]:
        if stats is not None:
            stats.linkage_hashes += 1
        if block.previous_hash != canonical_hash(last_block):
            return False
        if block.index != last_block.index + 1:
            return False
        if stats is not None:
            stats.proof_checks += 1
        if not valid_proof(last_block.proof, block.proof, difficulty):
            return False
        last_block = block
    return True


def chain_to_dicts(chain: Sequence[Block]) -> list[dict]:
    return [block.to_dict() for block in chain]


def chain_from_dicts(data) -> list[Block]:
    if not isinstance(data, list):
        raise MalformedBlock("chain must be a JSON array")
    return [Block.from_dict(item) for item in data]


def chain_response_json(chain: Sequence[Block]) -> str:
    """Body of the chain endpoint, with every block in canonical form."""
    blocks = ",".join(canonical_json(block) for block in chain)
    return f'{{"chain":[{blocks}],"length":{len(chain)}}}'
