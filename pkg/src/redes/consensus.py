"""Permissioned peer registry and longest-valid-chain conflict resolution."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Optional, Sequence
from urllib.parse import urlsplit

import requests

from redes.ledger import (
    DEFAULT_DIFFICULTY,
    Block,
    LedgerError,
    canonical_hash,
    chain_from_dicts,
    valid_chain,
    valid_proof,
    ValidationStats,
)

logger = logging.getLogger(__name__)

FETCH_TIMEOUT = 2.0

Chain = Sequence[Block]
Fetcher = Callable[[str], Optional[list]]


class InvalidAddress(ValueError):
    pass


class SelfRegistration(ValueError):
    pass


class PeerNotFound(KeyError):
    pass


class BlockRejected(ValueError):
    pass


class StaleBlock(BlockRejected):
    pass


class BadLinkage(BlockRejected):
    pass


class BadProof(BlockRejected):
    pass


def normalize_address(address: str) -> str:
    """Reduce a peer address to ``scheme://host:port``.

    A missing scheme defaults to ``http``. Paths other than ``/`` are rejected.
    """
    if not isinstance(address, str) or not address.strip():
        raise InvalidAddress(f"peer address must be a non-empty string: {address!r}")
    raw = address.strip()
    if "://" not in raw:
        raw = "http://" + raw
    parts = urlsplit(raw)
    if parts.scheme not in ("http", "https"):
        raise InvalidAddress(f"unsupported scheme in {address!r}")
    try:
        port = parts.port
    except ValueError:
        raise InvalidAddress(f"bad port in {address!r}") from None
    if not parts.hostname or port is None:
        raise InvalidAddress(f"peer address needs host and port: {address!r}")
    if parts.path not in ("", "/") or parts.query or parts.fragment or parts.username:
        raise InvalidAddress(f"peer address must not carry a path, query or credentials: {address!r}")
    host = parts.hostname
    if ":" in host:
        host = f"[{host}]"
    return f"{parts.scheme}://{host}:{port}"


class PeerRegistry:
    """Set of known peer addresses, never including this node's own address."""

    def __init__(self, self_address: str | None = None, peers: Iterable[str] = ()):
        self.self_address = normalize_address(self_address) if self_address else None
        self._peers: set[str] = set()
        for peer in peers:
            self.register(peer)

    def register(self, address: str) -> str:
        addr = normalize_address(address)
        if addr == self.self_address:
            raise SelfRegistration(f"refusing to register own address {addr}")
        self._peers.add(addr)
        return addr

    def remove(self, address: str) -> str:
        addr = normalize_address(address)
        if addr not in self._peers:
            raise PeerNotFound(addr)
        self._peers.remove(addr)
        return addr

    def __contains__(self, address: str) -> bool:
        try:
            return normalize_address(address) in self._peers
        except InvalidAddress:
            return False

    def __len__(self) -> int:
        return len(self._peers)

    def __iter__(self):
        # Query order is lexicographic so resolution is deterministic.
        return iter(sorted(self._peers))

    def __repr__(self) -> str:
        return f"PeerRegistry({sorted(self._peers)!r})"


@dataclass
class ResolutionReport:
    replaced: bool = False
    adopted_from: str | None = None
    old_length: int = 0
    new_length: int = 0
    peers_queried: int = 0
    peers_unreachable: int = 0
    peers_invalid_chain: int = 0
    validation_hashes: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def resolve_conflicts(
    local: Chain,
    peers: Iterable[str],
    fetch: Fetcher,
    difficulty: int = DEFAULT_DIFFICULTY,
    on_adopt: Callable[[list[Block]], None] | None = None,
) -> tuple[list[Block], ResolutionReport]:
    """Replace ``local`` with the longest valid chain held by any peer.

    Only chains strictly longer than the best seen so far are validated, so an
    equal-length rival never displaces the local chain. ``fetch`` returns the
    peer's chain or ``None``; a :class:`LedgerError` counts against the peer as
    an invalid chain, anything else as unreachable.
    """
    report = ResolutionReport(old_length=len(local), new_length=len(local))
    stats = ValidationStats()
    best: list[Block] | None = None
    max_length = len(local)

    for peer in peers:
        report.peers_queried += 1
        try:
            chain = fetch(peer)
        except LedgerError as exc:
            logger.warning("peer %s sent a malformed chain: %s", peer, exc)
            report.peers_invalid_chain += 1
            continue
        except Exception as exc:  # noqa: BLE001 - a bad peer must never abort resolution
            logger.warning("peer %s failed: %s", peer, exc)
            chain = None
        if chain is None:
            report.peers_unreachable += 1
            continue
        if len(chain) <= max_length:
            continue
        if not valid_chain(chain, difficulty, stats):
            report.peers_invalid_chain += 1
            continue
        max_length = len(chain)
        best = list(chain)
        report.adopted_from = peer

    report.validation_hashes = stats.total
    if best is None:
        return list(local), report

    report.replaced = True
    report.new_length = len(best)
    if on_adopt is not None:
        on_adopt(best)
    return best, report


def accept_block(
    local: Chain,
    block: Block,
    difficulty: int = DEFAULT_DIFFICULTY,
    on_applied: Callable[[Block], None] | None = None,
) -> list[Block]:
    """Append ``block`` if it extends the tip; raise a :class:`BlockRejected` otherwise."""
    tip = local[-1]
    if block.index <= tip.index:
        raise StaleBlock(f"block {block.index} does not extend tip {tip.index}")
    if block.index != tip.index + 1 or block.previous_hash != canonical_hash(tip):
        raise BadLinkage(f"block {block.index} is not linked to tip {tip.index}")
    if not valid_proof(tip.proof, block.proof, difficulty):
        raise BadProof(f"proof {block.proof} fails difficulty {difficulty} after {tip.proof}")
    extended = list(local)
    extended.append(block)
    if on_applied is not None:
        on_applied(block)
    return extended


def parse_chain_response(payload) -> list[Block]:
    """Decode a chain endpoint body; the declared length must match the block count."""
    if not isinstance(payload, dict) or "chain" not in payload:
        raise LedgerError("chain response lacks a 'chain' field")
    chain = chain_from_dicts(payload["chain"])
    if "length" in payload and payload["length"] != len(chain):
        raise LedgerError(f"declared length {payload['length']} != {len(chain)} blocks")
    return chain


def http_fetcher(timeout: float = FETCH_TIMEOUT, session: requests.Session | None = None) -> Fetcher:
    """Fetcher that GETs ``<peer>/chain``.

    Transport failures yield ``None``; a malformed body raises :class:`LedgerError`.
    """
    http = session or requests.Session()

    def fetch(peer: str) -> list[Block] | None:
        try:
            response = http.get(f"{peer}/chain", timeout=timeout)
            response.raise_for_status()
            return parse_chain_response(response.json())
        except requests.RequestException as exc:
            logger.info("could not fetch chain from %s: %s", peer, exc)
            return None

    return fetch
