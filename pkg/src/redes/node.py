"""Runtime state of one Redes node, independent of the HTTP layer.

All mutations of chain, pending pool and peer registry go through ``_lock``.
Mining and peer fetches run outside it; their results are committed under it.
"""

from __future__ import annotations

import logging
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Sequence

from redes.consensus import (
    Fetcher,
    InvalidAddress,
    PeerNotFound,
    PeerRegistry,
    ResolutionReport,
    SelfRegistration,
    accept_block,
    http_fetcher,
    normalize_address,
    resolve_conflicts,
)
from redes.ledger import (
    DEFAULT_DIFFICULTY,
    GENESIS,
    Block,
    Transaction,
    canonical_hash,
    check_difficulty,
    forge_block_with_cost,
    new_transaction,
    valid_chain,
)
from redes.son import Actuator, ActuatorBackend, AclState
from redes.storage import ChainLog

logger = logging.getLogger(__name__)

CHAIN_LOG = "chain.log"
NODE_ID_FILE = "node_id"


class ForgeConflict(RuntimeError):
    """The tip moved twice while mining; the caller may retry."""


class Node:
    def __init__(
        self,
        *,
        node_id: str | None = None,
        address: str | None = None,
        difficulty: int = DEFAULT_DIFFICULTY,
        backend: ActuatorBackend | None = None,
        log: ChainLog | None = None,
        chain: Sequence[Block] | None = None,
        fetcher: Fetcher | None = None,
        fetch_workers: int = 1,
        clock: Callable[[], float] = time.time,
    ):
        self.node_id = node_id or uuid.uuid4().hex
        self.difficulty = check_difficulty(difficulty)
        self.registry = PeerRegistry(address)
        self.actuator = Actuator(backend)
        self.log = log
        self.fetcher = fetcher or http_fetcher()
        self.fetch_workers = fetch_workers
        self.clock = clock
        self.pending: list[Transaction] = []
        self.chain: list[Block] = list(chain) if chain is not None else [GENESIS]
        if not valid_chain(self.chain, self.difficulty):
            raise ValueError("initial chain is not valid")
        self.actuator.replay_chain(self.chain)
        self._lock = threading.RLock()

    @classmethod
    def open(cls, data_dir: str | Path, **kwargs) -> Node:
        """Load (or initialise) a node persisted under ``data_dir``."""
        data_dir = Path(data_dir)
        data_dir.mkdir(parents=True, exist_ok=True)
        id_file = data_dir / NODE_ID_FILE
        if id_file.exists():
            node_id = id_file.read_text(encoding="utf-8").strip()
        else:
            node_id = uuid.uuid4().hex
            id_file.write_text(node_id + "\n", encoding="utf-8")
        log = ChainLog(data_dir / CHAIN_LOG)
        chain = log.load(kwargs.get("difficulty", DEFAULT_DIFFICULTY))
        return cls(node_id=node_id, log=log, chain=chain, **kwargs)

    @property
    def address(self) -> str | None:
        return self.registry.self_address

    @property
    def tip(self) -> Block:
        return self.chain[-1]

    def chain_snapshot(self) -> list[Block]:
        with self._lock:
            return list(self.chain)

    def acl_snapshot(self) -> AclState:
        with self._lock:
            return AclState(dict(self.actuator.acl.entries))

    def acl_report(self) -> dict:
        with self._lock:
            return {
                "acl": self.actuator.acl.to_dict(),
                "applied": dict(sorted(self.actuator.applied.items())),
                "backend_failures": len(self.actuator.failures),
            }

    def peers(self) -> list[str]:
        with self._lock:
            return list(self.registry)

    def register_peers(self, addresses: Iterable[str]) -> list[str]:
        """Add all addresses or none of them."""
        with self._lock:
            normalized = [normalize_address(a) for a in addresses]
            for addr in normalized:
                if addr == self.registry.self_address:
                    raise SelfRegistration(f"refusing to register own address {addr}")
            for addr in normalized:
                self.registry.register(addr)
            return normalized

    def remove_peers(self, addresses: Iterable[str]) -> tuple[list[str], list[str]]:
        removed, not_found = [], []
        with self._lock:
            for address in addresses:
                try:
                    removed.append(self.registry.remove(address))
                except (PeerNotFound, InvalidAddress):
                    not_found.append(address)
        return removed, not_found

    def submit_transaction(self, sender: str, recipient: str, mac: str, action: str) -> tuple[Transaction, int]:
        tx = new_transaction(sender, recipient, mac, action)
        with self._lock:
            self.pending.append(tx)
            return tx, self.tip.index + 1

    def forge(self) -> tuple[Block, int]:
        """Mine the pending pool into a block, append, persist and actuate.

        Returns the block and the hash attempts spent (summed over a retry).
        """
        spent = 0
        for _ in range(2):
            with self._lock:
                chain = list(self.chain)
                batch = list(self.pending)
            block, attempts = forge_block_with_cost(chain, batch, self.difficulty, self.clock())
            spent += attempts
            with self._lock:
                if self.tip is not chain[-1]:
                    logger.info("tip moved while mining block %d, retrying", block.index)
                    continue
                self.chain = accept_block(self.chain, block, self.difficulty)
                del self.pending[: len(batch)]
                if self.log is not None:
                    self.log.append(block)
                self.actuator.process_son(block)
                return block, spent
        raise ForgeConflict("chain tip changed twice during mining")

    def resolve(self, fetch: Fetcher | None = None) -> ResolutionReport:
        fetch = fetch or self.fetcher
        peers = self.peers()
        fetched = self._fetch_all(peers, fetch)

        def prefetched(peer: str):
            result = fetched[peer]
            if isinstance(result, BaseException):
                raise result
            return result

        with self._lock:
            chain, report = resolve_conflicts(self.chain, peers, prefetched, self.difficulty)
            if report.replaced:
                self.chain = chain
                if self.log is not None:
                    self.log.rewrite(chain)
                self.actuator.replay_chain(chain)
        return report

    def _fetch_all(self, peers: list[str], fetch: Fetcher) -> dict:
        def attempt(peer):
            try:
                return fetch(peer)
            except Exception as exc:  # noqa: BLE001 - reported per peer by resolve_conflicts
                return exc

        if self.fetch_workers <= 1 or len(peers) <= 1:
            return {peer: attempt(peer) for peer in peers}
        with ThreadPoolExecutor(max_workers=min(self.fetch_workers, len(peers))) as pool:
            return dict(zip(peers, pool.map(attempt, peers)))

    def status(self) -> dict:
        with self._lock:
            return {
                "node_id": self.node_id,
                "address": self.address,
                "length": len(self.chain),
                "tip_hash": canonical_hash(self.tip),
                "pending": len(self.pending),
                "peers": list(self.registry),
                "difficulty": self.difficulty,
            }
