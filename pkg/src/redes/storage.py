"""Append-only chain log: one canonical block JSON per line.

Accepted blocks are appended and fsynced. Adopting a peer's chain rewrites the
whole file through a temp file and an atomic rename. Restore keeps the longest
valid prefix and drops anything after it (torn writes, garbage, broken links).
"""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Sequence

from redes.consensus import BlockRejected, accept_block
from redes.ledger import DEFAULT_DIFFICULTY, GENESIS, Block, LedgerError, canonical_json

logger = logging.getLogger(__name__)


class CorruptLog(RuntimeError):
    """The log has no usable genesis line and cannot be recovered."""


class ChainLog:
    def __init__(self, path: str | os.PathLike, sync: bool = True):
        self.path = Path(path)
        self.sync = sync

    def _fsync(self, fd: int) -> None:
        if self.sync:
            os.fsync(fd)

    def append(self, block: Block) -> None:
        line = (canonical_json(block) + "\n").encode("utf-8")
        with open(self.path, "ab") as fh:
            fh.write(line)
            fh.flush()
            self._fsync(fh.fileno())

    def rewrite(self, chain: Sequence[Block]) -> None:
        tmp = self.path.with_name(self.path.name + ".tmp")
        data = "".join(canonical_json(block) + "\n" for block in chain).encode("utf-8")
        with open(tmp, "wb") as fh:
            fh.write(data)
            fh.flush()
            self._fsync(fh.fileno())
        os.replace(tmp, self.path)
        self._sync_dir()

    def _sync_dir(self) -> None:
        if not self.sync or os.name != "posix":
            return
        fd = os.open(self.path.parent, os.O_RDONLY)
        try:
            os.fsync(fd)
        finally:
            os.close(fd)

    def load(self, difficulty: int = DEFAULT_DIFFICULTY) -> list[Block]:
        """Restore the chain, truncating the file to its longest valid prefix."""
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if not self.path.exists() or self.path.stat().st_size == 0:
            self.rewrite([GENESIS])
            return [GENESIS]

        raw = self.path.read_bytes()
        lines = raw.split(b"\n")
        chain: list[Block] = []
        for number, line in enumerate(lines, start=1):
            if not line.strip():
                if number != len(lines):
                    logger.warning("%s: blank line %d, truncating", self.path, number)
                break
            try:
                block = Block.from_dict(json.loads(line.decode("utf-8")))
            except (UnicodeDecodeError, json.JSONDecodeError, LedgerError) as exc:
                logger.warning("%s: unreadable line %d (%s), truncating", self.path, number, exc)
                break
            if not chain:
                if block != GENESIS:
                    raise CorruptLog(f"{self.path}: first record is not the genesis block")
                chain.append(block)
                continue
            try:
                chain = accept_block(chain, block, difficulty)
            except BlockRejected as exc:
                logger.warning("%s: line %d breaks the chain (%s), truncating", self.path, number, exc)
                break

        if not chain:
            raise CorruptLog(f"{self.path}: no readable genesis record")
        expected = "".join(canonical_json(block) + "\n" for block in chain).encode("utf-8")
        if raw != expected:
            logger.warning("%s: rewriting log with %d valid blocks", self.path, len(chain))
            self.rewrite(chain)
        return chain
