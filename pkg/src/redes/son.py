"""Materialize chain state into a MAC access-control list and enforce it.

The ACL is always a last-writer-wins fold of the chain. Backends only ever see
the difference between that fold and what they last applied successfully, so a
failed backend call is simply retried at the next replay.
"""

from __future__ import annotations

import logging
import subprocess
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Protocol, Sequence

from redes.ledger import ALLOW, DENY, Block

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AclEntry:
    action: str
    block_index: int
    position: int


@dataclass
class AclState:
    entries: dict[str, AclEntry] = field(default_factory=dict)

    def action(self, mac: str) -> str | None:
        entry = self.entries.get(mac)
        return entry.action if entry else None

    def actions(self) -> dict[str, str]:
        return {mac: entry.action for mac, entry in sorted(self.entries.items())}

    def fold_block(self, block: Block) -> AclState:
        entries = dict(self.entries)
        for position, tx in enumerate(block.transactions):
            entries[tx.mac] = AclEntry(tx.action, block.index, position)
        return AclState(entries)

    def to_dict(self) -> dict:
        return {
            mac: {"action": e.action, "block_index": e.block_index, "position": e.position}
            for mac, e in sorted(self.entries.items())
        }


def fold_chain(chain: Sequence[Block]) -> AclState:
    acl = AclState()
    for block in chain:
        acl = acl.fold_block(block)
    return acl


class BackendFailure(RuntimeError):
    pass


class ActuatorBackend(Protocol):
    def apply(self, mac: str, action: str) -> None: ...

    def revoke(self, mac: str) -> None: ...


class SimulatedFirewall:
    """In-memory rule table standing in for a router firewall.

    ``journal`` records only calls that changed the table. MACs in ``fail_on``
    raise :class:`BackendFailure` until removed from the set.
    """

    def __init__(self, fail_on: Iterable[str] = ()):
        self.rules: dict[str, str] = {}
        self.journal: list[tuple[str, str, str | None]] = []
        self.calls = 0
        self.fail_on = set(fail_on)

    def _check(self, mac: str) -> None:
        self.calls += 1
        if mac in self.fail_on:
            raise BackendFailure(f"injected failure for {mac}")

    def apply(self, mac: str, action: str) -> None:
        self._check(mac)
        if self.rules.get(mac) != action:
            self.rules[mac] = action
            self.journal.append(("apply", mac, action))

    def revoke(self, mac: str) -> None:
        self._check(mac)
        if mac in self.rules:
            del self.rules[mac]
            self.journal.append(("revoke", mac, None))

    def query(self, mac: str) -> str | None:
        return self.rules.get(mac)


class CommandFailed(BackendFailure):
    def __init__(self, step: int, name: str, command: str, returncode: int):
        super().__init__(f"step {step} ({name}) exited {returncode}: {command}")
        self.step = step
        self.name = name
        self.command = command
        self.returncode = returncode


# OpenWRT uci commands. Named sections keep add/delete idempotent per MAC.
DEFAULT_TEMPLATES = {
    "add_rule": "uci set firewall.redes_{mac_id}=rule",
    "set_target": "uci set firewall.redes_{mac_id}.target=ACCEPT",
    "set_proto": "uci set firewall.redes_{mac_id}.proto='tcp udp icmp'",
    "set_src": "uci set firewall.redes_{mac_id}.src=lan",
    "set_src_mac": "uci set firewall.redes_{mac_id}.src_mac={mac}",
    "commit_reload": "uci commit firewall && /etc/init.d/firewall reload",
    "delete_rule": "uci -q delete firewall.redes_{mac_id}",
}

ALLOW_STEPS = ("add_rule", "set_target", "set_proto", "set_src", "set_src_mac", "commit_reload")
DENY_STEPS = ("delete_rule", "commit_reload")

Runner = Callable[[str], int]


def shell_runner(command: str) -> int:
    return subprocess.call(command, shell=True)


class CommandTemplateBackend:
    """Drives a firewall by rendering shell command templates.

    Templates may use ``{mac}`` and ``{mac_id}`` (the MAC without separators).
    """

    def __init__(self, templates: Mapping[str, str] | None = None, runner: Runner = shell_runner):
        self.templates = dict(DEFAULT_TEMPLATES)
        if templates:
            unknown = set(templates) - set(DEFAULT_TEMPLATES)
            if unknown:
                raise ValueError(f"unknown command templates: {sorted(unknown)}")
            self.templates.update(templates)
        self.runner = runner

    def render(self, name: str, mac: str) -> str:
        return self.templates[name].format(mac=mac, mac_id=mac.replace(":", ""))

    def _run(self, steps: Sequence[str], mac: str) -> None:
        for number, name in enumerate(steps, start=1):
            command = self.render(name, mac)
            code = self.runner(command)
            if code != 0:
                raise CommandFailed(number, name, command, code)

    def apply(self, mac: str, action: str) -> None:
        self._run(ALLOW_STEPS if action == ALLOW else DENY_STEPS, mac)

    def revoke(self, mac: str) -> None:
        self._run(DENY_STEPS, mac)


class Actuator:
    """Keeps an ACL in step with the chain and pushes changes to a backend."""

    def __init__(self, backend: ActuatorBackend | None = None):
        self.backend = backend if backend is not None else SimulatedFirewall()
        self.acl = AclState()
        self.applied: dict[str, str] = {}
        self.failures: list[tuple[str, str]] = []

    def process_son(self, block: Block) -> AclState:
        self.acl = self.acl.fold_block(block)
        self._sync({tx.mac for tx in block.transactions})
        return self.acl

    def replay_chain(self, chain: Sequence[Block]) -> AclState:
        self.acl = fold_chain(chain)
        self._sync(set(self.acl.entries) | set(self.applied))
        return self.acl

    def _sync(self, macs: Iterable[str]) -> None:
        for mac in sorted(macs):
            desired = self.acl.action(mac)
            if desired == self.applied.get(mac):
                continue
            try:
                if desired is None:
                    self.backend.revoke(mac)
                    del self.applied[mac]
                else:
                    self.backend.apply(mac, desired)
                    self.applied[mac] = desired
            except BackendFailure as exc:
                logger.warning("backend failed for %s: %s", mac, exc)
                self.failures.append((mac, str(exc)))


def make_backend(kind: str, templates: Mapping[str, str] | None = None, runner: Runner = shell_runner):
    if kind == "simulated":
        return SimulatedFirewall()
    if kind == "command":
        return CommandTemplateBackend(templates, runner)
    raise ValueError(f"unknown actuator backend {kind!r}")


__all__ = [
    "ALLOW",
    "DENY",
    "AclEntry",
    "AclState",
    "Actuator",
    "ActuatorBackend",
    "BackendFailure",
    "CommandFailed",
    "CommandTemplateBackend",
    "SimulatedFirewall",
    "fold_chain",
    "make_backend",
]
