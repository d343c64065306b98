"""Deterministic in-process simulation of a Redes network.

Nodes are ordinary :class:`~redes.node.Node` objects whose fetcher hands over
the peer's chain directly, honouring topology and partitions. No sockets.

A *round* is synchronous: every node resolves against the chains its peers
held when the round started, so a chain travels one hop per round.

Scenario JSON::

    {"seed": 1, "nodes": ["ap1", "ap2", "ap3"], "topology": "full", "difficulty": 2,
     "script": [{"op": "submit_tx", "node": "ap1", "mac": "02:00:00:00:00:01"},
                {"op": "forge", "node": "ap1"},
                {"op": "resolve_until_fixpoint"}]}

Ops: ``submit_tx``, ``forge``, ``resolve``, ``resolve_round``,
``resolve_until_fixpoint``, ``partition``, ``heal``, ``tamper``.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import random
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from redes.ledger import Block, Transaction
from redes.node import Node
from redes.son import SimulatedFirewall

SIM_EPOCH = 1_560_000_000.0
SIM_PORT = 5000


class ScriptError(ValueError):
    pass


@dataclass
class Scenario:
    nodes: list[str]
    script: list[dict] = field(default_factory=list)
    seed: int = 0
    topology: str | dict = "full"
    difficulty: int = 2

    @classmethod
    def from_dict(cls, data: dict) -> Scenario:
        nodes = data.get("nodes")
        if isinstance(nodes, int):
            nodes = [f"n{i}" for i in range(nodes)]
        if not isinstance(nodes, list) or not nodes or len(set(nodes)) != len(nodes):
            raise ScriptError("'nodes' must be a positive count or a list of distinct names")
        return cls(
            nodes=[str(n) for n in nodes],
            script=list(data.get("script", [])),
            seed=int(data.get("seed", 0)),
            topology=data.get("topology", "full"),
            difficulty=int(data.get("difficulty", 2)),
        )

    @classmethod
    def load(cls, path: str | Path) -> Scenario:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class Metrics:
    hash_attempts_total: int = 0
    hash_attempts_by_node: dict[str, int] = field(default_factory=dict)
    validation_hashes_by_node: dict[str, int] = field(default_factory=dict)
    resolution_rounds_to_convergence: int | None = None
    chain_lengths: dict[str, int] = field(default_factory=dict)
    acl_equality: bool = False
    chains_equal: bool = False
    stalemate: bool = False

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out)
        writer.writerow(["node", "chain_length", "hash_attempts", "validation_hashes"])
        for name, length in self.chain_lengths.items():
            writer.writerow(
                [name, length, self.hash_attempts_by_node.get(name, 0), self.validation_hashes_by_node.get(name, 0)]
            )
        return out.getvalue()


@dataclass
class SimResult:
    metrics: Metrics
    snapshots: dict[str, dict]


def build_adjacency(names: Sequence[str], topology) -> dict[str, list[str]]:
    if topology == "full":
        return {n: [m for m in names if m != n] for n in names}
    if topology == "path":
        return {
            n: [names[j] for j in (i - 1, i + 1) if 0 <= j < len(names)] for i, n in enumerate(names)
        }
    if isinstance(topology, dict):
        adjacency = {n: [] for n in names}
        for n, neighbours in topology.items():
            if n not in adjacency or any(m not in adjacency for m in neighbours):
                raise ScriptError(f"topology references unknown node near {n!r}")
            for m in neighbours:
                if m != n and m not in adjacency[n]:
                    adjacency[n].append(m)
                if n != m and n not in adjacency[m]:
                    adjacency[m].append(n)
        return adjacency
    raise ScriptError(f"unknown topology {topology!r}")


class Network:
    """A set of simulated nodes plus the connectivity between them."""

    def __init__(self, names: Sequence[str], topology="full", difficulty: int = 2, seed: int = 0):
        self.names = list(names)
        self.difficulty = difficulty
        self.rng = random.Random(seed)
        self._tick = 0
        self.addresses = {n: f"http://10.0.{i // 250}.{i % 250 + 1}:{SIM_PORT}" for i, n in enumerate(self.names)}
        self._by_address = {a: n for n, a in self.addresses.items()}
        self.groups: dict[str, int] | None = None
        self.metrics = Metrics(
            hash_attempts_by_node={n: 0 for n in self.names},
            validation_hashes_by_node={n: 0 for n in self.names},
        )
        self.nodes: dict[str, Node] = {}
        for name in self.names:
            self.nodes[name] = Node(
                node_id=name,
                address=self.addresses[name],
                difficulty=difficulty,
                backend=SimulatedFirewall(),
                fetcher=self._fetcher(name),
                clock=self._clock,
            )
        for name, neighbours in build_adjacency(self.names, topology).items():
            self.nodes[name].register_peers(self.addresses[m] for m in neighbours)

    def _clock(self) -> float:
        self._tick += 1
        return round(SIM_EPOCH + self._tick + self.rng.random(), 6)

    def _reachable(self, a: str, b: str) -> bool:
        if self.groups is None:
            return True
        # Nodes left out of every partition group are isolated.
        group = self.groups.get(a)
        return group is not None and group == self.groups.get(b)

    def _fetcher(self, name: str, snapshot: dict[str, list[Block]] | None = None):
        def fetch(address: str):
            peer = self._by_address.get(address)
            if peer is None or not self._reachable(name, peer):
                return None
            if snapshot is not None:
                return snapshot[peer]
            return self.nodes[peer].chain_snapshot()

        return fetch

    def node(self, name) -> Node:
        try:
            return self.nodes[name]
        except KeyError:
            raise ScriptError(f"unknown node {name!r}") from None

    def random_mac(self) -> str:
        octets = [0x02] + [self.rng.randrange(256) for _ in range(5)]
        return ":".join(f"{o:02x}" for o in octets)

    def submit(self, name: str, mac: str | None = None, action: str = "allow", recipient: str = "*") -> Transaction:
        tx, _ = self.node(name).submit_transaction(name, recipient, mac or self.random_mac(), action)
        return tx

    def forge(self, name: str) -> Block:
        block, attempts = self.node(name).forge()
        self.metrics.hash_attempts_by_node[name] += attempts
        self.metrics.hash_attempts_total += attempts
        return block

    def resolve(self, name: str, snapshot: dict[str, list[Block]] | None = None):
        node = self.node(name)
        report = node.resolve(self._fetcher(name, snapshot))
        self.metrics.validation_hashes_by_node[name] += report.validation_hashes
        return report

    def resolve_round(self) -> bool:
        """Every node resolves once against round-start chains. True if any chain changed."""
        snapshot = {n: self.nodes[n].chain_snapshot() for n in self.names}
        changed = False
        for name in self.names:
            changed |= self.resolve(name, snapshot).replaced
        return changed

    def chains_equal(self) -> bool:
        first = self.nodes[self.names[0]].chain
        return all(self.nodes[n].chain == first for n in self.names[1:])

    def acls_equal(self) -> bool:
        first = self.nodes[self.names[0]].acl_snapshot()
        return all(self.nodes[n].acl_snapshot() == first for n in self.names[1:])

    def resolve_until_fixpoint(self, max_rounds: int | None = None) -> int | None:
        """Run rounds until nothing changes. Returns rounds to convergence or None."""
        limit = max_rounds if max_rounds is not None else 2 * len(self.names) + 1
        rounds = 0
        while not self.chains_equal() and rounds < limit:
            rounds += 1
            if not self.resolve_round():
                break
        converged = self.chains_equal()
        self.metrics.stalemate = not converged
        self.metrics.resolution_rounds_to_convergence = rounds if converged else None
        return self.metrics.resolution_rounds_to_convergence

    def partition(self, groups: Iterable[Iterable[str]]) -> None:
        assignment: dict[str, int] = {}
        for i, group in enumerate(groups):
            for name in group:
                self.node(name)
                if name in assignment:
                    raise ScriptError(f"node {name!r} appears in two partition groups")
                assignment[name] = i
        self.groups = assignment

    def heal(self) -> None:
        self.groups = None

    def tamper(self, name: str, block_index: int, mac: str | None = None) -> None:
        """Rewrite a transaction of a stored block in place, bypassing validation."""
        node = self.node(name)
        position = block_index - 1
        if not 0 < position < len(node.chain):
            raise ScriptError(f"node {name!r} has no non-genesis block {block_index}")
        block = node.chain[position]
        first = block.transactions[0]
        forged = dataclasses.replace(first, mac=mac or self.random_mac())
        node.chain[position] = dataclasses.replace(block, transactions=(forged,) + block.transactions[1:])

    def finish(self) -> SimResult:
        m = self.metrics
        m.chain_lengths = {n: len(self.nodes[n].chain) for n in self.names}
        m.chains_equal = self.chains_equal()
        m.acl_equality = self.acls_equal()
        snapshots = {
            n: {
                "chain": [b.to_dict() for b in self.nodes[n].chain],
                "acl": self.nodes[n].acl_snapshot().actions(),
                "firewall": dict(sorted(self.nodes[n].actuator.backend.rules.items())),
            }
            for n in self.names
        }
        return SimResult(metrics=m, snapshots=snapshots)


def run_scenario(scenario: Scenario) -> SimResult:
    net = Network(scenario.nodes, scenario.topology, scenario.difficulty, scenario.seed)
    for step, event in enumerate(scenario.script):
        if not isinstance(event, dict) or "op" not in event:
            raise ScriptError(f"step {step}: event must be an object with an 'op'")
        op = event["op"]
        if op == "submit_tx":
            net.submit(event.get("node"), event.get("mac"), event.get("action", "allow"), event.get("recipient", "*"))
        elif op == "forge":
            net.forge(event.get("node"))
        elif op == "resolve":
            net.resolve(event.get("node"))
        elif op == "resolve_round":
            for _ in range(int(event.get("rounds", 1))):
                net.resolve_round()
        elif op == "resolve_until_fixpoint":
            net.resolve_until_fixpoint(event.get("max_rounds"))
        elif op == "partition":
            net.partition(event.get("groups", []))
        elif op == "heal":
            net.heal()
        elif op == "tamper":
            net.tamper(event.get("node"), int(event.get("block", 2)), event.get("mac"))
        else:
            raise ScriptError(f"step {step}: unknown op {op!r}")
    return net.finish()


def convergence_test(n: int, rounds: int, topology: str = "full", difficulty: int = 1, seed: int = 0) -> bool:
    """One node holds the unique longest chain; are all chains equal after ``rounds`` rounds?"""
    net = Network([f"n{i}" for i in range(n)], topology, difficulty, seed)
    net.submit("n0")
    net.forge("n0")
    for _ in range(rounds):
        net.resolve_round()
    return net.chains_equal()


def stalemate_scenario(n: int = 2, difficulty: int = 1, seed: int = 0) -> Metrics:
    """Two nodes forge rival blocks of equal height; resolution cannot pick one."""
    net = Network([f"n{i}" for i in range(n)], "full", difficulty, seed)
    net.submit("n0")
    net.forge("n0")
    net.submit("n1")
    net.forge("n1")
    net.resolve_until_fixpoint()
    return net.finish().metrics


@dataclass
class CostRow:
    seed: int
    blocks: int
    chain_length: int
    mining_attempts: int
    adopters: int
    validation_hashes_per_adopter: list[int]
    race_baseline_expected: float


def measure_linear_cost(
    tx_counts: Sequence[int],
    difficulty: int = 2,
    nodes: int = 3,
    seeds: Iterable[int] = range(10),
) -> list[CostRow]:
    """Issuer-side mining cost and per-peer validation cost as blocks grow.

    For each seed and block count ``B`` one issuer forges ``B`` single-transaction
    blocks in a fresh full mesh, then every node resolves once.
    ``race_baseline_expected`` is the textbook network-wide cost of a race in
    which all ``nodes`` mine every block: ``nodes * B * 16**difficulty``.
    """
    rows = []
    for seed in seeds:
        for blocks in tx_counts:
            net = Network([f"n{i}" for i in range(nodes)], "full", difficulty, seed)
            for _ in range(blocks):
                net.submit("n0")
                net.forge("n0")
            adopters, per_adopter = 0, []
            snapshot = {name: net.nodes[name].chain_snapshot() for name in net.names}
            for name in net.names[1:]:
                report = net.resolve(name, snapshot)
                if report.replaced:
                    adopters += 1
                    per_adopter.append(report.validation_hashes)
            rows.append(
                CostRow(
                    seed=seed,
                    blocks=blocks,
                    chain_length=len(net.nodes["n0"].chain),
                    mining_attempts=net.metrics.hash_attempts_by_node["n0"],
                    adopters=adopters,
                    validation_hashes_per_adopter=per_adopter,
                    race_baseline_expected=float(nodes * blocks * 16**difficulty),
                )
            )
    return rows


@dataclass
class CostSummary:
    mean_attempts_by_blocks: dict[int, float]
    slope: float
    intercept: float
    r_squared: float
    mean_attempts_per_block: float
    expected_attempts_per_block: float


def summarize_cost(rows: Sequence[CostRow], difficulty: int) -> CostSummary:
    """Least-squares line through mean attempts per block count, and pooled per-block mean."""
    by_blocks: dict[int, list[int]] = {}
    for row in rows:
        by_blocks.setdefault(row.blocks, []).append(row.mining_attempts)
    xs = sorted(by_blocks)
    ys = [statistics.fmean(by_blocks[b]) for b in xs]
    if len(xs) >= 2 and len(set(ys)) > 1:
        slope, intercept = statistics.linear_regression(xs, ys)
        r_squared = statistics.correlation(xs, ys) ** 2
    else:
        slope, intercept, r_squared = float("nan"), float("nan"), float("nan")
    total_blocks = sum(row.blocks for row in rows)
    pooled = sum(row.mining_attempts for row in rows) / total_blocks if total_blocks else 0.0
    return CostSummary(
        mean_attempts_by_blocks=dict(zip(xs, ys)),
        slope=slope,
        intercept=intercept,
        r_squared=r_squared,
        mean_attempts_per_block=pooled,
        expected_attempts_per_block=float(16**difficulty),
    )


def cost_rows_to_csv(rows: Sequence[CostRow]) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(
        ["seed", "blocks", "chain_length", "mining_attempts", "adopters", "validation_hashes_per_adopter",
         "race_baseline_expected"]
    )
    for r in rows:
        writer.writerow(
            [r.seed, r.blocks, r.chain_length, r.mining_attempts, r.adopters,
             ";".join(str(v) for v in r.validation_hashes_per_adopter), r.race_baseline_expected]
        )
    return out.getvalue()


__all__ = [
    "CostRow",
    "CostSummary",
    "Metrics",
    "Network",
    "Scenario",
    "ScriptError",
    "SimResult",
    "convergence_test",
    "cost_rows_to_csv",
    "measure_linear_cost",
    "run_scenario",
    "stalemate_scenario",
    "summarize_cost",
]
