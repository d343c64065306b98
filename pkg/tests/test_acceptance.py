"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the pytest terminal
summary under "acceptance criteria".
"""

import dataclasses
import random
import time
from pathlib import Path

from chainkit import BLOCK_FIELDS, Crash, CrashBeforeFsync, build_chain, mutate_block
from conftest import GENESIS_DIGEST, P_STAR
from redes.consensus import resolve_conflicts
from redes.ledger import GENESIS, canonical_hash, mine_proof, valid_chain
from redes.netsim import (
    Scenario,
    convergence_test,
    measure_linear_cost,
    run_scenario,
    stalemate_scenario,
    summarize_cost,
)
from redes.node import CHAIN_LOG, Node

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
PEER = "http://10.0.0.2:5000"


def test_ac1_three_node_testbed(criterion):
    start = time.perf_counter()
    scenario = Scenario.load(SCENARIOS / "threenode.json")
    result = run_scenario(scenario)
    elapsed = time.perf_counter() - start
    m = result.metrics
    acls = [snap["acl"] for snap in result.snapshots.values()]
    macs = {f"02:00:00:00:00:0{i}" for i in (1, 2, 3)}
    ok = (
        scenario.difficulty == 2
        and len(result.snapshots) == 3
        and m.chains_equal
        and m.acl_equality
        and all(acl == {mac: "allow" for mac in macs} for acl in acls)
        and elapsed < 5.0
    )
    criterion("AC1 three-node testbed", ok, f"lengths={sorted(set(m.chain_lengths.values()))} {elapsed:.2f}s")


def test_ac2_tamper_evidence(criterion):
    rng = random.Random(2024)
    rejected = 0
    for i in range(200):
        length = rng.randint(2, 10)
        chain = build_chain(length, 1, seed=i)
        assert valid_chain(chain, 1)
        k = rng.randrange(length - 1)
        field = rng.choice(BLOCK_FIELDS)
        tampered = list(chain)
        tampered[k] = mutate_block(chain[k], field, rng)
        rejected += not valid_chain(tampered, 1)
    criterion("AC2 tamper evidence", rejected == 200, f"{rejected}/200 rejected")


def _fetch(remote):
    return lambda peer: remote


def test_ac3_longest_valid_chain(criterion):
    local = build_chain(4, 1, seed=31)

    longer = build_chain(6, 1, seed=32)
    adopted, r1 = resolve_conflicts(local, [PEER], _fetch(longer), 1)
    adopt_ok = adopted == longer and r1.replaced

    bad = list(build_chain(6, 1, seed=33))
    bad[2] = dataclasses.replace(bad[2], proof=bad[2].proof + 1)
    kept, r2 = resolve_conflicts(local, [PEER], _fetch(bad), 1)
    reject_ok = kept == local and not r2.replaced and r2.peers_invalid_chain == 1

    equal = build_chain(4, 1, seed=34)
    retained, r3 = resolve_conflicts(local, [PEER], _fetch(equal), 1)
    retain_ok = equal != local and retained == local and not r3.replaced

    detail = f"adopt={adopt_ok} reject={reject_ok} retain={retain_ok}"
    criterion("AC3 longest valid chain", adopt_ok and reject_ok and retain_ok, detail)


def test_ac4_linear_cost(criterion):
    start = time.perf_counter()
    rows = measure_linear_cost([1, 2, 4, 8, 16], difficulty=2, nodes=3, seeds=range(10))
    summary = summarize_cost(rows, 2)
    elapsed = time.perf_counter() - start
    expected = summary.expected_attempts_per_block
    mean_ok = abs(summary.mean_attempts_per_block - expected) <= 0.3 * expected
    validation_ok = all(
        row.adopters == 2 and row.validation_hashes_per_adopter == [2 * (row.chain_length - 1)] * 2
        for row in rows
    )
    ok = summary.r_squared >= 0.95 and mean_ok and validation_ok and elapsed < 30.0
    detail = (
        f"R^2={summary.r_squared:.4f} per-block={summary.mean_attempts_per_block:.2f} "
        f"(expected {expected:.0f} +/-30%) validation=2(L-1):{validation_ok} {elapsed:.2f}s"
    )
    criterion("AC4 linear cost", ok, detail)


def test_ac5_acl_determinism_across_forks(criterion):
    result = run_scenario(Scenario.load(SCENARIOS / "fork.json"))
    expected = {
        "02:00:00:00:00:01": "deny",
        "02:00:00:00:00:03": "allow",
        "02:00:00:00:00:04": "allow",
    }
    snaps = result.snapshots
    same = all(s["acl"] == expected and s["firewall"] == expected for s in snaps.values())
    revoked = all("02:00:00:00:00:02" not in s["firewall"] for s in snaps.values())
    ok = len(snaps) == 3 and result.metrics.chains_equal and same and revoked
    criterion("AC5 ACL determinism across forks", ok, f"nodes={len(snaps)} divergent MAC revoked={revoked}")


def test_ac6_golden_hashes(criterion):
    digest = canonical_hash(GENESIS)
    proof = mine_proof(GENESIS.proof, 4).proof
    ok = digest == GENESIS_DIGEST and proof == P_STAR[4]
    criterion("AC6 golden hashes", ok, f"genesis={digest[:16]}... p*(d=4)={proof}")


def test_ac7_persistence_round_trip(tmp_path, criterion):
    rng = random.Random(7)
    node = Node.open(tmp_path, difficulty=1, fetcher=lambda peer: None)
    outcomes = []
    for i in range(5):
        node.log = CrashBeforeFsync(tmp_path / CHAIN_LOG, rng)
        node.log.armed = True
        node.submit_transaction("a", "b", f"00:00:00:00:07:{i:02x}", "allow")
        try:
            node.forge()
            crashed = False
        except Crash:
            crashed = True
        pre_kill = node.chain_snapshot()
        node = Node.open(tmp_path, difficulty=1, fetcher=lambda peer: None)
        restored = node.chain_snapshot()
        outcomes.append(
            crashed
            and valid_chain(restored, 1)
            and restored == pre_kill[: len(restored)]
            and len(restored) >= len(pre_kill) - 1
        )
    criterion("AC7 persistence round trip", all(outcomes), f"{sum(outcomes)}/5 restarts restored a valid prefix")


def test_ac8_convergence_bounds(criterion):
    mesh = convergence_test(5, 1, "full")
    path_two = convergence_test(4, 2, "path")
    path_three = convergence_test(4, 3, "path")
    stale = stalemate_scenario()
    ok = mesh and not path_two and path_three and stale.stalemate and not stale.chains_equal
    detail = f"mesh@1={mesh} path@2={path_two} path@3={path_three} stalemate={stale.stalemate}"
    criterion("AC8 convergence bounds", ok, detail)
