import math
import random
from pathlib import Path

import pytest

from redes.netsim import (
    Network,
    Scenario,
    ScriptError,
    convergence_test,
    cost_rows_to_csv,
    measure_linear_cost,
    run_scenario,
    stalemate_scenario,
    summarize_cost,
)

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def test_threenode_scenario_converges():
    result = run_scenario(Scenario.load(SCENARIOS / "threenode.json"))
    m = result.metrics
    assert m.chains_equal and m.acl_equality and not m.stalemate
    assert set(m.chain_lengths.values()) == {4}
    acl = result.snapshots["ap1"]["acl"]
    assert acl == {f"02:00:00:00:00:0{i}": "allow" for i in (1, 2, 3)}


def test_single_node_five_blocks():
    script = [op for _ in range(5) for op in ({"op": "submit_tx", "node": "a"}, {"op": "forge", "node": "a"})]
    script.append({"op": "resolve_until_fixpoint"})
    m = run_scenario(Scenario(nodes=["a"], script=script, difficulty=1)).metrics
    assert m.chain_lengths == {"a": 6}
    assert m.resolution_rounds_to_convergence == 0


def test_partition_then_heal_minority_adopts():
    script = [
        {"op": "partition", "groups": [["A"], ["B", "C"]]},
        {"op": "submit_tx", "node": "B"},
        {"op": "forge", "node": "B"},
        {"op": "submit_tx", "node": "B"},
        {"op": "forge", "node": "B"},
        {"op": "resolve_round"},
        {"op": "heal"},
        {"op": "resolve_round"},
    ]
    net_result = run_scenario(Scenario(nodes=["A", "B", "C"], script=script, difficulty=1))
    assert net_result.metrics.chain_lengths == {"A": 3, "B": 3, "C": 3}
    assert net_result.metrics.chains_equal


def test_partition_blocks_propagation():
    net = Network(["A", "B", "C"], difficulty=1)
    net.partition([["A"], ["B", "C"]])
    net.submit("B")
    net.forge("B")
    net.resolve_round()
    assert len(net.nodes["A"].chain) == 1
    assert len(net.nodes["C"].chain) == 2


def test_fork_scenario_revokes_divergent_mac():
    result = run_scenario(Scenario.load(SCENARIOS / "fork.json"))
    expected = {"02:00:00:00:00:01": "deny", "02:00:00:00:00:03": "allow", "02:00:00:00:00:04": "allow"}
    for snap in result.snapshots.values():
        assert snap["acl"] == expected
        assert snap["firewall"] == expected


def test_tamper_is_rejected_by_peers():
    script = [
        {"op": "submit_tx", "node": "A"},
        {"op": "forge", "node": "A"},
        {"op": "submit_tx", "node": "A"},
        {"op": "forge", "node": "A"},
        {"op": "tamper", "node": "A", "block": 2},
        {"op": "resolve_round"},
    ]
    m = run_scenario(Scenario(nodes=["A", "B"], script=script, difficulty=1)).metrics
    assert m.chain_lengths == {"A": 3, "B": 1}


def test_determinism():
    scenario = Scenario.load(SCENARIOS / "fork.json")
    first, second = run_scenario(scenario), run_scenario(scenario)
    assert first.metrics == second.metrics
    assert first.snapshots == second.snapshots


def test_seed_changes_random_macs():
    script = [{"op": "submit_tx", "node": "a"}, {"op": "forge", "node": "a"}]
    a = run_scenario(Scenario(nodes=["a"], script=script, difficulty=1, seed=1))
    b = run_scenario(Scenario(nodes=["a"], script=script, difficulty=1, seed=2))
    assert a.snapshots != b.snapshots


@pytest.mark.parametrize(
    "event", [{"op": "forge", "node": "ghost"}, {"op": "explode"}, {"node": "a"}, {"op": "tamper", "node": "a"}]
)
def test_script_errors(event):
    with pytest.raises(ScriptError):
        run_scenario(Scenario(nodes=["a"], script=[event], difficulty=1))


def test_scenario_from_dict_count():
    assert Scenario.from_dict({"nodes": 3}).nodes == ["n0", "n1", "n2"]
    with pytest.raises(ScriptError):
        Scenario.from_dict({"nodes": ["a", "a"]})


def test_custom_topology():
    net = Network(["a", "b", "c"], topology={"a": ["b"]}, difficulty=1)
    assert net.nodes["a"].peers() == [net.addresses["b"]]
    assert net.nodes["c"].peers() == []


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_full_mesh_converges_in_one_round(n):
    assert convergence_test(n, 1)


def test_path_converges_after_diameter_rounds():
    assert not convergence_test(4, 2, "path")
    assert convergence_test(4, 3, "path")


def test_stalemate():
    m = stalemate_scenario()
    assert m.stalemate and not m.chains_equal
    assert m.resolution_rounds_to_convergence is None


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_acl_equality_after_convergence(n):
    rng = random.Random(n)
    net = Network([f"n{i}" for i in range(n)], difficulty=1, seed=n)
    for _ in range(6):
        issuer = f"n{rng.randrange(n)}"
        net.resolve(issuer)
        net.submit(issuer, action=rng.choice(["allow", "deny"]))
        net.forge(issuer)
    net.resolve_until_fixpoint()
    m = net.finish().metrics
    assert m.chains_equal and m.acl_equality


def test_linear_cost_zero_transactions():
    rows = measure_linear_cost([0], difficulty=1, nodes=3, seeds=[0])
    assert rows[0].mining_attempts == 0
    assert rows[0].adopters == 0


def test_validation_cost_per_adopter():
    rows = measure_linear_cost([3, 7], difficulty=1, nodes=4, seeds=[0])
    for row in rows:
        assert row.adopters == 3
        assert row.validation_hashes_per_adopter == [2 * (row.chain_length - 1)] * 3


def test_mine_proof_mean_matches_geometric_expectation():
    # Fresh starting proofs per seed; attempts ~ Geometric(16**-d).
    from redes.ledger import mine_proof

    for difficulty in (1, 2):
        expected = 16**difficulty
        rng = random.Random(difficulty)
        samples = [mine_proof(rng.randrange(10**9), difficulty).attempts for _ in range(400)]
        mean = sum(samples) / len(samples)
        assert abs(mean - expected) <= 0.3 * expected


def test_cost_summary_and_csv():
    rows = measure_linear_cost([1, 2], difficulty=1, nodes=2, seeds=[0, 1])
    summary = summarize_cost(rows, 1)
    assert set(summary.mean_attempts_by_blocks) == {1, 2}
    assert not math.isnan(summary.r_squared)
    csv_text = cost_rows_to_csv(rows)
    assert csv_text.splitlines()[0].startswith("seed,blocks")
    assert len(csv_text.splitlines()) == 5


def test_netsim_does_no_network_io(monkeypatch):
    import socket

    def forbidden(*args, **kwargs):
        raise AssertionError("network I/O attempted")

    monkeypatch.setattr(socket.socket, "connect", forbidden)
    run_scenario(Scenario.load(SCENARIOS / "threenode.json"))
