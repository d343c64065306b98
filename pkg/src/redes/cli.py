"""Command-line front end: run a node, drive a node's API, run simulations.

Exit codes: 0 success, 1 configuration/HTTP/verification failure,
2 unrecoverable on-disk state.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click
import requests

from redes.consensus import parse_chain_response
from redes.ledger import DEFAULT_DIFFICULTY, LedgerError, canonical_hash, valid_chain

EXIT_OK, EXIT_ERROR, EXIT_CORRUPT = 0, 1, 2
DEFAULT_TARGET = "http://127.0.0.1:5000"
HTTP_TIMEOUT = 30.0


class Client:
    def __init__(self, target: str, token: str | None):
        self.target = target.rstrip("/")
        self.headers = {"Authorization": f"Bearer {token}"} if token else {}

    def call(self, method: str, path: str, body=None) -> dict:
        try:
            resp = requests.request(
                method, self.target + path, json=body, headers=self.headers, timeout=HTTP_TIMEOUT
            )
        except requests.RequestException as exc:
            raise click.ClickException(f"cannot reach {self.target}: {exc}") from None
        try:
            payload = resp.json()
        except ValueError:
            payload = {"message": resp.text}
        if resp.status_code >= 400:
            error = payload.get("error", resp.reason)
            raise click.ClickException(f"{resp.status_code} {error}: {payload.get('message', '')}")
        return payload


def _emit(ctx: click.Context, payload, human: str) -> None:
    if ctx.obj["json"]:
        click.echo(json.dumps(payload, sort_keys=True))
    else:
        click.echo(human)


target_option = click.option(
    "--target", envvar="REDES_TARGET", default=DEFAULT_TARGET, show_default=True, help="Node base URL."
)


@click.group()
@click.option("--json", "as_json", is_flag=True, help="Machine-readable JSON output.")
@click.option("--token", envvar="REDES_TOKEN", default=None, help="Bearer token for protected endpoints.")
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def main(ctx, as_json, token, verbose):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO, format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )
    ctx.ensure_object(dict)
    ctx.obj["json"] = as_json
    ctx.obj["token"] = token


def _client(ctx, target) -> Client:
    return Client(target, ctx.obj["token"])


@main.group()
def node():
    """Run a node or manage its peers."""


@node.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
def node_run(config_path, host, port):
    """Start the node HTTP service."""
    from redes.api import create_app
    from redes.config import ConfigError, load_config
    from redes.node import Node
    from redes.son import make_backend
    from redes.storage import CorruptLog

    log = logging.getLogger("redes.node")
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_ERROR)
    if host:
        cfg.host = host
    if port:
        cfg.port = port
    try:
        n = Node.open(
            cfg.data_dir,
            address=cfg.public_address,
            difficulty=cfg.difficulty,
            backend=make_backend(cfg.backend, cfg.templates),
            fetch_workers=8,
        )
        n.register_peers(cfg.peers)
    except CorruptLog as exc:
        click.echo(f"corrupt chain log: {exc}", err=True)
        sys.exit(EXIT_CORRUPT)
    except ValueError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_ERROR)
    log.info("node %s listening on %s:%d, chain length %d", n.node_id, cfg.host, cfg.port, len(n.chain))
    create_app(n, cfg.auth_token).run(host=cfg.host, port=cfg.port, threaded=True)


@node.group()
def peers():
    """Register or remove peers on a node."""


@peers.command("add")
@click.argument("addresses", nargs=-1, required=True)
@target_option
@click.pass_context
def peers_add(ctx, addresses, target):
    payload = _client(ctx, target).call("POST", "/nodes/register", {"nodes": list(addresses)})
    _emit(ctx, payload, f"registered {', '.join(payload['registered'])}; {payload['total']} peers")


@peers.command("remove")
@click.argument("addresses", nargs=-1, required=True)
@target_option
@click.pass_context
def peers_remove(ctx, addresses, target):
    payload = _client(ctx, target).call("POST", "/nodes/remove", {"nodes": list(addresses)})
    human = f"removed {', '.join(payload['removed']) or 'nothing'}; {payload['total']} peers"
    if payload.get("not_found"):
        human += f"\nnot found: {', '.join(payload['not_found'])}"
    _emit(ctx, payload, human)


@main.group()
def tx():
    """Transactions."""


@tx.command("submit")
@click.option("--sender", required=True)
@click.option("--recipient", required=True)
@click.option("--mac", required=True)
@click.option("--action", required=True, help="allow/deny (aliases: allowed, add, denied, remove, delete)")
@target_option
@click.pass_context
def tx_submit(ctx, sender, recipient, mac, action, target):
    body = {"sender": sender, "recipient": recipient, "mac": mac, "action": action}
    payload = _client(ctx, target).call("POST", "/transactions/new", body)
    _emit(ctx, payload, payload["message"])


@main.group()
def block():
    """Blocks."""


@block.command("forge")
@target_option
@click.pass_context
def block_forge(ctx, target):
    payload = _client(ctx, target).call("POST", "/blocks/new")
    b = payload["block"]
    _emit(ctx, payload, f"block {b['index']} hash {payload['hash']} attempts {payload['attempts']}")


@main.group()
def chain():
    """Inspect a node's chain."""


@chain.command("show")
@target_option
@click.option("--verify", is_flag=True, help="Re-validate the chain locally.")
@click.option("--difficulty", type=int, default=None, help="Defaults to the node's reported difficulty.")
@click.pass_context
def chain_show(ctx, target, verify, difficulty):
    client = _client(ctx, target)
    payload = client.call("GET", "/chain")
    try:
        blocks = parse_chain_response(payload)
    except LedgerError as exc:
        raise click.ClickException(f"malformed chain: {exc}") from None
    result = {"length": len(blocks), "tip_hash": canonical_hash(blocks[-1]) if blocks else None}
    lines = []
    for b in blocks:
        macs = ", ".join(f"{t.mac} {t.action}" for t in b.transactions) or "-"
        lines.append(f"{b.index:>4}  proof {b.proof:<8} prev {b.previous_hash[:12]:<12}  {macs}")
    ok = True
    if verify:
        if difficulty is None:
            difficulty = client.call("GET", "/status").get("difficulty", DEFAULT_DIFFICULTY)
        ok = valid_chain(blocks, difficulty)
        result["verified"] = ok
        lines.append("PASS" if ok else "FAIL")
    if ctx.obj["json"]:
        result["chain"] = payload["chain"]
    _emit(ctx, result, "\n".join(lines))
    if not ok:
        sys.exit(EXIT_ERROR)


@main.command()
@target_option
@click.pass_context
def resolve(ctx, target):
    """Trigger consensus on a node."""
    payload = _client(ctx, target).call("GET", "/nodes/resolve")
    r = payload["report"]
    human = (
        f"replaced: {payload['replaced']} (length {r['old_length']} -> {r['new_length']}"
        + (f", from {r['adopted_from']})" if r["adopted_from"] else ")")
        + f"\nqueried {r['peers_queried']}, unreachable {r['peers_unreachable']}, "
        f"invalid {r['peers_invalid_chain']}"
    )
    _emit(ctx, payload, human)


@main.group()
def sim():
    """Deterministic multi-node simulations."""


@sim.command("run")
@click.argument("scenario_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def sim_run(ctx, scenario_path, csv_path):
    from redes.netsim import Scenario, ScriptError, run_scenario

    try:
        result = run_scenario(Scenario.load(scenario_path))
    except (ScriptError, LedgerError, ValueError) as exc:
        raise click.ClickException(f"scenario failed: {exc}") from None
    m = result.metrics
    if csv_path:
        Path(csv_path).write_text(m.to_csv(), encoding="utf-8")
    human = "\n".join(
        [
            f"chain_lengths: {m.chain_lengths}",
            f"hash_attempts_total: {m.hash_attempts_total}",
            f"resolution_rounds_to_convergence: {m.resolution_rounds_to_convergence}",
            f"stalemate: {str(m.stalemate).lower()}",
            f"acl_equality: {str(m.acl_equality).lower()}",
        ]
    )
    _emit(ctx, {"metrics": m.to_dict(), "snapshots": result.snapshots}, human)


@sim.command("cost")
@click.option("--counts", default="1,2,4,8,16", show_default=True)
@click.option("--difficulty", type=click.IntRange(1, 4), default=2, show_default=True)
@click.option("--nodes", type=click.IntRange(1), default=3, show_default=True)
@click.option("--seeds", type=click.IntRange(1), default=10, show_default=True)
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def sim_cost(ctx, counts, difficulty, nodes, seeds, csv_path):
    """Measure issuer mining cost against block count."""
    from redes.netsim import cost_rows_to_csv, measure_linear_cost, summarize_cost

    try:
        tx_counts = [int(c) for c in counts.split(",") if c.strip()]
    except ValueError:
        raise click.BadParameter("comma-separated integers expected", param_hint="--counts") from None
    rows = measure_linear_cost(tx_counts, difficulty, nodes, range(seeds))
    summary = summarize_cost(rows, difficulty)
    if csv_path:
        Path(csv_path).write_text(cost_rows_to_csv(rows), encoding="utf-8")
    human = "\n".join(
        [f"B={b:<4} mean attempts {v:.1f}" for b, v in summary.mean_attempts_by_blocks.items()]
        + [
            f"slope {summary.slope:.2f}  intercept {summary.intercept:.2f}  R^2 {summary.r_squared:.4f}",
            f"attempts per block {summary.mean_attempts_per_block:.2f} "
            f"(geometric expectation {summary.expected_attempts_per_block:.0f})",
        ]
    )
    _emit(ctx, summary.__dict__, human)


if __name__ == "__main__":
    main()
