"""HTTP JSON API of a node: peer management, transactions, blocks, chain, consensus."""

from __future__ import annotations

import hmac
import json

from flask import Flask, Response, jsonify, request

from redes.consensus import InvalidAddress, SelfRegistration
from redes.ledger import EmptyPending, LedgerError, canonical_hash, canonical_json, chain_response_json
from redes.node import ForgeConflict, Node

PROTECTED_PREFIXES = ("/nodes/", "/blocks/")


def _error(status: int, error: str, message: str):
    return jsonify({"error": error, "message": message}), status


def _raw_json(body: str, status: int = 200) -> Response:
    return Response(body, status=status, mimetype="application/json")


def _node_list(payload) -> list[str] | None:
    if not isinstance(payload, dict):
        return None
    nodes = payload.get("nodes")
    if not isinstance(nodes, list) or not nodes or not all(isinstance(n, str) for n in nodes):
        return None
    return nodes


def create_app(node: Node, auth_token: str | None = None) -> Flask:
    app = Flask(__name__)
    app.config["REDES_NODE"] = node

    @app.before_request
    def check_token():
        if not auth_token or not request.path.startswith(PROTECTED_PREFIXES):
            return None
        header = request.headers.get("Authorization", "")
        supplied = header[len("Bearer ") :] if header.startswith("Bearer ") else ""
        if not hmac.compare_digest(supplied.encode(), auth_token.encode()):
            return _error(401, "Unauthorized", "missing or wrong bearer token")
        return None

    @app.post("/nodes/register")
    def register_nodes():
        nodes = _node_list(request.get_json(silent=True))
        if nodes is None:
            return _error(400, "MalformedBody", "expected {\"nodes\": [<address>, ...]}")
        try:
            registered = node.register_peers(nodes)
        except (InvalidAddress, SelfRegistration) as exc:
            return _error(400, type(exc).__name__, str(exc))
        return jsonify({"registered": registered, "total": len(node.peers())}), 201

    @app.post("/nodes/remove")
    def remove_nodes():
        nodes = _node_list(request.get_json(silent=True))
        if nodes is None:
            return _error(400, "MalformedBody", "expected {\"nodes\": [<address>, ...]}")
        removed, not_found = node.remove_peers(nodes)
        return jsonify({"removed": removed, "not_found": not_found, "total": len(node.peers())}), 200

    @app.get("/nodes")
    def list_nodes():
        return jsonify({"nodes": node.peers(), "total": len(node.peers())})

    @app.get("/nodes/resolve")
    def resolve():
        report = node.resolve()
        return jsonify({"replaced": report.replaced, "length": report.new_length, "report": report.to_dict()})

    @app.post("/transactions/new")
    def new_transaction():
        body = request.get_json(silent=True)
        fields = ("sender", "recipient", "mac", "action")
        if not isinstance(body, dict):
            return _error(400, "MalformedBody", "expected a JSON object")
        missing = [f for f in fields if f not in body]
        if missing:
            return _error(400, "MissingField", f"missing fields: {', '.join(missing)}")
        try:
            tx, hint = node.submit_transaction(*(body[f] for f in fields))
        except LedgerError as exc:
            return _error(400, type(exc).__name__, str(exc))
        return (
            jsonify(
                {
                    "message": f"Transaction will be added to block {hint}",
                    "block_index_hint": hint,
                    "transaction": tx.to_dict(),
                }
            ),
            201,
        )

    @app.post("/blocks/new")
    def new_block():
        try:
            block, attempts = node.forge()
        except EmptyPending as exc:
            return _error(409, "EmptyPending", str(exc))
        except ForgeConflict as exc:
            return _error(409, "ForgeConflict", str(exc))
        body = (
            f'{{"attempts":{attempts},"block":{canonical_json(block)},'
            f'"hash":{json.dumps(canonical_hash(block))}}}'
        )
        return _raw_json(body, 201)

    @app.get("/chain")
    def full_chain():
        return _raw_json(chain_response_json(node.chain_snapshot()))

    @app.get("/acl")
    def acl():
        return jsonify(node.acl_report())

    @app.get("/status")
    def status():
        return jsonify(node.status())

    return app
