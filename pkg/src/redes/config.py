"""Node configuration, read from an INI file.

Example::

    [node]
    port = 5000
    difficulty = 4
    data_dir = /var/lib/redes
    address = http://10.0.0.1:5000
    auth_token =
    peers = http://10.0.0.2:5000, http://10.0.0.3:5000

    [actuator]
    backend = command

    [commands]
    set_src = uci set firewall.redes_{mac_id}.src=wan
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from redes.ledger import DEFAULT_DIFFICULTY, InvalidDifficulty, check_difficulty
from redes.son import DEFAULT_TEMPLATES

DEFAULT_PORT = 5000


class ConfigError(ValueError):
    pass


@dataclass
class NodeConfig:
    host: str = "0.0.0.0"
    port: int = DEFAULT_PORT
    difficulty: int = DEFAULT_DIFFICULTY
    data_dir: Path = Path("redes-data")
    address: str | None = None
    auth_token: str | None = None
    peers: list[str] = field(default_factory=list)
    backend: str = "simulated"
    templates: dict[str, str] = field(default_factory=dict)

    @property
    def public_address(self) -> str:
        return self.address or f"http://127.0.0.1:{self.port}"


def load_config(path: str | Path) -> NodeConfig:
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"bad config {path}: {exc}") from None

    cfg = NodeConfig()
    node = parser["node"] if parser.has_section("node") else {}
    try:
        cfg.host = node.get("host", cfg.host)
        cfg.port = int(node.get("port", cfg.port))
        cfg.difficulty = check_difficulty(int(node.get("difficulty", cfg.difficulty)))
    except (ValueError, InvalidDifficulty) as exc:
        raise ConfigError(f"bad [node] value in {path}: {exc}") from None
    if not 0 < cfg.port < 65536:
        raise ConfigError(f"port out of range: {cfg.port}")
    data_dir = Path(node.get("data_dir", str(cfg.data_dir)))
    cfg.data_dir = data_dir if data_dir.is_absolute() else path.parent / data_dir
    cfg.address = node.get("address") or None
    cfg.auth_token = node.get("auth_token") or None
    cfg.peers = [p.strip() for p in node.get("peers", "").split(",") if p.strip()]

    if parser.has_section("actuator"):
        cfg.backend = parser["actuator"].get("backend", cfg.backend)
    if cfg.backend not in ("simulated", "command"):
        raise ConfigError(f"unknown actuator backend {cfg.backend!r}")
    if parser.has_section("commands"):
        templates = dict(parser["commands"])
        unknown = set(templates) - set(DEFAULT_TEMPLATES)
        if unknown:
            raise ConfigError(f"unknown command templates: {sorted(unknown)}")
        cfg.templates = templates
    return cfg
