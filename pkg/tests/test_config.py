import pytest

from redes.config import ConfigError, load_config


def write(tmp_path, text):
    path = tmp_path / "node.ini"
    path.write_text(text)
    return path


def test_defaults(tmp_path):
    cfg = load_config(write(tmp_path, "[node]\n"))
    assert cfg.port == 5000
    assert cfg.difficulty == 4
    assert cfg.backend == "simulated"
    assert cfg.auth_token is None
    assert cfg.public_address == "http://127.0.0.1:5000"
    assert cfg.data_dir == tmp_path / "redes-data"


def test_full_config(tmp_path):
    cfg = load_config(
        write(
            tmp_path,
            "[node]\nport = 5001\ndifficulty = 2\nauth_token = abc\ndata_dir = /tmp/x\n"
            "address = http://10.0.0.1:5001\npeers = http://10.0.0.2:5000, http://10.0.0.3:5000\n"
            "[actuator]\nbackend = command\n"
            "[commands]\nset_src = uci set firewall.redes_{mac_id}.src=wan\n",
        )
    )
    assert cfg.port == 5001 and cfg.difficulty == 2 and cfg.auth_token == "abc"
    assert str(cfg.data_dir) == "/tmp/x"
    assert cfg.peers == ["http://10.0.0.2:5000", "http://10.0.0.3:5000"]
    assert cfg.backend == "command"
    assert cfg.templates == {"set_src": "uci set firewall.redes_{mac_id}.src=wan"}


@pytest.mark.parametrize(
    "text",
    [
        "[node]\nport = abc\n",
        "[node]\nport = 70000\n",
        "[node]\ndifficulty = 0\n",
        "[actuator]\nbackend = iptables\n",
        "[commands]\nreboot = reboot\n",
        "not an ini",
    ],
)
def test_bad_config(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, text))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini")
