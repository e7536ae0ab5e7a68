"""Exit-code contract and output shapes of the command line front end."""

import json
import os
import socket

import pytest

from vlab.cli import EXIT_ENV, EXIT_FAIL, EXIT_OK, EXIT_PARSE, bundled_script, main

NITRITE = os.path.join(os.path.dirname(__file__), "..", "src", "vlab", "labs",
                       "nitrite.lab")


def test_run_passing_script_exits_zero(capsys):
    assert main(["run", NITRITE]) == EXIT_OK
    data = json.loads(capsys.readouterr().out)
    assert data["verdict"] == "interference"
    assert data["passed"] is True


def test_run_failed_assert_exits_one(tmp_path, capsys):
    script = tmp_path / "bad.lab"
    script.write_text("wait 1\nassert verdict brown_ring\n")
    assert main(["run", str(script)]) == EXIT_FAIL


def test_run_missing_file_exits_two(capsys):
    assert main(["run", "no_such_protocol.lab"]) == EXIT_PARSE
    assert "error" in capsys.readouterr().err


def test_run_parse_error_exits_two(tmp_path, capsys):
    script = tmp_path / "syntax.lab"
    script.write_text("tlit tube 45 over 10\n")
    assert main(["run", str(script)]) == EXIT_PARSE
    err = capsys.readouterr().err
    assert "1:1" in err


def test_run_runtime_error_exits_one(tmp_path, capsys):
    script = tmp_path / "runtime.lab"
    script.write_text("grab flask\n")
    assert main(["run", str(script)]) == EXIT_FAIL


def test_run_hash_prints_only_digest(capsys):
    assert main(["run", NITRITE, "--hash"]) == EXIT_OK
    out = capsys.readouterr().out.strip()
    assert len(out) == 64 and set(out) <= set("0123456789abcdef")


def test_run_out_writes_report_file(tmp_path, capsys):
    out = tmp_path / "report.json"
    assert main(["run", NITRITE, "--out", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["verdict"] == "interference"


def test_run_snapshot_dump(tmp_path):
    script = tmp_path / "w.lab"
    script.write_text("wait 10\n")
    snaps = tmp_path / "snaps"
    assert main(["run", str(script), "--snapshots", str(snaps),
                 "--snapshot-every", "5"]) == EXIT_OK
    files = sorted(os.listdir(snaps))
    assert len(files) == 2
    first = json.loads((snaps / files[0]).read_text())
    assert first["tick"] == 5


def test_balance_exit_codes(capsys):
    assert main(["balance",
                 "2HNO3 + 3H2SO4 + 6FeSO4 -> 3Fe2(SO4)3 + 2NO + 4H2O"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "BALANCED" in out and "Fe: 6 -> 6" in out
    assert main(["balance", "H2 + O2 -> H2O"]) == EXIT_FAIL
    assert "UNBALANCED" in capsys.readouterr().out
    assert main(["balance", "H2 + O2"]) == EXIT_PARSE
    assert main(["balance", "H2 + Xq2 -> H2Xq2"]) == EXIT_PARSE


def test_serve_busy_port_exits_three(capsys, monkeypatch):
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        sock.listen(1)
        port = sock.getsockname()[1]
        monkeypatch.delenv("VLAB_PORT", raising=False)
        assert main(["serve", "--port", str(port)]) == EXIT_ENV
    assert "cannot bind" in capsys.readouterr().err


def test_serve_port_env_override(capsys, monkeypatch):
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        sock.listen(1)
        port = sock.getsockname()[1]
        monkeypatch.setenv("VLAB_PORT", str(port))
        # --port says a free port, but the env override points at the busy one
        assert main(["serve", "--port", "1"]) == EXIT_ENV
    assert str(port) in capsys.readouterr().err


def test_serve_replay_prints_digest(tmp_path, capsys):
    log = tmp_path / "log.ndjson"
    log.write_text('{"type":"header","version":1,"seed":0}\n'
                   '{"type":"end","tick":4,"digest":""}\n')
    assert main(["serve", "--replay", str(log)]) == EXIT_OK
    out = capsys.readouterr().out.strip()
    assert len(out) == 64


def test_serve_replay_corrupt_log_exits_two(tmp_path, capsys):
    log = tmp_path / "log.ndjson"
    log.write_text('{"type":"header","version":1,"seed":0}\ngarbage\n')
    assert main(["serve", "--replay", str(log)]) == EXIT_PARSE
    assert "line 2" in capsys.readouterr().err


def test_bundled_scripts_ship_with_the_package():
    for name in ("brown_ring.lab", "wrong_order.lab", "dilute.lab",
                 "nitrite.lab"):
        text = bundled_script(name)
        assert text.strip()
