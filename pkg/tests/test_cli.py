import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from bbc.cli import main
from bbc.store import read_registry

SMALL = """\
seed = 5
n_vehicles = 5
n_infra = 1
road_length = 1000
radio_range = 500
rounds = 12
"""


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "small.toml"
    cfg.write_text(SMALL)
    out = root / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    return cfg, out


def test_run_writes_output_tree(small_run):
    _, out = small_run
    names = sorted(p.name for p in out.iterdir())
    assert names == ["metrics.txt", "node-000.chain", "node-001.chain", "node-002.chain",
                     "node-003.chain", "node-004.chain", "node-005.chain", "registry.txt", "run.log"]
    assert "converged=true" in (out / "metrics.txt").read_text()


def test_run_config_errors(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text(SMALL.replace("radio_range = 500", "radio_range = -1"))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "radio_range" in capsys.readouterr().err
    cfg.write_text(SMALL + "mystery = 1\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    cfg.write_text("seed = [")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert main(["run", "--config", str(tmp_path / "missing.toml"), "--out", str(tmp_path / "o")]) == 1
    assert main(["run", "--config", str(cfg)]) == 1
    assert main(["frobnicate"]) == 1
    assert main([]) == 1


def test_run_golden(small_run, tmp_path):
    cfg, out = small_run
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "a"), "--golden", str(out)]) == 0
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "b"), "--golden", str(out / "run.log")]) == 0
    edited = tmp_path / "golden.log"
    edited.write_text((out / "run.log").read_text().replace("round=3 ", "round=4 ", 1))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "c"), "--golden", str(edited)]) == 3


def test_run_config_carries_out_dir(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text(SMALL.replace("rounds = 12", "rounds = 2") + f'out_dir = "{(tmp_path / "o").as_posix()}"\n')
    assert main(["run", "--config", str(cfg)]) == 0
    assert (tmp_path / "o" / "run.log").is_file()


def test_validate(small_run, tmp_path, capsys):
    _, out = small_run
    reg = str(out / "registry.txt")
    assert main(["validate", str(out / "node-000.chain"), "--registry", reg]) == 0
    assert capsys.readouterr().out.startswith("valid blocks=13")
    raw = bytearray((out / "node-000.chain").read_bytes())
    tampered = tmp_path / "t.chain"
    first = raw.index(b'"leader_signature":"')
    idx = raw.index(b'"leader_signature":"', first + 1) + 25  # block 1; genesis has no signature
    raw[idx] = ord("0") if raw[idx] != ord("0") else ord("1")
    tampered.write_bytes(bytes(raw))
    assert main(["validate", str(tampered), "--registry", reg]) == 2
    assert "BadSignature" in capsys.readouterr().err
    empty = tmp_path / "empty.chain"
    empty.write_text("")
    assert main(["validate", str(empty), "--registry", reg]) == 2
    assert "no genesis" in capsys.readouterr().err
    assert main(["validate", str(tmp_path / "none.chain"), "--registry", reg]) == 1


def test_audit(small_run, tmp_path, capsys):
    _, out = small_run
    reg = str(out / "registry.txt")
    chain = str(out / "node-003.chain")
    assert main(["audit", chain, "--registry", reg]) == 0
    report = capsys.readouterr().out
    assert report.startswith("# audit height=12 ")
    assert report.count("\nevent ") == 6 + 12
    assert report.count("\ncredit ") == 6

    metrics = (out / "metrics.txt").read_text()
    line = next(ln for ln in metrics.splitlines() if ln.startswith("credit."))
    key, value = line.split("=")
    edited = tmp_path / "metrics.txt"
    edited.write_text(metrics.replace(line, f"{key}={int(value) + 1}"))
    assert main(["audit", chain, "--registry", reg, "--metrics", str(edited)]) == 3
    report_path = tmp_path / "audit.txt"
    assert main(["audit", chain, "--registry", reg, "--out", str(report_path)]) == 0
    assert report_path.read_text() == report


def test_enroll(tmp_path, capsys):
    assert main(["enroll", "--seed", "1", "--size", "0"]) == 1
    assert main(["enroll", "--seed", "-1", "--size", "3"]) == 1
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    assert main(["enroll", "--seed", "1", "--size", "6", "--out", str(a)]) == 0
    assert main(["enroll", "--seed", "2", "--size", "6", "--out", str(b)]) == 0
    ra, _ = read_registry(a)
    rb, _ = read_registry(b)
    assert len(ra) == 6 and not set(ra.ids()) & set(rb.ids())
    capsys.readouterr()
    assert main(["enroll", "--seed", "1", "--size", "6"]) == 0
    assert capsys.readouterr().out == a.read_text()


def test_enrolled_registry_drives_run(tmp_path):
    reg = tmp_path / "reg.txt"
    assert main(["enroll", "--seed", "40", "--size", "6", "--out", str(reg)]) == 0
    cfg = tmp_path / "c.toml"
    cfg.write_text(SMALL.replace("rounds = 12", "rounds = 3"))
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--registry", str(reg)]) == 0
    assert (out / "registry.txt").read_text() == reg.read_text()
    assert main(["validate", str(out / "node-000.chain"), "--registry", str(reg)]) == 0
    cfg.write_text(SMALL.replace("n_vehicles = 5", "n_vehicles = 7"))
    assert main(["run", "--config", str(cfg), "--out", str(out), "--registry", str(reg)]) == 1


def test_console_script_entry(small_run):
    exe = shutil.which("bbc")
    cmd = [exe] if exe else [sys.executable, "-m", "bbc.cli"]
    _, out = small_run
    proc = subprocess.run(
        [*cmd, "validate", str(out / "node-001.chain"), "--registry", str(out / "registry.txt")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr


@pytest.mark.parametrize("name", sorted(p.name for p in (Path(__file__).parents[1] / "scenarios").glob("*.toml")))
def test_shipped_scenarios_parse(name):
    from bbc.cli import load_config

    scenario, _ = load_config(Path(__file__).parents[1] / "scenarios" / name)
    scenario.validate()
