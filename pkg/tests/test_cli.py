from __future__ import annotations

import json
import shutil
import subprocess
import sys

import pytest

from irrepair.cli import EXIT_FAILED, EXIT_INPUT, EXIT_OK, EXIT_SOLVER, main
from irrepair.corpus import DEFAULT_ROOT


@pytest.fixture
def fw(tmp_path):
    src = DEFAULT_ROOT / "firewall"
    for name in ("program.np", "tests.json", "expected_patch.np"):
        shutil.copy(src / name, tmp_path / name)
    return tmp_path


def test_check(fw, capsys):
    assert main(["check", str(fw / "program.np"), str(fw / "tests.json")]) == EXIT_FAILED
    out = capsys.readouterr().out
    assert "same_macs" in out
    assert main(["check", str(fw / "expected_patch.np"), str(fw / "tests.json")]) == EXIT_OK


def test_localize(fw, capsys):
    assert main(["localize", str(fw / "program.np"), str(fw / "tests.json")]) == EXIT_OK
    assert capsys.readouterr().out.strip() == \
        "FaultAt(20) in FirewallRule.isSameAs/1: return false"
    code = main(["localize", str(fw / "program.np"), str(fw / "tests.json"),
                 "--function", "FirewallRule.init", "--report", "json"])
    assert code == EXIT_FAILED
    data = json.loads(capsys.readouterr().out)
    assert data["line"] is None and data["function"] == "FirewallRule.init/0"


def test_repair_writes_outputs(fw, capsys):
    code = main(["repair", str(fw / "program.np"), str(fw / "tests.json"), "--report", "json"])
    assert code == EXIT_OK
    data = json.loads(capsys.readouterr().out)
    assert data["outcome"]["patch"] == "if (!dl_dst.equals(r.dl_dst)) goto 20"
    fixed = (fw / "program.fixed.np").read_text()
    assert "18: if (!dl_dst.equals(r.dl_dst)) goto 20" in fixed
    assert json.loads((fw / "program.report.json").read_text())["outcome"]["fault_line"] == 18
    assert main(["check", str(fw / "program.fixed.np"), str(fw / "tests.json")]) == EXIT_OK


def test_repair_not_faulty(fw, capsys):
    code = main(["repair", str(fw / "expected_patch.np"), str(fw / "tests.json")])
    assert code == EXIT_FAILED
    assert "not faulty" in capsys.readouterr().out
    assert not (fw / "expected_patch.fixed.np").exists()


def test_input_errors(fw, tmp_path, capsys):
    assert main(["check", str(tmp_path / "missing.np"), str(fw / "tests.json")]) == EXIT_INPUT
    bad = tmp_path / "bad.np"
    bad.write_text("class {")
    assert main(["check", str(bad), str(fw / "tests.json")]) == EXIT_INPUT
    badtests = tmp_path / "bad.json"
    badtests.write_text('[{"name": "x", "entry": "Nope.f", "inputs": [], "expected": 0}]')
    assert main(["check", str(fw / "program.np"), str(badtests)]) == EXIT_INPUT
    assert main(["repair", str(fw / "program.np"), str(fw / "tests.json"),
                 "--unroll", "-1"]) == EXIT_INPUT
    assert main(["frobnicate"]) == EXIT_INPUT
    assert main(["bench", "--only", "nosuchbench"]) == EXIT_INPUT
    capsys.readouterr()


def test_missing_solver(fw, capsys):
    code = main(["localize", str(fw / "program.np"), str(fw / "tests.json"),
                 "--solver", "/nonexistent/z3"])
    assert code == EXIT_SOLVER
    assert "solver unavailable" in capsys.readouterr().err


def test_bench_subset(tmp_path, capsys):
    out = tmp_path / "bench.json"
    assert main(["bench", "--only", "firewall", "ttl", "--json", str(out)]) == EXIT_OK
    table = capsys.readouterr().out
    assert "Loc Time (s)" in table and "firewall" in table
    data = json.loads(out.read_text())
    assert [r["name"] for r in data["benchmarks"]] == ["firewall", "ttl"]
    fw = data["benchmarks"][0]
    assert fw["succ"] and fw["exp"] and fw["fault_line"] == 18
    assert data["summary"] == {"total": 2, "repaired": 2}


def test_module_entry_point(fw):
    proc = subprocess.run([sys.executable, "-m", "irrepair", "check", str(fw / "program.np"),
                           str(fw / "tests.json")], capture_output=True, text=True)
    assert proc.returncode == EXIT_FAILED
