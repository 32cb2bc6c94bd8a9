from __future__ import annotations

import json

import pytest

from irrepair import ir
from irrepair.corpus import DEFAULT_ROOT, load_benchmark
from irrepair.driver import (NOT_FAULTY, Failed, RepairConfig, Repaired, SelectionState,
                             failing_tests, localize_first, new_selection, repair,
                             select_function)
from irrepair.ir import Sig
from irrepair.localizer import FaultAt
from irrepair.testkit import UnitTest, verify

IS_SAME = Sig("FirewallRule", "isSameAs", 1)
INIT = Sig("FirewallRule", "init", 0)


@pytest.fixture(scope="module")
def firewall_report(firewall):
    return repair(firewall.program, firewall.tests)


def test_firewall_repair(firewall, firewall_report):
    rep = firewall_report
    assert rep.repaired
    o = rep.outcome
    assert o.fault_line == 18
    assert o.expression == "!dl_dst.equals(r.dl_dst)"
    assert o.patch == "if (!dl_dst.equals(r.dl_dst)) goto 20"
    assert rep.visited_functions()[:2] == [INIT, IS_SAME]
    changed = [l for l in firewall.program.all_lines()
               if firewall.program.stmt(l) != o.program.stmt(l)]
    assert changed == [18]
    # the patched source keeps the original models untouched
    assert o.program.func(Sig("MacAddress", "equals", 1)) == \
        firewall.program.func(Sig("MacAddress", "equals", 1))


def test_report_serialization(firewall_report):
    d = json.loads(firewall_report.to_json())
    assert d["outcome"]["kind"] == "repaired" and d["outcome"]["fault_line"] == 18
    assert d["iterations"][0] == {"target": str(INIT), "localized": "NoFault", "synthesis": None}
    assert set(d["timings"]) == {"localization", "synthesis", "total"}
    assert d["solver_queries"] > 0
    text = firewall_report.to_text()
    assert text.startswith("Repaired: line 18:")
    assert "NoFault" in text


def test_not_faulty(firewall):
    rep = repair(firewall.expected, firewall.tests)
    assert rep.outcome == Failed(NOT_FAULTY)
    assert rep.iterations == []


def test_needs_tests(firewall):
    with pytest.raises(ValueError):
        repair(firewall.program, [])


def test_selection_order(firewall, firewall_abs):
    st = new_selection(firewall_abs, firewall.tests)
    assert Sig("Test", "test", 2) in st.excluded
    assert Sig("MacAddress", "equals", 1) in st.excluded
    assert st.order[:3] == [Sig("Test", "test", 2), INIT, Sig("MacAddress", "of", 1)]
    v = {l: False for l in firewall_abs.all_lines()}
    for sig in st.excluded:
        for l in firewall_abs.func(sig).lines:
            v[l] = True
    assert select_function(firewall_abs, v, st) == INIT
    for l in firewall_abs.func(INIT).lines:
        v[l] = True
    assert select_function(firewall_abs, v, st) == IS_SAME
    for l in firewall_abs.func(IS_SAME).lines:
        v[l] = True
    assert select_function(firewall_abs, v, st) is None


def test_descend_takes_priority():
    p = ir.parse_program("""
class A {
  static func f(): int {
    0: return 1
  }
  static func g(): int {
    1: return 2
  }
}""")
    st = SelectionState([Sig("A", "f", 0)], descend=Sig("A", "g", 0))
    v = {0: False, 1: False}
    assert select_function(p, v, st) == Sig("A", "g", 0)
    assert st.descend is None
    assert select_function(p, v, st) == Sig("A", "f", 0)
    v[0] = True
    # never-invoked functions are still reachable, after the invoked ones
    assert select_function(p, v, st) == Sig("A", "g", 0)


def test_descent_into_callee():
    b = load_benchmark(DEFAULT_ROOT / "ratelimit")
    rep = repair(b.program, b.tests)
    assert rep.repaired
    assert rep.outcome.fault_line == 0 and rep.outcome.patch == "t = rate * dt"
    descents = [it for it in rep.iterations if it.synthesis and
                it.synthesis.get("status") == "descend"]
    assert descents and descents[0].localized == 2
    assert descents[0].synthesis["callee"] == "Meter.tokens/2"
    assert verify(rep.outcome.program, b.tests)


def test_fault_inside_model_is_not_repaired():
    """The test disagrees with the MacAddress model; only model code could
    change that, and model lines are never candidates."""
    p = ir.parse_program("""
class MacAddress @network {
  fields: value: int;
  static func of(v: int): MacAddress {
    0: m = new MacAddress
    1: w = v + 1
    2: m.value = w
    3: return m
  }
  func hashCode(): int {
    4: h = value
    5: return h
  }
}
class Test {
  static func test(x: int): int {
    6: m = MacAddress.of(x)
    7: r = m.hashCode()
    8: return r
  }
}""")
    tests = [UnitTest("t1", Sig("Test", "test", 1), (3,), 4),
             UnitTest("t2", Sig("Test", "test", 1), (5,), 6)]
    rep = repair(p, tests)
    assert isinstance(rep.outcome, Failed)
    assert all(it.target.cls != "MacAddress" for it in rep.iterations)


def test_localize_first(firewall):
    f, res, its = localize_first(firewall.program, firewall.tests)
    assert (f, res) == (IS_SAME, FaultAt(20))
    assert its[0].target == INIT
    f, res, _ = localize_first(firewall.program, firewall.tests, function=INIT)
    assert f == INIT and not isinstance(res, FaultAt)


def test_failing_tests(firewall):
    assert [t.name for t in failing_tests(firewall.program, firewall.tests)] == ["same_macs"]


def test_config_dict():
    d = RepairConfig(seed=3).to_dict()
    assert d["seed"] == 3 and d["expansions"] == 8 and d["unroll"] == 3
    assert isinstance(repair.__doc__, str) and Repaired.__name__ == "Repaired"
