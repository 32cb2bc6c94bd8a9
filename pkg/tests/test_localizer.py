from __future__ import annotations

import pytest
import z3

from irrepair import ir
from irrepair.encoder import (EncodingContext, EncodingError, compute_summary, encode_region,
                              example_consistency)
from irrepair.ir import Sig
from irrepair.localizer import (FaultAt, NoFault, Workspace, candidate_lines, check_faulty_symbolic,
                                check_test, localize_fault, relaxed_check, trace_lines)
from irrepair.smt import SolverSession
from irrepair.testkit import ExecBounds, UnitTest, run_test, trace_test, unroll_and_inline

IS_SAME = Sig("FirewallRule", "isSameAs", 1)
INIT = Sig("FirewallRule", "init", 0)


def harness_visited(p, tests):
    v = {l: False for l in p.all_lines()}
    for t in tests:
        for l in p.func(t.entry).lines:
            v[l] = True
    return v


def test_faulty_check_matches_interpreter(firewall, firewall_abs):
    assert check_faulty_symbolic(firewall_abs, firewall.tests)
    for t in firewall.tests:
        assert check_test(firewall_abs, t) == run_test(firewall_abs, t).passed


@pytest.mark.parametrize("line, sat", [(None, False), (16, False), (17, True), (18, True),
                                       (19, False), (20, True)])
def test_relaxation_per_line(firewall, firewall_abs, line, sat):
    assert relaxed_check(firewall_abs, IS_SAME, firewall.tests, line) is sat


def test_constructor_has_no_fault(firewall, firewall_abs):
    v = harness_visited(firewall_abs, firewall.tests)
    assert localize_fault(firewall_abs, INIT, firewall.tests, v) == NoFault()
    # NoFault soundness: no single unvisited line of init can be relaxed
    for l in candidate_lines(firewall_abs, INIT, v):
        assert not relaxed_check(firewall_abs, INIT, firewall.tests, l)


def test_repeated_localization_progresses(firewall, firewall_abs):
    v = harness_visited(firewall_abs, firewall.tests)
    ws = Workspace(firewall_abs)
    session = SolverSession(seed=0)
    found = []
    while True:
        r = localize_fault(firewall_abs, IS_SAME, firewall.tests, v, session=session, workspace=ws)
        if isinstance(r, NoFault):
            break
        assert r.line not in found
        found.append(r.line)
        v[r.line] = True
    assert sorted(found) == [17, 18, 20]
    assert 18 in found


def test_fault_states(firewall, firewall_abs):
    v = harness_visited(firewall_abs, firewall.tests)
    for l in (20, 17):
        v[l] = True
    r = localize_fault(firewall_abs, IS_SAME, firewall.tests, v, want_states=True)
    assert r == FaultAt(18)
    occ = r.states["same_macs"]
    assert len(occ) == 1
    _, pre, _ = occ[0]
    assert pre["this"] != pre["r"]  # two distinct rule objects


def test_no_candidates_or_unrelated_tests(firewall, firewall_abs):
    v = {l: True for l in firewall_abs.all_lines()}
    assert localize_fault(firewall_abs, IS_SAME, firewall.tests, v) == NoFault()
    v = harness_visited(firewall_abs, firewall.tests)
    assert localize_fault(firewall_abs, IS_SAME, [], v) == NoFault()


def test_trace_fidelity_firewall(firewall, firewall_abs):
    t = firewall.tests[0]
    _, tr = trace_test(firewall_abs, t)
    assert trace_lines(firewall_abs, t) == set(tr.lines)
    assert trace_lines(firewall_abs, firewall.tests[1]) is None  # unsat


def test_summaries_match_inlining(firewall, firewall_abs):
    """Encoding callees by summary or by inlining gives the same verdicts."""
    for inline_all in (False, True):
        ws = Workspace(firewall_abs, inline_all=inline_all)
        got = [check_test(firewall_abs, t, workspace=ws) for t in firewall.tests]
        assert got == [True, False]


LOOPS = """
class C {
  static func sum(n: int): int {
    0: s = 0
    1: i = 0
    2: if (i >= n) goto 6
    3: i = i + 1
    4: s = s + i
    5: if (true) goto 2
    6: return s
  }
  static func twice(n: int): int {
    7: a = C.sum(n)
    8: b = a + a
    9: return b
  }
}
"""


@pytest.mark.parametrize("n", [0, 1, 2, 3, 4])
def test_loops_and_bounds(n):
    p = ir.parse_program(LOOPS)
    for entry in (Sig("C", "sum", 1), Sig("C", "twice", 1)):
        expected = (n * (n + 1) // 2) * (2 if entry.name == "twice" else 1)
        good = UnitTest("g", entry, (n,), expected)
        bad = UnitTest("b", entry, (n,), expected + 1)
        for t in (good, bad):
            assert check_test(p, t) == run_test(p, t).passed, (entry, n, t.name)


def test_summary_paths():
    p = unroll_and_inline(ir.parse_program(LOOPS), None, ExecBounds(2))
    s = compute_summary(p, Sig("C", "sum", 1))
    assert len(s.paths) >= 3 and s.pure
    # the path with n = 1 returns 1
    n = s.args[0]
    solver = z3.Solver()
    solver.add(n == 1)
    solver.add(z3.Or(*[z3.And(pth.pc, pth.ret == 1) for pth in s.paths]))
    assert solver.check() == z3.sat


def test_calls_in_expressions_must_be_pure_models():
    p = ir.parse_program("""
class A {
  static func g(): int {
    0: return 1
  }
  static func f(): int {
    1: x = 1 + A.g()
    2: return x
  }
}""")
    ctx = EncodingContext(unroll_and_inline(p), ExecBounds(), None, {})
    with pytest.raises(EncodingError):
        t = UnitTest("t", Sig("A", "f", 0), (), 2)
        encode_region(ctx, t)
        example_consistency(ctx, t)


def test_stuck_paths_are_infeasible():
    p = ir.parse_program("""
class A {
  fields: v: int;
  static func f(k: int): int {
    0: a = null
    1: if (k == 0) goto 4
    2: x = 10 / k
    3: return x
    4: y = a.v
    5: return y
  }
}""")
    for k, exp in ((2, 5), (0, 0), (0, 7)):
        t = UnitTest("t", Sig("A", "f", 1), (k,), exp)
        assert check_test(p, t) == run_test(p, t).passed
