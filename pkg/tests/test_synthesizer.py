from __future__ import annotations

import random

import pytest

from helpers import random_instance, random_subgrammar
from irrepair import ir
from irrepair.ir import Sig
from irrepair.synthesizer import (ExpansionBudget, FastValidator, NoHole, build, candidates,
                                  complete_sketch, derivations, enumerate_all, generate_grammar,
                                  make_sketch, patch_expression_text, verify_candidate)
from irrepair.testkit import UnitTest

IS_SAME = Sig("FirewallRule", "isSameAs", 1)


def fmt(g, e):
    p, f = g.context
    return ir.format_expr(e, f, p)


def test_hole_kinds(firewall_abs):
    p = firewall_abs
    assert make_sketch(p, IS_SAME, 18).kind == "JumpCond"
    assert make_sketch(p, IS_SAME, 19).kind == "ReturnValue"
    assert make_sketch(p, Sig("FirewallRule", "init", 0), 13).kind == "AssignRhs"
    s = make_sketch(p, Sig("FirewallRule", "init", 0), 12)
    assert s.kind == "CallExpr" and s.hole_type == "MacAddress"
    with pytest.raises(NoHole):
        make_sketch(p, Sig("Test", "test", 2), 21)  # New
    with pytest.raises(NoHole):
        make_sketch(p, IS_SAME, 12)  # wrong function


def test_firewall_grammar(firewall_abs):
    s = make_sketch(firewall_abs, IS_SAME, 18)
    assert s.hole_type == "bool"
    assert s.text() == "if (??) goto 20"
    g = generate_grammar(s)
    text = str(g)
    for needle in ("any_dl_dst", "r.any_dl_dst", "dl_dst.equals(r.dl_dst)", "!", "&&", "||"):
        assert needle in text, needle
    # the fix is two productions away: negation over the equals atom
    exprs = [fmt(g, e) for e, _ in candidates(g, 2)]
    assert "!dl_dst.equals(r.dl_dst)" in exprs


def test_int_grammar_has_no_logic():
    p = ir.parse_program("""
class A {
  static func f(a: int, b: int): int {
    0: x = a + b
    1: return x
  }
}""")
    g = generate_grammar(make_sketch(p, Sig("A", "f", 2), 0))
    text = str(g)
    assert "+" in text and "&&" not in text and "||" not in text
    leaves = {fmt(g, e) for e, _ in candidates(g, 1)}
    assert {"a", "b", "0", "1"} <= leaves


def test_zero_budget_and_bool_leaves(firewall_abs):
    s = make_sketch(firewall_abs, IS_SAME, 18)
    g = generate_grammar(s)
    assert list(candidates(g, 0)) == []
    assert list(enumerate_all(g, 0)) == []
    r = complete_sketch(s, g, [], ExpansionBudget(0))
    assert not r.ok
    first = [fmt(g, e) for e, _ in candidates(g, 1)]
    assert first[:2] == ["true", "false"]
    with pytest.raises(ValueError):
        ExpansionBudget(-1)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_candidates_agree_with_oracle(firewall_abs, k):
    g = generate_grammar(make_sketch(firewall_abs, IS_SAME, 18))
    fast = [fmt(g, e) for e, _ in candidates(g, k)]
    slow = [fmt(g, e) for e in enumerate_all(g, k)]
    assert fast == slow


def test_candidates_agree_on_random_grammars():
    rng = random.Random(7)
    for _ in range(40):
        sketch, _ = random_instance(rng)
        g = random_subgrammar(rng, sketch)
        k = rng.randint(1, 5)
        assert [fmt(g, e) for e, _ in candidates(g, k)] == [fmt(g, e) for e in enumerate_all(g, k)]


def test_derivations_respect_budget(firewall_abs):
    g = generate_grammar(make_sketch(firewall_abs, IS_SAME, 18))
    b = ExpansionBudget(3)
    seqs = list(derivations(g, 3, b))
    assert seqs and all(len(s) <= 3 for s in seqs)
    assert b.explored > 0
    built = {fmt(g, build(s)) for s in seqs}
    assert built == {fmt(g, e) for e, _ in candidates(g, 3)}


def test_firewall_completion(firewall, firewall_abs):
    s = make_sketch(firewall_abs, IS_SAME, 18)
    r = complete_sketch(s, generate_grammar(s), firewall.tests)
    assert r.ok
    assert patch_expression_text(s, r.expr) == "!dl_dst.equals(r.dl_dst)"
    assert r.expansions == 2
    assert verify_candidate(r.program, firewall.tests)


def test_unrepairable_line(firewall, firewall_abs):
    s = make_sketch(firewall_abs, IS_SAME, 20)
    r = complete_sketch(s, generate_grammar(s), firewall.tests)
    assert not r.ok and r.reason == "exhausted"
    assert r.candidates == 2


def test_candidate_cap_and_deadline(firewall_abs):
    s = make_sketch(firewall_abs, IS_SAME, 18)
    g = generate_grammar(s)
    never = [UnitTest("never", Sig("Test", "test", 2), (1, 1), 7)]
    r = complete_sketch(s, g, never, max_candidates=10)
    assert not r.ok and r.reason == "candidate cap" and r.candidates == 10
    r = complete_sketch(s, g, never, deadline=0.0)
    assert not r.ok and r.reason == "timeout"


def test_identity_repair():
    """A correct line is recovered (or an equivalent one found)."""
    p = ir.parse_program("""
class A {
  static func f(a: int, b: int): int {
    0: x = a * b
    1: return x
  }
}""")
    sig = Sig("A", "f", 2)
    tests = [UnitTest(f"t{i}", sig, (i, i + 2), i * (i + 2)) for i in range(-2, 3)]
    s = make_sketch(p, sig, 0)
    r = complete_sketch(s, generate_grammar(s), tests)
    assert r.ok and patch_expression_text(s, r.expr) == "a * b"


def test_call_hole_grammar():
    p = ir.parse_program("""
class M @network {
  fields: v: int;
  static func mk(v: int): M {
    0: m = new M
    1: m.v = v
    2: return m
  }
  static func mk2(v: int): M {
    3: m = new M
    4: w = v + 1
    5: m.v = w
    6: return m
  }
}
class A {
  static func f(a: int): int {
    7: m = M.mk2(a)
    8: r = m.v
    9: return r
  }
}""")
    sig = Sig("A", "f", 1)
    s = make_sketch(p, sig, 7)
    g = generate_grammar(s)
    texts = [fmt(g, e) for e, _ in candidates(g, 3)]
    assert any("M.mk(" in t for t in texts) and any("M.mk2(" in t for t in texts)
    tests = [UnitTest("t", sig, (4,), 4)]
    r = complete_sketch(s, g, tests)
    assert r.ok and r.patch == "m = M.mk(a)"


def test_fast_path_is_conservative():
    rng = random.Random(11)
    for _ in range(25):
        sketch, tests = random_instance(rng)
        g = generate_grammar(sketch)
        fv = FastValidator(sketch, tests)
        for e, _ in candidates(g, 3):
            verdict = fv.check(e)
            truth = verify_candidate(sketch.complete(e), tests)
            if verdict is not None:
                assert verdict == truth, sketch.text(e)
            for t in tests:
                fv.run(e, t)
        a = complete_sketch(sketch, g, tests, ExpansionBudget(3), fast=True)
        b = complete_sketch(sketch, g, tests, ExpansionBudget(3), fast=False)
        assert (a.patch, a.candidates) == (b.patch, b.candidates)
