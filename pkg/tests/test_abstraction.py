from __future__ import annotations

import pytest

from irrepair import ir
from irrepair.abstraction import (ModelRegistry, apply_abstraction, builtin_registry, load_manifest,
                                  register_model, value_equals)
from irrepair.ir import Sig
from irrepair.testkit import ConcreteHeap, Interpreter, UnitTest, run_test

WRAPPER = """
class Port @network {
  fields: value: int;
  static func of(v: int): Port {
    0: p = new Port
    1: p.value = v
    2: return p
  }
  func same(o: Port): bool {
    3: return false
  }
}
class T {
  static func t(a: int, b: int): bool {
    4: x = Port.of(a)
    5: y = Port.of(b)
    6: r = x.same(y)
    7: return r
  }
}
"""


def test_builtin_models_cover_wrappers():
    r = builtin_registry()
    for cls in ("MacAddress", "IPv4Address"):
        assert Sig(cls, "equals", 1) in r and Sig(cls, "of", 1) in r
        assert r.get(Sig(cls, "equals", 1)).pure
        assert not r.get(Sig(cls, "of", 1)).pure


def test_abstraction_binds_models(firewall, firewall_abs):
    eq = firewall_abs.func(Sig("MacAddress", "equals", 1))
    assert firewall_abs.model(eq) is not None
    assert firewall_abs.model(firewall_abs.func(Sig("FirewallRule", "init", 0))) is None
    # lines stay addressable
    assert firewall_abs.all_lines()[: len(firewall.program.all_lines())] == firewall.program.all_lines()
    # getters and setters appear for model fields
    assert firewall_abs.has_func(Sig("MacAddress", "get_value", 0))


def test_equals_model_semantics():
    with pytest.warns(UserWarning):
        p = apply_abstraction(ir.parse_program(WRAPPER.replace("same", "equals")))
    m = p.model(p.func(Sig("Port", "equals", 1)))
    assert m is None  # Port is not a builtin wrapper
    reg = load_manifest({"Port.equals": {"template": "value_equals"},
                         "Port.of": {"template": "value_of"}}, p)
    p = apply_abstraction(ir.parse_program(WRAPPER.replace("same", "equals")), reg)
    t = Sig("T", "t", 2)
    assert run_test(p, UnitTest("eq", t, (3, 3), 1)).passed
    assert run_test(p, UnitTest("ne", t, (3, 4), 0)).passed
    heap = ConcreteHeap(p)
    a = p.model(p.func(Sig("Port", "of", 1))).concrete(heap, None, [9])
    eq = p.model(p.func(Sig("Port", "equals", 1)))
    assert eq.concrete(heap, a, [0]) == 0  # null never equals


def test_manifest_rejects_unknown_template():
    p = ir.parse_program(WRAPPER)
    with pytest.raises(ValueError):
        load_manifest({"Port.same": {"template": "nope"}}, p)


def test_register_model_replaces_same_signature():
    r = register_model(ModelRegistry(), value_equals("A", 0))
    r = register_model(r, value_equals("A", 1))
    assert len(r) == 1


def test_missing_model_keeps_body():
    p = ir.parse_program(WRAPPER)
    with pytest.warns(UserWarning):
        q = apply_abstraction(p)
    assert q.model(q.func(Sig("Port", "same", 1))) is None


def test_abstraction_soundness_on_corpus(corpus):
    """Abstracted and original programs agree on every corpus test."""
    for b in corpus:
        for prog in filter(None, (b.program, b.expected)):
            abs_p = apply_abstraction(prog)
            for t in b.tests:
                a, c = run_test(prog, t), run_test(abs_p, t)
                assert (a.kind, a.actual) == (c.kind, c.actual), (b.name, t.name)


def test_models_run_without_body_execution(firewall_abs, firewall):
    t = firewall.tests[0]
    _, trace, _ = Interpreter(firewall_abs).run(t.entry, t.inputs)
    assert not set(trace.lines) & set(range(0, 12))  # no MacAddress body lines
