"""Shared fixtures-by-function for the test suite: random programs and sketches."""

from __future__ import annotations

import random

from irrepair import ir
from irrepair.synthesizer import Grammar, generate_grammar, make_sketch
from irrepair.testkit import UnitTest, run_test

INT_ATOMS = ["a", "b", "x", "0", "1", "2"]
INT_OPS = ["+", "-", "*"]
REL = ["<", "<=", "==", "!=", ">", ">="]


def rand_int_expr(rng: random.Random, depth: int = 1, atoms=INT_ATOMS) -> str:
    if depth == 0 or rng.random() < 0.4:
        return rng.choice(atoms)
    return f"{rand_int_expr(rng, depth - 1, atoms)} {rng.choice(INT_OPS)} {rng.choice(atoms)}"


def rand_cond(rng: random.Random) -> str:
    return f"{rng.choice(['a', 'b', 'x'])} {rng.choice(REL)} {rng.choice(INT_ATOMS)}"


TEMPLATE = """\
class P {{
  fields: k: int;
  static func f(a: int, b: int): int {{
    0: x = {e0}
    1: if ({c1}) goto 3
    2: x = {e2}
    3: y = {e3}
    4: return y
  }}
}}
"""


def rand_program_text(rng: random.Random) -> tuple[str, dict]:
    parts = {"e0": rand_int_expr(rng, 1, ["a", "b", "0", "1", "2"]), "c1": rand_cond(rng),
             "e2": rand_int_expr(rng), "e3": rand_int_expr(rng)}
    return TEMPLATE.format(**parts), parts


def random_instance(rng: random.Random, n_tests: int | None = None):
    """A (sketch, tests) pair: tests come from a reference program that
    differs from the sketched one at the hole line only."""
    text, parts = rand_program_text(rng)
    line = rng.choice([0, 1, 2, 3])
    key = {0: "e0", 1: "c1", 2: "e2", 3: "e3"}[line]
    ref_parts = dict(parts)
    if rng.random() < 0.7:
        ref_parts[key] = rand_cond(rng) if key == "c1" else rand_int_expr(rng)
    reference = ir.parse_program(TEMPLATE.format(**ref_parts))
    program = ir.parse_program(text)
    sig = ir.Sig("P", "f", 2)
    tests = []
    for i in range(n_tests or rng.randint(1, 4)):
        inputs = (rng.randint(-4, 4), rng.randint(-4, 4))
        probe = UnitTest(f"t{i}", sig, inputs, 0)
        out = run_test(reference, probe)
        tests.append(UnitTest(f"t{i}", sig, inputs, out.actual if out.kind == "fail" else 0))
    return make_sketch(program, sig, line), tests


def random_subgrammar(rng: random.Random, sketch, size: int | None = None) -> Grammar:
    """Random subset of the generated grammar, keeping at least one leaf."""
    g = generate_grammar(sketch)
    prods = list(g.declared)
    leaves = [p for p in prods if not p.nts]
    size = size or rng.randint(2, 7)
    pick = rng.sample(prods, min(size, len(prods)))
    if not any(not p.nts for p in pick):
        pick.append(rng.choice(leaves))
    pick.sort(key=prods.index)
    return Grammar(g.start, pick, g.context)
