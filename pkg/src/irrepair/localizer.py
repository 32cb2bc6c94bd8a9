"""Fault localization by correctness-guard relaxation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import z3

from . import ir
from .encoder import EncodingContext, SummaryCache, encode_region, example_consistency
from .ir import New, Program, Sig
from .smt import SolverSession
from .testkit import ExecBounds, UnitTest, unroll_and_inline

log = logging.getLogger(__name__)


class LocalizationTimeout(RuntimeError):
    pass


@dataclass(frozen=True)
class FaultAt:
    line: int
    states: dict = field(default_factory=dict, compare=False, repr=False)

    def __str__(self) -> str:
        return f"FaultAt({self.line})"


@dataclass(frozen=True)
class NoFault:
    def __str__(self) -> str:
        return "NoFault"


class Workspace:
    """Unrolled program and summary memo for one (program, bounds) pair."""

    def __init__(self, p: Program, b: ExecBounds | None = None, inline_all: bool = False):
        self.source = p
        self.bounds = b or ExecBounds()
        self.unrolled = unroll_and_inline(p, None, self.bounds)
        self.summaries = SummaryCache(self.unrolled, self.bounds)
        self.inline_all = inline_all

    def context(self, target: Sig | None, guards: dict | None = None) -> EncodingContext:
        return EncodingContext(self.unrolled, self.bounds, target, dict(guards or {}),
                               S=self.summaries, inline_all=self.inline_all, source=self.source)


def _workspace(p, b, workspace, inline_all=False) -> Workspace:
    if workspace is not None and workspace.source is p:
        return workspace
    return Workspace(p, b, inline_all)


def _session(session) -> SolverSession:
    return session if session is not None else SolverSession()


def encode_tests(ctx: EncodingContext, tests) -> list:
    out = []
    for i, t in enumerate(tests):
        enc = encode_region(ctx, t, i)
        example_consistency(ctx, t)
        out += enc.formula()
    return out


def relevant_tests(p: Program, f: Sig, tests) -> list:
    return [t for t in tests if f in ir.reachable_funcs(p, t.entry)]


def candidate_lines(p: Program, f: Sig, visited: dict) -> list[int]:
    return [l for l, s in p.func(f).body if not visited.get(l, False) and not isinstance(s, New)]


def localize_fault(p: Program, f: Sig, tests, v: dict, b: ExecBounds | None = None,
                   session: SolverSession | None = None, *, workspace: Workspace | None = None,
                   want_states: bool = False):
    """Find one unvisited line of ``f`` whose relaxation makes every test consistent.

    Returns ``FaultAt(line)`` or ``NoFault``; raises ``LocalizationTimeout``
    when the solver gives up.
    """
    ws = _workspace(p, b, workspace)
    session = _session(session)
    cands = candidate_lines(p, f, v)
    tests = relevant_tests(p, f, tests)
    if not cands or not tests:
        return NoFault()
    guards = {l: z3.Bool(f"B_{l}") for l in cands}
    ctx = ws.context(f, guards)
    formula = encode_tests(ctx, tests)
    formula.append(z3.Sum([z3.If(z3.Not(g), 1, 0) for g in guards.values()]) == 1)
    want = list(guards.values())
    res = session.check(formula, want)
    if res.status in ("timeout", "unknown"):
        raise LocalizationTimeout(f"solver returned {res.status} while localizing in {f}")
    if res.unsat:
        return NoFault()
    false = [l for i, l in enumerate(cands) if res.values[i] is False]
    if len(false) != 1:
        raise AssertionError(f"cardinality violated: {false}")
    line = false[0]
    states = extract_states(ctx, session, formula, line) if want_states else {}
    return FaultAt(line, states)


def extract_states(ctx: EncodingContext, session: SolverSession, formula: list, line: int,
                   fix_guards: bool = True) -> dict:
    """Pre/post valuations of ``line`` in each test's model.

    Returns ``{test: [(node key, pre, post), ...]}`` for every selected
    occurrence of the line, where ``pre``/``post`` map variable names (and
    heap addresses) to values.
    """
    extra = []
    if fix_guards:
        extra = [g if l != line else z3.Not(g) for l, g in ctx.B.items()]
    want, layout = [], []
    for name, enc in ctx.tests.items():
        for key, node in enc.nodes.items():
            if ctx.program.orig_line(node.line) != line:
                continue
            inst = node.instance
            addrs = [(n, a) for n, a in inst.slots.items()] + [(h, h) for h in enc.heap_cells]
            layout.append((name, key, len(want), addrs))
            want.append(node.pi)
            for _, a in addrs:
                want.append(node.pre(a))
                want.append(node.post(a))
    res = session.check(list(formula) + extra, want)
    if not res.sat:
        return {}
    out: dict = {}
    for name, key, start, addrs in layout:
        if not res.values[start]:
            continue
        pre, post = {}, {}
        for i, (n, _) in enumerate(addrs):
            pre[n] = res.values[start + 1 + 2 * i]
            post[n] = res.values[start + 2 + 2 * i]
        out.setdefault(name, []).append((key, pre, post))
    return out


def check_faulty_symbolic(p: Program, tests, b: ExecBounds | None = None,
                          session: SolverSession | None = None, *, workspace: Workspace | None = None) -> bool:
    """True iff the all-guards-true formula over ``tests`` is unsatisfiable."""
    ws = _workspace(p, b, workspace)
    session = _session(session)
    ctx = ws.context(None)
    res = session.check(encode_tests(ctx, list(tests)))
    if res.status in ("timeout", "unknown"):
        raise LocalizationTimeout(f"solver returned {res.status}")
    return res.unsat


def check_test(p: Program, t: UnitTest, b: ExecBounds | None = None,
               session: SolverSession | None = None, *, workspace: Workspace | None = None) -> bool:
    """Satisfiability of one test's consistency formula with all guards true."""
    return not check_faulty_symbolic(p, [t], b, session, workspace=workspace)


def relaxed_check(p: Program, f: Sig, tests, line: int | None, b: ExecBounds | None = None,
                  session: SolverSession | None = None, *, workspace: Workspace | None = None) -> bool:
    """Satisfiability with exactly ``line`` relaxed (``None``: nothing relaxed)."""
    ws = _workspace(p, b, workspace)
    session = _session(session)
    guards = {line: z3.BoolVal(False)} if line is not None else {}
    ctx = ws.context(f, guards)
    res = session.check(encode_tests(ctx, list(tests)))
    if res.status in ("timeout", "unknown"):
        raise LocalizationTimeout(f"solver returned {res.status}")
    return res.sat


def trace_lines(p: Program, t: UnitTest, b: ExecBounds | None = None,
                session: SolverSession | None = None, *, workspace: Workspace | None = None,
                inline_all: bool = True) -> set[int] | None:
    """Original lines selected by a model of the all-guards-true formula of ``t``.

    With ``inline_all`` every non-model function is encoded, so the set is
    comparable with the interpreter's executed lines.  ``None`` when unsat.
    """
    ws = workspace if workspace is not None else Workspace(p, b, inline_all)
    session = _session(session)
    ctx = ws.context(None)
    formula = encode_tests(ctx, [t])
    enc = ctx.tests[t.name]
    keys = list(enc.nodes)
    res = session.check(formula, [enc.nodes[k].pi for k in keys])
    if not res.sat:
        return None
    out = set()
    for i, k in enumerate(keys):
        if res.values[i]:
            o = ctx.program.orig_line(enc.nodes[k].line)
            if o is not None:
                out.add(o)
    return out
