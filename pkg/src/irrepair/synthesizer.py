"""Patch synthesis: hole introduction, grammar generation and sketch completion."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Iterator

from . import ir
from .ir import (Assign, CallExpr, Const, FieldRef, FunctionDecl, Hole, Jump, New, Op, Program,
                 Return, SCall, Sig, Var, VCall)
from .testkit import (BoundExceeded, ExecBounds, Interpreter, Outcome, Stuck, UnitTest,
                      run_test)

log = logging.getLogger(__name__)

HOLE_KINDS = ("AssignRhs", "JumpCond", "ReturnValue", "CallExpr")
INT_OPS = ("+", "-", "*")
REL_OPS = ("==", "!=", "<", "<=", ">", ">=")


class NoHole(ValueError):
    pass


# ---------------------------------------------------------------------------
# Sketches


@dataclass(frozen=True)
class Sketch:
    program: Program
    func: Sig
    line: int
    kind: str
    hole_type: str | None
    original: object  # statement at the hole line

    @property
    def decl(self) -> FunctionDecl:
        return self.program.func(self.func)

    def partial(self):
        """Statement with the hole in place (for display)."""
        return self.fill(Hole(self.kind, self.hole_type))

    def fill(self, e):
        s = self.original
        if self.kind == "AssignRhs":
            return Assign(s.lhs, e)
        if self.kind == "JumpCond":
            return Jump(e, s.target)
        if self.kind == "ReturnValue":
            return Return(e)
        if isinstance(e, Hole):
            return s
        if e.cls is not None:
            return SCall(s.var, e.cls, e.func, e.args)
        return VCall(s.var, e.receiver.name, e.func, e.args)

    def complete(self, e) -> Program:
        return self.program.replace_stmt(self.line, self.fill(e))

    def text(self, e=None) -> str:
        s = self.partial() if e is None else self.fill(e)
        return ir.format_stmt(s, self.decl, self.program)


def _hole_type(p: Program, f: FunctionDecl, s, env) -> str | None:
    if isinstance(s, Jump):
        return "bool"
    if isinstance(s, Assign):
        if isinstance(s.lhs, Var):
            t = env.get(s.lhs.name)
        elif isinstance(s.lhs, FieldRef):
            t = ir.expr_type(p, env, s.lhs)
        else:
            t = "int"
        return t or ir.expr_type(p, env, s.rhs) or "int"
    if isinstance(s, Return):
        return f.ret_type or ir.expr_type(p, env, s.value) or "int"
    if isinstance(s, (SCall, VCall)):
        return env.get(s.var)
    return None


def make_sketch(p: Program, f: Sig, l: int) -> Sketch:
    """Replace the maximal expression of line ``l`` with a hole."""
    decl = p.func(f)
    if l not in decl.lines:
        raise NoHole(f"line {l} is not in {f}")
    s = p.stmt(l)
    if isinstance(s, New):
        raise NoHole(f"line {l}: no hole for New")
    kind = {Assign: "AssignRhs", Jump: "JumpCond", Return: "ReturnValue",
            SCall: "CallExpr", VCall: "CallExpr"}.get(type(s))
    if kind is None:
        raise NoHole(f"line {l}: statement admits no hole")
    env = ir.infer_types(p, decl)
    return Sketch(p, f, l, kind, _hole_type(p, decl, s, env), s)


# ---------------------------------------------------------------------------
# Grammars


@dataclass(frozen=True)
class NT:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Production:
    """``lhs ::= rhs`` where rhs mixes terminal text and ``NT`` symbols.

    ``build`` turns the completed children (one per NT, left to right) into an
    expression.
    """
    lhs: str
    rhs: tuple
    build: Callable = field(compare=False)

    @property
    def nts(self) -> list[str]:
        return [x.name for x in self.rhs if isinstance(x, NT)]

    def __str__(self) -> str:
        return f"{self.lhs} ::= " + " ".join(str(x) for x in self.rhs)


class Grammar:
    """Context-free grammar with productions sorted by minimal completion cost."""

    def __init__(self, start: str, productions, context: tuple | None = None):
        self.start = start
        self.declared = tuple(productions)
        self.context = context  # (program, function) for parsing sentences
        self.nonterminals = sorted({p.lhs for p in self.declared} | {start})
        self.cost = self._min_costs()
        order = {id(p): i for i, p in enumerate(self.declared)}
        self._rules: dict[str, list[Production]] = {}
        for p in self.declared:
            self._rules.setdefault(p.lhs, []).append(p)
        for nt, ps in self._rules.items():
            ps.sort(key=lambda p: (self.prod_cost(p), order[id(p)]))

    def _min_costs(self) -> dict[str, float]:
        cost = {nt: float("inf") for nt in self.nonterminals}
        changed = True
        while changed:
            changed = False
            for p in self.declared:
                c = 1 + sum(cost.get(n, float("inf")) for n in p.nts)
                if c < cost[p.lhs]:
                    cost[p.lhs] = c
                    changed = True
        return cost

    def prod_cost(self, p: Production) -> float:
        return 1 + sum(self.cost.get(n, float("inf")) for n in p.nts)

    def rules(self, nt: str) -> list[Production]:
        return self._rules.get(nt, [])

    @property
    def productions(self) -> list[Production]:
        return [p for nt in self.nonterminals for p in self.rules(nt)]

    def __len__(self) -> int:
        return len(self.declared)

    def __str__(self) -> str:
        return "\n".join(str(p) for p in self.productions)


def _neg(e):
    # constants fold the way the parser folds them
    if isinstance(e, Const) and e.kind == "int":
        return Const(-e.value)
    return Op("-", (e,))


class _GrammarBuilder:
    def __init__(self, s: Sketch):
        self.s = s
        self.p = s.program
        self.f = s.decl
        self.env = ir.infer_types(self.p, self.f)
        self.prods: list[Production] = []

    def fmt(self, e) -> str:
        return ir.format_expr(e, self.f, self.p)

    def add(self, lhs, rhs, build):
        self.prods.append(Production(lhs, tuple(rhs), build))

    def leaf(self, lhs, e):
        self.add(lhs, (self.fmt(e),), lambda _c, e=e: e)

    def typeof(self, e) -> str:
        t = ir.expr_type(self.p, self.env, e)
        return "int" if t in (None, "null") and not (isinstance(e, Const) and e.kind == "null") else (t or "int")

    # terminals -----------------------------------------------------------
    def variables(self) -> list[str]:
        """Formals plus locals assigned on some path into the hole line."""
        if not hasattr(self, "_vars"):
            before = self._lines_before(self.s.line)
            defined = {ir.defined_var(self.p.stmt(l)) for l in before}
            formals = set(self.f.formals)
            self._vars = [v for v in self.f.locals()
                          if v != "$ret" and (v in formals or v in defined)]
        return self._vars

    def _lines_before(self, line: int) -> set[int]:
        seen, todo = set(), [line]
        while todo:
            for q in ir.predecessors(self.p, todo.pop()):
                if q not in seen:
                    seen.add(q)
                    todo.append(q)
        return seen

    def terminals(self) -> list:
        """In-scope immediates and one-step field reads, in a stable order."""
        f, p = self.f, self.p
        out = []
        if not f.is_static and p.has_class(f.owner):
            out += [FieldRef("this", a) for a in p.cls(f.owner).fields if a not in f.params]
        names = self.variables()
        for v in names:
            if v == "this":
                continue
            out.append(Var(v))
        for v in names:
            if v == "this":
                continue
            t = self.env.get(v)
            if t and p.has_class(t):
                out += [FieldRef(v, a) for a in p.cls(t).fields]
        return out

    def immediates(self) -> list:
        return [Var(v) for v in self.variables() if v != "this"] + \
            ([Var("this")] if not self.f.is_static else [])

    def constants(self, t: str) -> list:
        if t == "bool":
            return [ir.TRUE, ir.FALSE]
        if t == "int":
            seen = {0: Const(0), 1: Const(1)}
            for _, s in self.f.body:
                for e in ir.stmt_exprs(s):
                    for sub in ir.sub_exprs(e):
                        if isinstance(sub, Const) and sub.kind in ("int", "str"):
                            seen.setdefault(sub.value, sub)
            return list(seen.values())
        return [ir.NULL]

    def ops_in_function(self) -> list[str]:
        found = []
        for _, s in self.f.body:
            for e in ir.stmt_exprs(s):
                for sub in ir.sub_exprs(e):
                    if isinstance(sub, Op) and len(sub.args) == 2 and sub.op not in found:
                        found.append(sub.op)
        return found

    def pure_models(self, cls: str, arity: int, ret: str | None = None):
        out = []
        if not self.p.has_class(cls):
            return out
        for g in self.p.cls(cls).functions:
            m = self.p.model(g)
            if m is None or not m.pure or g.is_static or len(g.params) != arity:
                continue
            if ret is not None and (g.ret_type or m.ret_type) != ret:
                continue
            out.append(g)
        return out

    # productions -----------------------------------------------------------
    def typed_terminals(self, t: str) -> list:
        return [e for e in self.terminals() if self.typeof(e) == t]

    def expr_grammar(self, t: str) -> None:
        E = "Expr"
        terms = self.terminals()
        by_type: dict[str, list] = {}
        for e in terms:
            by_type.setdefault(self.typeof(e), []).append(e)
        if t == "bool":
            self.leaf(E, ir.TRUE)
            self.leaf(E, ir.FALSE)
            for e in by_type.get("bool", []):
                self.leaf(E, e)
            self.atoms(E, by_type)
            self.add(E, ("!", "(", NT(E), ")"), lambda c: Op("!", (c[0],)))
            for op in ("&&", "||"):
                self.add(E, ("(", NT(E), op, NT(E), ")"), lambda c, op=op: Op(op, (c[0], c[1])))
            return
        if t == "int":
            for e in by_type.get("int", []) + self.constants("int"):
                self.leaf(E, e)
            for owner in sorted(by_type):
                if owner in ("int", "bool"):
                    continue
                for x in by_type[owner]:
                    for g in self.pure_models(owner, 0, "int"):
                        self.leaf(E, CallExpr(x, None, g.name, ()))
            self.add(E, ("-", "(", NT(E), ")"), lambda c: _neg(c[0]))
            ops = list(INT_OPS) + [o for o in self.ops_in_function()
                                   if o not in INT_OPS and o not in ir.BOOL_OPS]
            for op in ops:
                self.add(E, ("(", NT(E), op, NT(E), ")"), lambda c, op=op: Op(op, (c[0], c[1])))
            return
        for e in by_type.get(t, []) + [ir.NULL]:
            self.leaf(E, e)

    def atoms(self, E: str, by_type: dict) -> None:
        ints = by_type.get("int", []) + self.constants("int")
        n_vars = len(by_type.get("int", []))
        for i, a in enumerate(ints):
            for j, b in enumerate(ints):
                if j <= i or (i >= n_vars and j >= n_vars):
                    continue
                for op in REL_OPS:
                    self.leaf(E, Op(op, (a, b)))
        bools = by_type.get("bool", [])
        for i, a in enumerate(bools):
            for b in bools[i + 1:]:
                for op in ("==", "!="):
                    self.leaf(E, Op(op, (a, b)))
        for t in sorted(by_type):
            if t in ("int", "bool"):
                continue
            objs = by_type[t]
            for i, a in enumerate(objs):
                for b in objs[i + 1:] + [ir.NULL]:
                    for op in ("==", "!="):
                        self.leaf(E, Op(op, (a, b)))
            eqs = self.pure_models(t, 1, "bool")
            for g in eqs:
                for i, a in enumerate(objs):
                    for j, b in enumerate(objs):
                        if i != j:
                            self.leaf(E, CallExpr(a, None, g.name, (b,)))

    def return_grammar(self, t: str) -> None:
        E = "Expr"
        for v in self.immediates():
            if self.typeof(v) == t:
                self.leaf(E, v)
        for c in self.constants(t):
            self.leaf(E, c)

    def arg_nt(self, t: str | None) -> str:
        name = f"Arg_{t or 'any'}"
        if not any(p.lhs == name for p in self.prods):
            for v in self.immediates():
                if t is None or self.typeof(v) == t:
                    self.leaf(name, v)
            for c in self.constants(t or "int"):
                self.leaf(name, c)
        return name

    def call_grammar(self) -> None:
        C = "Call"
        s = self.s.original
        want = self.env.get(s.var)
        targets = []
        if isinstance(s, VCall):
            for v in self.immediates():
                cls = self.env.get(v.name)
                if not cls or not self.p.has_class(cls):
                    continue
                for g in self.p.cls(cls).functions:
                    if not g.is_static:
                        targets.append((v, g))
        else:
            for g in self.p.functions():
                if g.is_static and g.sig != self.f.sig:
                    targets.append((None, g))
        for recv, g in targets:
            rt = g.ret_type or (self.p.model(g).ret_type if self.p.model(g) else None)
            if want and rt and want != rt and not (want == "int" and rt == "bool"):
                continue
            types = g.param_types or (None,) * len(g.params)
            arg_nts = [self.arg_nt(t) for t in types]
            head = (self.fmt(recv) if recv is not None else g.owner) + "." + g.name
            rhs = [head, "("]
            for i, a in enumerate(arg_nts):
                if i:
                    rhs.append(",")
                rhs.append(NT(a))
            rhs.append(")")
            if recv is not None:
                build = lambda c, recv=recv, g=g: CallExpr(recv, None, g.name, tuple(c))
            else:
                build = lambda c, g=g: CallExpr(None, g.owner, g.name, tuple(c))
            self.prods.insert(0, Production(C, tuple(rhs), build))


def generate_grammar(s: Sketch) -> Grammar:
    """Scope- and type-directed grammar for the hole of ``s``."""
    b = _GrammarBuilder(s)
    t = s.hole_type or "int"
    if s.kind == "CallExpr":
        b.call_grammar()
        return Grammar("Call", b.prods, (s.program, s.decl))
    if s.kind == "ReturnValue":
        b.return_grammar(t)
    else:
        b.expr_grammar(t)
    return Grammar("Expr", b.prods, (s.program, s.decl))


# ---------------------------------------------------------------------------
# Enumeration


@dataclass
class ExpansionBudget:
    max_expansions: int = 8
    used: int = 0  # expansions of the last derivation reached
    explored: int = 0  # total production applications during the search

    def __post_init__(self):
        if self.max_expansions < 0:
            raise ValueError("max_expansions must be non-negative")


def derivations(g: Grammar, k: int, budget: ExpansionBudget | None = None) -> Iterator[list]:
    """Leftmost derivations (preorder production lists) of at most ``k`` expansions."""
    cost = g.cost

    def go(pending: list[str], seq: list, need: float):
        if not pending:
            yield seq
            return
        nt = pending[-1]
        rest = pending[:-1]
        for prod in g.rules(nt):
            new_need = need - cost[nt] + g.prod_cost(prod)
            if len(seq) + new_need > k:
                continue
            if budget is not None:
                budget.explored += 1
            yield from go(rest + list(reversed(prod.nts)), seq + [prod], new_need - 1)

    if k <= 0 or g.cost.get(g.start, float("inf")) == float("inf"):
        return
    yield from go([g.start], [], g.cost[g.start])


def build(seq: list):
    it = iter(seq)

    def node():
        prod = next(it)
        children = [node() for _ in prod.nts]
        return prod.build(children)
    e = node()
    return e


def _key(g: Grammar, e) -> str:
    if g.context is not None:
        p, f = g.context
        return ir.format_expr(e, f, p)
    return ir.format_expr(e)


class _LazyList:
    """A generator whose items are kept so it can be replayed."""

    def __init__(self, gen):
        self.items: list = []
        self.gen = gen

    def __iter__(self):
        i = 0
        while True:
            if i < len(self.items):
                yield self.items[i]
            elif self.gen is None:
                return
            else:
                try:
                    self.items.append(next(self.gen))
                except StopIteration:
                    self.gen = None
                    return
                yield self.items[i]
            i += 1


class _Deriver:
    """Memoized leftmost DFS.

    ``expand(nt, k)`` lists ``(expr, size)`` for every derivation of ``nt``
    with at most ``k`` expansions, in the order the plain leftmost DFS
    (``derivations``) produces them: for a production ``A -> B C`` the DFS
    finishes B's subtree before touching C, which is exactly a nested loop
    over B's and then C's derivations.
    """

    def __init__(self, g: Grammar):
        self.g = g
        self.memo: dict = {}

    def expand(self, nt: str, k: float):
        key = (nt, k)
        hit = self.memo.get(key)
        if hit is None:
            hit = self.memo[key] = _LazyList(self._iter(nt, k))
        return hit

    def _iter(self, nt: str, k: float):
        g = self.g
        for prod in g.rules(nt):
            if g.prod_cost(prod) > k:
                continue
            nts = prod.nts
            if not nts:
                yield prod.build(()), 1
                continue
            tail = [0.0] * (len(nts) + 1)
            for i in range(len(nts) - 1, -1, -1):
                tail[i] = tail[i + 1] + g.cost[nts[i]]
            yield from self._children(prod, nts, tail, 0, k - 1, [], 1)

    def _children(self, prod, nts, tail, i, room, acc, size):
        if i == len(nts):
            yield prod.build(tuple(acc)), size
            return
        for e, n in self.expand(nts[i], room - tail[i + 1]):
            acc.append(e)
            yield from self._children(prod, nts, tail, i + 1, room - n, acc, size + n)
            acc.pop()


def candidates(g: Grammar, k: int, budget: ExpansionBudget | None = None) -> Iterator[tuple]:
    """Distinct complete expressions with their expansion counts.

    The bounded DFS is rerun with limits 1..k, so smaller expressions come
    first; the last pass alone is the plain DFS with limit k.
    """
    if k <= 0 or g.cost.get(g.start, float("inf")) > k:
        return
    seen = set()
    deriver = _Deriver(g)
    for limit in range(int(g.cost[g.start]), k + 1):
        for e, used in deriver._iter(g.start, limit):
            if budget is not None:
                budget.explored += 1
            # structurally equal expressions print identically and vice versa
            if e in seen:
                continue
            seen.add(e)
            yield e, used


def enumerate_all(g: Grammar, k: int) -> Iterator:
    """Brute-force oracle: expand sentential forms leftmost, no pruning.

    Sentences are parsed back into expressions, so the result does not
    depend on the production ``build`` callbacks.  Limits run 1..k like
    ``candidates``.
    """
    seen = set()
    p, f = g.context if g.context is not None else (None, None)

    def go(form: list, used: int, limit: int):
        idx = next((i for i, x in enumerate(form) if isinstance(x, NT)), None)
        if idx is None:
            yield " ".join(form)
            return
        if used >= limit:
            return
        for prod in g.rules(form[idx].name):
            yield from go(form[:idx] + list(prod.rhs) + form[idx + 1:], used + 1, limit)

    for limit in range(1, k + 1):
        for text in go([NT(g.start)], 0, limit):
            e = ir.parse_expr(text, f, p)
            key = ir.format_expr(e, f, p)
            if key in seen:
                continue
            seen.add(key)
            yield e


# ---------------------------------------------------------------------------
# Fast validation


class _TrieNode:
    __slots__ = ("state", "children", "outcome")

    def __init__(self):
        self.state = None  # snapshot at the next hole execution
        self.children: dict = {}
        self.outcome: Outcome | None = None


class FastValidator:
    """Memo of hole pre-states per test, learnt from full runs.

    A program with the hole at line L runs identically up to the first
    execution of L; the state there, and every later one, is a function of
    the values the hole produced so far.  The trie maps those value
    sequences to pre-states and final outcomes, so a new candidate can often
    be judged by evaluating it on a few recorded states.  The check is exact:
    it only answers when the recorded path fully determines the outcome.
    """

    def __init__(self, sketch: Sketch, tests, bounds: ExecBounds | None = None):
        self.sketch = sketch
        self.tests = list(tests)
        self.bounds = bounds or ExecBounds()
        self.roots = {t.name: _TrieNode() for t in self.tests}
        self.hits = 0
        self.enabled = sketch.kind != "CallExpr"

    def _key(self, value):
        if self.sketch.kind == "JumpCond":
            return value != 0
        return value

    def _eval(self, program: Program, state, e):
        frame, cells, objects = state
        interp = Interpreter(program, self.bounds)
        from .testkit import ConcreteHeap, Trace
        interp.heap = ConcreteHeap(program)
        interp.heap.cells = dict(cells)
        interp.heap.objects = dict(objects)
        interp.trace = Trace()
        interp.stack = []
        interp.steps = 0
        try:
            return self._key(interp.eval(e, dict(frame), self.sketch.decl))
        except (Stuck, BoundExceeded, RecursionError):
            return "stuck"

    def predict(self, e, test: UnitTest) -> Outcome | None:
        if not self.enabled:
            return None
        node = self.roots[test.name]
        program = self.sketch.program
        while True:
            if node.outcome is not None and node.state is None:
                return node.outcome
            if node.state is None:
                return None
            v = self._eval(program, node.state, e)
            if v not in node.children:
                return None
            node = node.children[v]

    def run(self, e, test: UnitTest) -> Outcome:
        """Full run of the completed program, recording the hole path."""
        program = self.sketch.complete(e)
        if not self.enabled:
            return run_test(program, test, self.bounds)
        node = self.roots[test.name]
        path = [node]
        decl = self.sketch.decl

        def hook(frame, f, interp):
            cur = path[-1]
            if cur.state is None:
                cur.state = (dict(frame), dict(interp.heap.cells), dict(interp.heap.objects))
            try:
                v = self._key(interp.eval(e, frame, f))
            except (Stuck, BoundExceeded, RecursionError):
                v = "stuck"
            nxt = cur.children.setdefault(v, _TrieNode())
            path.append(nxt)
            return None

        interp = Interpreter(program, self.bounds, watch=self.sketch.line, hook=hook)
        try:
            value, _, _ = interp.run(test.entry, test.inputs)
            out = Outcome("pass") if value == test.expected_int else Outcome("fail", value)
        except Stuck as exc:
            out = Outcome("stuck", reason=str(exc))
        except (BoundExceeded, RecursionError) as exc:
            out = Outcome("bound", reason=str(exc))
        path[-1].outcome = out
        return out

    def check(self, e) -> bool | None:
        """False when some test is known to fail, True when all are known to pass."""
        known = True
        for t in self.tests:
            out = self.predict(e, t)
            if out is None:
                known = False
            elif not out.passed:
                self.hits += 1
                return False
        return True if known else None


# ---------------------------------------------------------------------------
# Completion


@dataclass
class CompletionResult:
    program: Program | None
    expr: object = None
    patch: str | None = None
    candidates: int = 0
    fast_rejects: int = 0
    expansions: int = 0
    reason: str | None = None

    @property
    def ok(self) -> bool:
        return self.program is not None


def verify_candidate(program: Program, tests, bounds: ExecBounds | None = None) -> bool:
    return all(run_test(program, t, bounds).passed for t in tests)


def complete_sketch(s: Sketch, g: Grammar, tests, budget: ExpansionBudget | None = None,
                    fast: FastValidator | bool | None = True, bounds: ExecBounds | None = None,
                    on_candidate=None, deadline: float | None = None,
                    max_candidates: int | None = None) -> CompletionResult:
    """Depth-first completion of ``s`` under an expansion budget.

    Returns the first candidate (in ``enumerate_all`` order) whose completed
    program passes every test; ``program`` is None when none exists within
    the budget.  ``deadline`` (a ``time.monotonic`` instant) cuts the
    search short; the result then carries ``reason="timeout"``.
    ``max_candidates`` is a deterministic cap on distinct candidates tried.
    """
    budget = budget or ExpansionBudget()
    bounds = bounds or ExecBounds()
    tests = list(tests)
    if fast is True:
        fast = FastValidator(s, tests, bounds)
    elif fast is False:
        fast = None
    res = CompletionResult(None, reason="exhausted")
    for e, used in candidates(g, budget.max_expansions, budget):
        if max_candidates is not None and res.candidates >= max_candidates:
            res.reason = "candidate cap"
            return res
        res.candidates += 1
        if deadline is not None and res.candidates % 256 == 0 and time.monotonic() > deadline:
            res.reason = "timeout"
            return res
        if on_candidate is not None:
            on_candidate(e)
        if fast is not None:
            verdict = fast.check(e)
            if verdict is False:
                res.fast_rejects += 1
                continue
            ok = all(fast.run(e, t).passed for t in tests)
        else:
            ok = None
        program = s.complete(e)
        if ok is None:
            ok = verify_candidate(program, tests, bounds)
        if not ok:
            continue
        # final authority: an independent full verification
        if not verify_candidate(program, tests, bounds):
            raise AssertionError("fast validation accepted a failing candidate")
        budget.used = used
        res.program, res.expr, res.expansions, res.reason = program, e, used, None
        res.patch = s.text(e)
        return res
    return res


def patch_expression_text(s: Sketch, e) -> str:
    """Just the filled expression (e.g. ``!dl_dst.equals(r.dl_dst)``)."""
    return ir.format_expr(e, s.decl, s.program)
