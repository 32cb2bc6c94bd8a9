"""Concrete bounded interpreter, unit tests and the pass/fail oracle."""

from __future__ import annotations

import dataclasses
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import ir
from .ir import (Assign, CallExpr, Const, FieldRef, FunctionDecl, Hole, Index, Jump, New,
                 Op, Program, Return, SCall, Sig, Trap, Var, VCall)

# Heap objects are STRIDE cells apart; null dereferences land below STRIDE.
HEAP_STRIDE = 1000
INT_BITS = 64
_MOD = 1 << INT_BITS
_HALF = 1 << (INT_BITS - 1)


def wrap(v: int) -> int:
    return ((v + _HALF) % _MOD) - _HALF


@dataclass(frozen=True)
class ExecBounds:
    unroll_k: int = 3
    step_limit: int = 100_000

    def __post_init__(self):
        if self.unroll_k < 1 or self.step_limit < 1:
            raise ValueError("bounds must be positive")


@dataclass(frozen=True)
class UnitTest:
    name: str
    entry: Sig
    inputs: tuple
    expected: int

    @property
    def expected_int(self) -> int:
        return int(self.expected)


@dataclass(frozen=True)
class Outcome:
    kind: str  # pass | fail | stuck | bound
    actual: int | None = None
    reason: str = ""

    @property
    def passed(self) -> bool:
        return self.kind == "pass"

    def __str__(self) -> str:
        if self.kind == "fail":
            return f"Fail(actual={self.actual})"
        if self.kind in ("stuck", "bound"):
            return f"{self.kind.capitalize()}({self.reason})"
        return "Pass"


PASS = Outcome("pass")


class Stuck(Exception):
    pass


class BoundExceeded(Exception):
    pass


def _bool(v) -> bool:
    return v != 0


class ConcreteHeap:
    """Heap protocol over plain ints (see ``abstraction`` module docstring)."""

    def __init__(self, program: Program):
        self.program = program
        self.cells: dict[int, int] = {}
        self.objects: dict[int, tuple[str, int]] = {}

    def alloc(self, cls: str, size: int) -> int:
        base = HEAP_STRIDE * (len(self.objects) + 1)
        self.objects[base] = (cls, size)
        for i in range(size):
            self.cells[base + i] = 0
        return base

    def read(self, addr: int) -> int:
        try:
            return self.cells[addr]
        except KeyError:
            raise Stuck(f"invalid read at address {addr}") from None

    def write(self, addr: int, value: int) -> None:
        if addr not in self.cells:
            raise Stuck(f"invalid write at address {addr}")
        self.cells[addr] = value

    def dtype(self, addr: int) -> int:
        if addr == 0:
            return 0
        if addr not in self.objects:
            raise Stuck(f"no object at address {addr}")
        return self.program.class_id(self.objects[addr][0])

    def class_of(self, addr: int) -> str:
        if addr == 0:
            raise Stuck("null receiver")
        if addr not in self.objects:
            raise Stuck(f"no object at address {addr}")
        return self.objects[addr][0]

    # value helpers used by models
    add = staticmethod(lambda a, k: a + k)
    eq = staticmethod(lambda a, b: a == b)
    and_ = staticmethod(lambda a, b: a and b)
    ne_null = staticmethod(lambda a: a != 0)
    to_int = staticmethod(lambda c: int(bool(c)))

    @staticmethod
    def cond(c, then, other):
        return then() if c else other()


def apply_op(op: str, args: list[int]) -> int:
    if len(args) == 1:
        (a,) = args
        return int(a == 0) if op == "!" else wrap(-a)
    a, b = args
    if op == "+":
        return wrap(a + b)
    if op == "-":
        return wrap(a - b)
    if op == "*":
        return wrap(a * b)
    if op in ("/", "%"):
        if b == 0:
            raise Stuck("division by zero")
        q = abs(a) // abs(b)
        if (a < 0) != (b < 0):
            q = -q
        return wrap(q) if op == "/" else wrap(a - b * q)
    if op == "==":
        return int(a == b)
    if op == "!=":
        return int(a != b)
    if op == "<":
        return int(a < b)
    if op == "<=":
        return int(a <= b)
    if op == ">":
        return int(a > b)
    if op == ">=":
        return int(a >= b)
    if op == "&&":
        return int(_bool(a) and _bool(b))
    if op == "||":
        return int(_bool(a) or _bool(b))
    if op == "&":
        return wrap(a & b)
    if op == "|":
        return wrap(a | b)
    if op == "^":
        return wrap(a ^ b)
    if op == "<<":
        return wrap(a << (b & 63))
    if op == ">>":
        return wrap(a >> (b & 63))
    if op == ">>>":
        return wrap((a % _MOD) >> (b & 63))
    raise ValueError(f"unknown operator {op}")


@dataclass
class Trace:
    lines: list[int] = field(default_factory=list)
    calls: list[Sig] = field(default_factory=list)
    # (line, frame snapshot, heap snapshot) captured at watched lines
    snapshots: list = field(default_factory=list)


class Interpreter:
    """Small-step interpreter for one program under fixed bounds."""

    def __init__(self, program: Program, bounds: ExecBounds | None = None,
                 watch: int | None = None, hook=None):
        self.program = program
        self.bounds = bounds or ExecBounds()
        self.watch = watch
        self.hook = hook  # hook(frame, func) -> value override at the watched line
        self._envs: dict[Sig, dict] = {}

    def env(self, f: FunctionDecl) -> dict:
        if f.sig not in self._envs:
            self._envs[f.sig] = ir.infer_types(self.program, f)
        return self._envs[f.sig]

    def run(self, entry: Sig, inputs) -> tuple[int, Trace, ConcreteHeap]:
        self.heap = ConcreteHeap(self.program)
        self.trace = Trace()
        self.stack: list[Sig] = []
        self.steps = 0
        f = self.program.func(entry)
        if not f.is_static:
            raise ValueError(f"entry {entry} must be static")
        if len(inputs) != len(f.params):
            raise ValueError(f"entry {entry} expects {len(f.params)} inputs")
        value = self.invoke(f, None, [int(v) for v in inputs])
        return value, self.trace, self.heap

    # -- calls -----------------------------------------------------------
    def invoke(self, f: FunctionDecl, receiver, args: list[int]) -> int:
        self.trace.calls.append(f.sig)
        model = self.program.model(f)
        if model is not None:
            if not f.is_static and receiver == 0:
                raise Stuck(f"null receiver calling {f.sig}")
            return model.concrete(self.heap, receiver, args)
        if self.stack.count(f.sig) >= self.bounds.unroll_k:
            raise BoundExceeded(f"recursion depth of {f.sig} exceeds {self.bounds.unroll_k}")
        frame = dict(zip(f.formals, ([] if f.is_static else [receiver]) + list(args)))
        self.stack.append(f.sig)
        try:
            return self._exec(f, frame)
        finally:
            self.stack.pop()

    def dispatch(self, receiver: int, name: str, arity: int) -> FunctionDecl:
        cls = self.heap.class_of(receiver)
        for g in self.program.cls(cls).functions:
            if g.name == name and len(g.params) == arity and not g.is_static:
                return g
        raise Stuck(f"{cls} has no virtual function {name}/{arity}")

    def static_target(self, cls: str, name: str, arity: int) -> FunctionDecl:
        try:
            return self.program.find(cls, name, arity)
        except KeyError:
            raise Stuck(f"unknown function {cls}.{name}/{arity}") from None

    # -- statements ------------------------------------------------------
    def _exec(self, f: FunctionDecl, frame: dict) -> int:
        body = f.body
        pos_of = {l: i for i, (l, _) in enumerate(body)}
        pos, backedges = 0, 0
        bounds = self.bounds
        while True:
            if pos >= len(body):
                raise Stuck(f"fell off the end of {f.sig}")
            self.steps += 1
            if self.steps > bounds.step_limit:
                raise BoundExceeded("step limit exhausted")
            line, s = body[pos]
            self.trace.lines.append(line)
            override = None
            if line == self.watch:
                self.trace.snapshots.append((line, dict(frame), dict(self.heap.cells),
                                             dict(self.heap.objects)))
                if self.hook is not None:
                    override = self.hook(frame, f, self)
            if isinstance(s, Assign):
                v = self.eval(s.rhs, frame, f) if override is None else override
                self.store(s.lhs, v, frame, f)
            elif isinstance(s, Jump):
                c = self.eval(s.cond, frame, f) if override is None else override
                if _bool(c):
                    if s.target <= line:
                        backedges += 1
                        if backedges > bounds.unroll_k:
                            raise BoundExceeded(f"loop in {f.sig} exceeds {bounds.unroll_k} iterations")
                    pos = pos_of[s.target]
                    continue
            elif isinstance(s, Return):
                return self.eval(s.value, frame, f) if override is None else override
            elif isinstance(s, New):
                size = s.size if s.size is not None else len(self.program.cls(s.cls).fields)
                frame[s.var] = self.heap.alloc(s.cls, size)
            elif isinstance(s, (SCall, VCall)):
                if override is not None:
                    frame[s.var] = override
                else:
                    args = [self.eval(a, frame, f) for a in s.args]
                    if isinstance(s, SCall):
                        g = self.static_target(s.cls, s.func, len(args))
                        frame[s.var] = self.invoke(g, None, args)
                    else:
                        recv = frame.get(s.receiver, 0)
                        g = self.dispatch(recv, s.func, len(args))
                        frame[s.var] = self.invoke(g, recv, args)
            elif isinstance(s, Trap):
                if s.reason == "bound":
                    raise BoundExceeded(f"unrolling bound reached at line {line}")
                raise Stuck(f"trap {s.reason} at line {line}")
            else:
                raise TypeError(s)
            pos += 1

    def address(self, lv, frame: dict, f: FunctionDecl) -> int:
        if isinstance(lv, FieldRef):
            return frame.get(lv.base, 0) + ir.field_offset(self.program, f, lv.base, lv.name, self.env(f))
        if isinstance(lv, Index):
            return frame.get(lv.base, 0) + self.eval(lv.index, frame, f)
        raise TypeError(lv)

    def store(self, lv, value: int, frame: dict, f: FunctionDecl) -> None:
        if isinstance(lv, Var):
            frame[lv.name] = value
        else:
            self.heap.write(self.address(lv, frame, f), value)

    def eval(self, e, frame: dict, f: FunctionDecl) -> int:
        if isinstance(e, Const):
            return e.value
        if isinstance(e, Var):
            return frame.get(e.name, 0)
        if isinstance(e, (FieldRef, Index)):
            return self.heap.read(self.address(e, frame, f))
        if isinstance(e, Op):
            if e.op == "&&":
                return int(_bool(self.eval(e.args[0], frame, f)) and _bool(self.eval(e.args[1], frame, f)))
            if e.op == "||":
                return int(_bool(self.eval(e.args[0], frame, f)) or _bool(self.eval(e.args[1], frame, f)))
            return apply_op(e.op, [self.eval(a, frame, f) for a in e.args])
        if isinstance(e, CallExpr):
            args = [self.eval(a, frame, f) for a in e.args]
            if e.cls is not None:
                return self.invoke(self.static_target(e.cls, e.func, len(args)), None, args)
            recv = self.eval(e.receiver, frame, f)
            return self.invoke(self.dispatch(recv, e.func, len(args)), recv, args)
        if isinstance(e, Hole):
            raise Stuck("cannot execute a hole")
        raise TypeError(e)


def run_test(p: Program, t: UnitTest, b: ExecBounds | None = None) -> Outcome:
    try:
        value, _, _ = Interpreter(p, b).run(t.entry, t.inputs)
    except Stuck as exc:
        return Outcome("stuck", reason=str(exc))
    except (BoundExceeded, RecursionError) as exc:
        return Outcome("bound", reason=str(exc) or "recursion")
    return PASS if value == t.expected_int else Outcome("fail", value)


def trace_test(p: Program, t: UnitTest, b: ExecBounds | None = None) -> tuple[Outcome, Trace]:
    """Like run_test, also returning the executed lines and invocation order."""
    interp = Interpreter(p, b)
    try:
        value, trace, _ = interp.run(t.entry, t.inputs)
    except Stuck as exc:
        return Outcome("stuck", reason=str(exc)), interp.trace
    except (BoundExceeded, RecursionError) as exc:
        return Outcome("bound", reason=str(exc)), interp.trace
    return (PASS if value == t.expected_int else Outcome("fail", value)), trace


def is_faulty(p: Program, tests, b: ExecBounds | None = None) -> bool:
    return any(not run_test(p, t, b).passed for t in tests)


def verify(p: Program, tests, b: ExecBounds | None = None) -> bool:
    return not is_faulty(p, tests, b)


# ---------------------------------------------------------------------------
# Test files


def parse_entry(p: Program, entry: str) -> Sig:
    cls, _, name = entry.partition(".")
    name, _, arity = name.partition("/")
    f = p.find(cls, name, int(arity) if arity else None)
    return f.sig


def _scalar(v) -> int:
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, int):
        return v
    raise ValueError(f"test values must be int or bool, got {v!r}")


def load_tests(p: Program, source) -> list[UnitTest]:
    if isinstance(source, (str, Path)) and Path(source).exists():
        data = json.loads(Path(source).read_text())
    elif isinstance(source, str):
        data = json.loads(source)
    else:
        data = source
    tests = []
    for obj in data:
        sig = parse_entry(p, obj["entry"])
        f = p.func(sig)
        if not f.is_static:
            raise ValueError(f"test {obj['name']}: entry {sig} is not static")
        inputs = tuple(_scalar(v) for v in obj["inputs"])
        if len(inputs) != sig.arity:
            raise ValueError(f"test {obj['name']}: expected {sig.arity} inputs")
        tests.append(UnitTest(obj["name"], sig, inputs, _scalar(obj["expected"])))
    return tests


# ---------------------------------------------------------------------------
# Unrolling


def _unroll_body(f: FunctionDecl, k: int, fresh) -> tuple[list, dict]:
    body = f.body
    n = len(body)
    lines = [l for l, _ in body]
    pos_of = {l: i for i, l in enumerate(lines)}

    def falls(stmt) -> bool:
        return not isinstance(stmt, (Return, Trap))

    def succs(node):
        c, i = node
        s = body[i][1]
        out = []
        if isinstance(s, Jump):
            t = pos_of[s.target]
            if s.target > lines[i]:
                out.append((c, t))
            elif c + 1 <= k:
                out.append((c + 1, t))
            else:
                out.append("bound")
        if falls(s):
            out.append((c, i + 1) if i + 1 < n else ("fall", c))
        return out

    seen = {(0, i) for i in range(n)}
    work = [(0, i) for i in range(n)]
    while work:
        node = work.pop()
        for nxt in succs(node):
            if nxt not in seen:
                seen.add(nxt)
                if isinstance(nxt, tuple) and nxt[0] != "fall":
                    work.append(nxt)

    ids: dict = {(0, i): lines[i] for i in range(n)}
    order: list = []
    copies = sorted({c for c, _ in (x for x in seen if isinstance(x, tuple) and x[0] != "fall")})
    for c in copies:
        for i in range(n):
            if (c, i) in seen:
                if (c, i) not in ids:
                    ids[(c, i)] = next(fresh)
                order.append((c, i))
        if ("fall", c) in seen:
            ids[("fall", c)] = next(fresh)
            order.append(("fall", c))
    if "bound" in seen:
        ids["bound"] = next(fresh)
        order.append("bound")

    new_body, origin = [], {}
    for node in order:
        nid = ids[node]
        if node == "bound":
            new_body.append((nid, Trap("bound")))
            origin[nid] = None
            continue
        if node[0] == "fall":
            new_body.append((nid, Trap("fall")))
            origin[nid] = None
            continue
        c, i = node
        s = body[i][1]
        if isinstance(s, Jump):
            tgt = [x for x in succs(node)][0]
            s = Jump(s.cond, ids[tgt])
        new_body.append((nid, s))
        origin[nid] = lines[i]
    return new_body, origin


def _self_calls(f: FunctionDecl) -> bool:
    return any(isinstance(s, SCall) and s.cls == f.owner and s.func == f.name
               and len(s.args) == len(f.params) for _, s in f.body)


def unroll_and_inline(p: Program, entry: Sig | None = None, b: ExecBounds | None = None) -> Program:
    """Loop-free version of ``p``.

    Back edges are unrolled into fresh copies of the body (``unroll_k`` of
    them); a further back edge jumps to a ``trap bound`` line.  Directly
    self-recursive static functions are cloned ``unroll_k - 1`` times with the
    innermost self call replaced by a trap.  Copy 0 keeps the source line
    numbers; ``Program.orig_line`` maps every line back to its source line.
    """
    b = b or ExecBounds()
    k = b.unroll_k
    start = max(p.all_lines(), default=-1) + 1
    fresh = itertools.count(start)
    origin: dict[int, int | None] = dict(p.origin)
    classes = []
    for c in p.classes:
        funcs = []
        for f in c.functions:
            if not f.body or p.model(f) is not None:
                funcs.append(f)
                continue
            versions = [f]
            if _self_calls(f) and f.is_static:
                versions = [dataclasses.replace(f, name=f.name if j == 0 else f"{f.name}__r{j}")
                            for j in range(k)]
            for j, g in enumerate(versions):
                body = []
                for l, s in g.body:
                    if j > 0:
                        nl = next(fresh)
                        origin[nl] = origin.get(l, l)
                    else:
                        nl = l
                    body.append((nl, s))
                remap = {ol: nl for (ol, _), (nl, _) in zip(g.body, body)}
                fixed = []
                for nl, s in body:
                    if isinstance(s, Jump):
                        s = Jump(s.cond, remap[s.target])
                    if isinstance(s, SCall) and s.cls == f.owner and s.func == f.name \
                            and len(s.args) == len(f.params) and len(versions) > 1:
                        s = Trap("bound") if j == k - 1 else dataclasses.replace(s, func=f"{f.name}__r{j + 1}")
                    fixed.append((nl, s))
                g = dataclasses.replace(g, body=tuple(fixed))
                new_body, org = _unroll_body(g, k, fresh)
                for nl, ol in org.items():
                    origin[nl] = None if ol is None else origin.get(ol, ol)
                funcs.append(dataclasses.replace(g, body=tuple(new_body)))
        classes.append(dataclasses.replace(c, functions=tuple(funcs)))
    origin = {l: o for l, o in origin.items() if o != l}
    return Program(tuple(classes), p.strings, p.models, tuple(sorted(origin.items(), key=lambda kv: kv[0])))
