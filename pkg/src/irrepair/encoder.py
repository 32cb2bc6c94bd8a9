"""Symbolic encoding of unrolled programs.

Every test is encoded over its own *instance tree*: the test entry plus every
function from which the target can be reached is inlined (one instance per
call site and dispatch candidate); other callees and @network models are
substituted by summaries.  Each instance owns a block of negative stack
slots, heap objects live at concrete allocation bases, and memory after each
node ``(instance, line)`` is an uninterpreted function ``M``.

Frame axioms are asserted pointwise over the instance footprint (its own
stack slots plus every heap cell allocated by the test), which is exact
because values only flow through those addresses.

Trace selectors satisfy ``π[n] <-> OR(active in-edges)``.  A jump selects its
successor through a fresh boolean ``J[n]``, which is tied to the condition
only under the line's correctness guard ``B[L]``; relaxing the guard makes the
branch (or the written value) free.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import z3

from . import ir
from .ir import (Assign, CallExpr, Const, FieldRef, FunctionDecl, Hole, Index, Jump, New,
                 Op, Program, Return, SCall, Sig, Trap, Var, VCall)
from .testkit import HEAP_STRIDE, ExecBounds, UnitTest

log = logging.getLogger(__name__)

INT = z3.IntSort()
BOOL = z3.BoolSort()
_MOD = 1 << 64
_MAX = (1 << 63) - 1
_MIN = -(1 << 63)
MAX_PATHS = 20_000


class EncodingError(Exception):
    pass


def truth(t) -> z3.BoolRef:
    """Boolean view of an int-valued term (``t != 0``)."""
    if z3.is_app_of(t, z3.Z3_OP_ITE):
        c, a, b = t.children()
        if z3.is_int_value(a) and z3.is_int_value(b) and a.as_long() == 1 and b.as_long() == 0:
            return c
    return t != 0


def as_int(c: z3.BoolRef):
    return z3.If(c, z3.IntVal(1), z3.IntVal(0))


def _wrap_add(t):
    return z3.If(t > _MAX, t - _MOD, z3.If(t < _MIN, t + _MOD, t))


def _wrap_any(t):
    return ((t - _MIN) % _MOD) + _MIN


def _bv(t):
    return z3.Int2BV(t, 64)


def _from_bv(b):
    return z3.BV2Int(b, is_signed=True)


def apply_op(op: str, args: list, oblige) -> z3.ArithRef:
    """Solver counterpart of ``testkit.apply_op`` (``&&``/``||`` handled by callers)."""
    if len(args) == 1:
        (a,) = args
        return as_int(a == 0) if op == "!" else _wrap_add(-a)
    a, b = args
    if op == "+":
        return _wrap_add(a + b)
    if op == "-":
        return _wrap_add(a - b)
    if op == "*":
        return _wrap_any(a * b)
    if op in ("/", "%"):
        oblige(b != 0)
        abs_a = z3.If(a < 0, -a, a)
        abs_b = z3.If(b < 0, -b, b)
        q0 = abs_a / abs_b
        q = z3.If((a < 0) == (b < 0), q0, -q0)
        return _wrap_add(q) if op == "/" else _wrap_add(a - b * q)
    cmp = {"==": lambda: a == b, "!=": lambda: a != b, "<": lambda: a < b,
           "<=": lambda: a <= b, ">": lambda: a > b, ">=": lambda: a >= b}
    if op in cmp:
        return as_int(cmp[op]())
    if op == "&&":
        return as_int(z3.And(a != 0, b != 0))
    if op == "||":
        return as_int(z3.Or(a != 0, b != 0))
    if op == "&":
        return _from_bv(_bv(a) & _bv(b))
    if op == "|":
        return _from_bv(_bv(a) | _bv(b))
    if op == "^":
        return _from_bv(_bv(a) ^ _bv(b))
    if op in ("<<", ">>", ">>>"):
        sh = _bv(b) & 63
        if op == "<<":
            return _from_bv(_bv(a) << sh)
        if op == ">>":
            return _from_bv(_bv(a) >> sh)
        return _from_bv(z3.LShR(_bv(a), sh))
    raise EncodingError(f"unknown operator {op}")


# ---------------------------------------------------------------------------
# Expression evaluation shared by summaries and instance encodings


class _Evaluator:
    """Evaluates IR expressions to solver terms.

    ``var(name)`` returns a variable's value, ``heap`` implements the heap
    protocol.  Obligations (validity of dereferences, non-zero divisors,
    dispatch success) are collected in ``obligations`` under the current
    short-circuit guard.
    """

    def __init__(self, program: Program, func: FunctionDecl, var, heap, env_types, summaries):
        self.p = program
        self.f = func
        self.var = var
        self.heap = heap
        self.env = env_types
        self.summaries = summaries
        self.obligations: list = []
        self.guards: list = []

    def oblige(self, c):
        c = z3.simplify(c) if z3.is_bool(c) else c
        if z3.is_true(c):
            return
        self.obligations.append(z3.Implies(z3.And(*self.guards), c) if self.guards else c)

    def addr(self, lv) -> z3.ArithRef:
        if isinstance(lv, FieldRef):
            off = ir.field_offset(self.p, self.f, lv.base, lv.name, self.env)
            return self.heap.add(self.var(lv.base), off)
        if isinstance(lv, Index):
            return self.var(lv.base) + self.eval(lv.index)
        raise EncodingError(f"not a heap lvalue: {lv!r}")

    def eval(self, e) -> z3.ArithRef:
        if isinstance(e, Const):
            return z3.IntVal(e.value)
        if isinstance(e, Var):
            return self.var(e.name)
        if isinstance(e, (FieldRef, Index)):
            return self.heap.read(self.addr(e))
        if isinstance(e, Op):
            if e.op in ("&&", "||"):
                a = self.eval(e.args[0])
                ca = truth(a)
                self.guards.append(ca if e.op == "&&" else z3.Not(ca))
                try:
                    b = self.eval(e.args[1])
                finally:
                    self.guards.pop()
                if e.op == "&&":
                    return as_int(z3.And(ca, truth(b)))
                return as_int(z3.Or(ca, truth(b)))
            return apply_op(e.op, [self.eval(a) for a in e.args], self.oblige)
        if isinstance(e, CallExpr):
            return self.call_expr(e)
        if isinstance(e, Hole):
            raise EncodingError("cannot encode a hole")
        raise EncodingError(f"not an expression: {e!r}")

    def call_expr(self, e: CallExpr):
        args = [self.eval(a) for a in e.args]
        if e.cls is not None:
            targets = [self.p.find(e.cls, e.func, len(args))]
            recv = None
        else:
            recv = self.eval(e.receiver)
            targets = ir.dispatch_targets(self.p, e.func, len(args))
        for g in targets:
            if self.p.model(g) is None or not self.p.model(g).pure:
                raise EncodingError(f"calls inside expressions must target pure models ({g.sig})")
        if recv is None:
            return self.p.model(targets[0]).symbolic(self.heap, None, args)
        self.oblige(self.heap.is_obj(recv))
        dt = self.heap.dtype(recv)
        value = None
        matches = []
        for g in reversed(targets):
            m = dt == self.p.class_id(g.owner)
            matches.append(m)
            self.guards.append(m)
            try:
                v = self.p.model(g).symbolic(self.heap, recv, args)
            finally:
                self.guards.pop()
            value = v if value is None else z3.If(m, v, value)
        self.oblige(z3.Or(*matches) if matches else z3.BoolVal(False))
        return value if value is not None else z3.IntVal(0)


class _GuardedHeap:
    """Base for heap views: obligations and conditional evaluation."""

    ev: _Evaluator | None = None

    add = staticmethod(lambda a, k: a + k)
    eq = staticmethod(lambda a, b: a == b)
    and_ = staticmethod(lambda a, b: z3.And(a, b))
    ne_null = staticmethod(lambda a: a != 0)
    to_int = staticmethod(as_int)

    def cond(self, c, then, other):
        c = z3.simplify(c)
        if z3.is_true(c):
            return then()
        if z3.is_false(c):
            return other()
        self.ev.guards.append(c)
        try:
            t = then()
        finally:
            self.ev.guards.pop()
        self.ev.guards.append(z3.Not(c))
        try:
            o = other()
        finally:
            self.ev.guards.pop()
        return z3.If(c, t, o)


# ---------------------------------------------------------------------------
# Summaries


@dataclass
class SummaryPath:
    pc: z3.BoolRef
    ret: z3.ArithRef
    writes: tuple  # ((addr, value), ...)
    allocs: tuple  # ((cls, size), ...)


@dataclass
class Summary:
    """Path-wise relation over placeholders.

    Placeholders: ``args`` (receiver first for virtual functions), memory
    ``m_in``, allocation base ``alloc``, and the predicates ``valid``/``is_obj``
    and dynamic-type map ``dtype`` of the calling context.
    """
    sig: Sig
    args: tuple
    m_in: z3.FuncDeclRef
    alloc: z3.ArithRef
    valid: z3.FuncDeclRef
    is_obj: z3.FuncDeclRef
    dtype: z3.FuncDeclRef
    paths: list
    source: str = "computed"  # computed | builtin-model

    @property
    def max_allocs(self) -> int:
        return max((len(pth.allocs) for pth in self.paths), default=0)

    def alloc_sizes(self) -> list[int]:
        sizes = [0] * self.max_allocs
        for pth in self.paths:
            for j, (_, n) in enumerate(pth.allocs):
                sizes[j] = max(sizes[j], n)
        return sizes

    @property
    def pure(self) -> bool:
        return all(not pth.writes for pth in self.paths)

    def instantiate(self, args, mem, alloc_base, valid, is_obj, dtype):
        """Substitute placeholders; ``mem``/``valid``/``is_obj``/``dtype`` are
        callables over a term, as used in the calling context."""
        if len(args) != len(self.args):
            raise EncodingError(f"{self.sig}: expected {len(self.args)} arguments")
        x = z3.Var(0, INT)
        consts = list(zip(self.args, args)) + [(self.alloc, alloc_base)]
        funs = [(self.m_in, mem(x)), (self.valid, valid(x)), (self.is_obj, is_obj(x)),
                (self.dtype, dtype(x))]

        def sub(t):
            t = z3.substitute(t, *consts) if consts else t
            return z3.simplify(z3.substitute_funs(t, *funs))
        out = []
        for pth in self.paths:
            pc = sub(pth.pc)
            if z3.is_false(pc):
                continue
            out.append(SummaryPath(pc, sub(pth.ret),
                                   tuple((sub(a), sub(v)) for a, v in pth.writes), pth.allocs))
        return out


class _PathState:
    __slots__ = ("frame", "writes", "allocs", "pc")

    def __init__(self, frame, writes=(), allocs=(), pc=()):
        self.frame = frame
        self.writes = list(writes)
        self.allocs = list(allocs)
        self.pc = list(pc)

    def fork(self) -> "_PathState":
        return _PathState(dict(self.frame), self.writes, self.allocs, self.pc)


class _SymHeap(_GuardedHeap):
    """Heap protocol over one symbolic path (write list on top of ``m_in``)."""

    def __init__(self, ctx: "_SummaryBuilder", state: _PathState):
        self.ctx = ctx
        self.state = state

    def _oblige(self, c):
        self.ev.oblige(c)

    def read(self, a):
        self._oblige(self.ctx.valid(a))
        v = self.ctx.m_in(a)
        for wa, wv in self.state.writes:
            same = z3.simplify(wa == a)
            if z3.is_true(same):
                v = wv
            elif not z3.is_false(same):
                v = z3.If(same, wv, v)
        return v

    def write(self, a, value):
        self._oblige(self.ctx.valid(a))
        self.state.writes.append((a, value))

    def alloc(self, cls, n):
        j = len(self.state.allocs)
        base = z3.simplify(self.ctx.alloc + j * HEAP_STRIDE)
        self.state.allocs.append((cls, n))
        for i in range(n):
            self.state.writes.append((z3.simplify(base + i), z3.IntVal(0)))
        return base

    def dtype(self, a):
        out = self.ctx.dtype(a)
        for j, (cls, _) in enumerate(self.state.allocs):
            base = self.ctx.alloc + j * HEAP_STRIDE
            out = z3.If(a == base, z3.IntVal(self.ctx.p.class_id(cls)), out)
        return z3.simplify(out)

    def is_obj(self, a):
        parts = [self.ctx.is_obj(a)]
        for j in range(len(self.state.allocs)):
            parts.append(a == self.ctx.alloc + j * HEAP_STRIDE)
        return z3.Or(*parts)


class _SummaryBuilder:
    def __init__(self, p: Program, b: ExecBounds, sig: Sig, cache: "SummaryCache"):
        self.p = p
        self.b = b
        self.cache = cache
        tag = f"{sig.cls}.{sig.name}.{sig.arity}"
        self.m_in = z3.Function(f"Min!{tag}", INT, INT)
        self.valid_f = z3.Function(f"Valid!{tag}", INT, BOOL)
        self.is_obj_f = z3.Function(f"IsObj!{tag}", INT, BOOL)
        self.dtype_f = z3.Function(f"DType!{tag}", INT, INT)
        self.alloc = z3.Int(f"alloc!{tag}")
        self.tag = tag
        self.fresh = itertools.count()

    def valid(self, a):
        return self.valid_f(a)

    def is_obj(self, a):
        return self.is_obj_f(a)

    def dtype(self, a):
        return self.dtype_f(a)

    # -- execution -------------------------------------------------------
    def run(self, f: FunctionDecl) -> Summary:
        args = tuple(z3.Int(f"arg{i}!{self.tag}") for i in range(len(f.formals)))
        model = self.p.model(f)
        state = _PathState({})
        if model is not None:
            heap = _SymHeap(self, state)
            ev = _Evaluator(self.p, f, lambda n: z3.IntVal(0), heap, {}, self.cache)
            heap.ev = ev
            recv = None if f.is_static else args[0]
            rest = list(args) if f.is_static else list(args[1:])
            ret = model.symbolic(heap, recv, rest)
            state.pc.extend(ev.obligations)
            results = [(state, ret)]
            source = "builtin-model"
        else:
            state.frame = dict(zip(f.formals, args))
            results = self.exec_body(f, state, (f.sig,))
            source = "computed"
        paths = []
        for st, ret in results:
            pc = z3.simplify(z3.And(*st.pc)) if st.pc else z3.BoolVal(True)
            if z3.is_false(pc):
                continue
            paths.append(SummaryPath(pc, z3.simplify(ret), tuple(st.writes), tuple(st.allocs)))
        return Summary(f.sig, args, self.m_in, self.alloc, self.valid_f, self.is_obj_f,
                       self.dtype_f, paths, source)

    def exec_body(self, f: FunctionDecl, state: _PathState, stack: tuple) -> list:
        env = self.cache.types(f)
        pos_of = {l: i for i, (l, _) in enumerate(f.body)}
        work = [(0, state)]
        done = []
        while work:
            if len(work) + len(done) > MAX_PATHS:
                raise EncodingError(f"path explosion while summarizing {f.sig}")
            pos, st = work.pop()
            while True:
                if pos >= len(f.body):
                    break  # fell off: stuck path
                line, s = f.body[pos]
                heap = _SymHeap(self, st)
                ev = _Evaluator(self.p, f, lambda n, st=st: st.frame.get(n, z3.IntVal(0)),
                                heap, env, self.cache)
                heap.ev = ev
                if isinstance(s, Assign):
                    v = ev.eval(s.rhs)
                    if isinstance(s.lhs, Var):
                        st.frame[s.lhs.name] = z3.simplify(v)
                    else:
                        heap.write(z3.simplify(ev.addr(s.lhs)), z3.simplify(v))
                    st.pc.extend(ev.obligations)
                    pos += 1
                elif isinstance(s, Jump):
                    c = z3.simplify(truth(ev.eval(s.cond)))
                    st.pc.extend(ev.obligations)
                    tpos = pos_of[s.target]
                    if tpos <= pos:
                        raise EncodingError(f"summary of {f.sig} needs an unrolled program")
                    if z3.is_true(c):
                        pos = tpos
                    elif z3.is_false(c):
                        pos += 1
                    else:
                        other = st.fork()
                        other.pc.append(z3.Not(c))
                        work.append((pos + 1, other))
                        st.pc.append(c)
                        pos = tpos
                elif isinstance(s, Return):
                    v = ev.eval(s.value)
                    st.pc.extend(ev.obligations)
                    done.append((st, z3.simplify(v)))
                    break
                elif isinstance(s, New):
                    size = s.size if s.size is not None else len(self.p.cls(s.cls).fields)
                    st.frame[s.var] = heap.alloc(s.cls, size)
                    pos += 1
                elif isinstance(s, (SCall, VCall)):
                    conts = self.exec_call(f, s, st, ev, heap, stack)
                    if not conts:
                        break
                    st = conts[0]
                    for other in conts[1:]:
                        work.append((pos + 1, other))
                    pos += 1
                elif isinstance(s, Trap):
                    break
                else:
                    raise EncodingError(f"unsupported statement {s!r}")
                if st.pc and z3.is_false(z3.simplify(st.pc[-1])):
                    break
        return done

    def exec_call(self, f, s, st: _PathState, ev: _Evaluator, heap: _SymHeap, stack) -> list:
        args = [ev.eval(a) for a in s.args]
        st.pc.extend(ev.obligations)
        ev.obligations.clear()
        if isinstance(s, SCall):
            g = self.p.find(s.cls, s.func, len(args))
            cands = [(g, None, None)]
        else:
            recv = st.frame.get(s.receiver, z3.IntVal(0))
            st.pc.append(z3.simplify(heap.is_obj(recv)))
            dt = heap.dtype(recv)
            cands = [(g, recv, z3.simplify(dt == self.p.class_id(g.owner)))
                     for g in ir.dispatch_targets(self.p, s.func, len(args))]
        out = []
        for g, recv, match in cands:
            if match is not None and z3.is_false(match):
                continue
            branch = st.fork()
            if match is not None:
                branch.pc.append(match)
            model = self.p.model(g)
            if model is not None:
                h2 = _SymHeap(self, branch)
                ev2 = _Evaluator(self.p, g, lambda n: z3.IntVal(0), h2, {}, self.cache)
                h2.ev = ev2
                v = model.symbolic(h2, recv, args)
                branch.pc.extend(ev2.obligations)
                branch.frame[s.var] = z3.simplify(v)
                out.append(branch)
                continue
            if stack.count(g.sig) >= self.b.unroll_k:
                continue  # recursion bound
            caller_frame = branch.frame
            branch.frame = dict(zip(g.formals, ([] if g.is_static else [recv]) + args))
            for st2, ret in self.exec_body(g, branch, stack + (g.sig,)):
                st2.frame = dict(caller_frame)
                st2.frame[s.var] = ret
                out.append(st2)
        return out


class SummaryCache:
    """Summaries memoized per signature for one (unrolled) program."""

    def __init__(self, p: Program, b: ExecBounds | None = None):
        self.p = p
        self.b = b or ExecBounds()
        self.memo: dict[Sig, Summary] = {}
        self._types: dict[Sig, dict] = {}

    def types(self, f: FunctionDecl) -> dict:
        if f.sig not in self._types:
            self._types[f.sig] = ir.infer_types(self.p, f)
        return self._types[f.sig]

    def get(self, sig: Sig) -> Summary:
        if sig not in self.memo:
            f = self.p.func(sig)
            self.memo[sig] = _SummaryBuilder(self.p, self.b, sig, self).run(f)
        return self.memo[sig]


def compute_summary(p: Program, f: Sig, b: ExecBounds | None = None,
                    cache: SummaryCache | None = None) -> Summary:
    """Bounded symbolic summary of ``f`` (``p`` should be unrolled)."""
    cache = cache or SummaryCache(p, b)
    return cache.get(f)


# ---------------------------------------------------------------------------
# Instance-tree encoding


@dataclass
class Instance:
    id: int
    func: FunctionDecl
    chain: tuple
    slots: dict
    parent: "Instance | None" = None
    call_node: tuple | None = None

    @property
    def ret_slot(self) -> int:
        return self.slots["$ret"]


@dataclass
class CallSite:
    kind: str  # inline | summary | trap
    func: FunctionDecl
    child: Instance | None = None
    alloc_bases: tuple = ()


@dataclass
class NodeInfo:
    key: tuple
    instance: Instance
    line: int
    stmt: object
    pi: z3.BoolRef
    pre: object = None
    post: object = None
    jump: z3.BoolRef | None = None
    done: z3.BoolRef | None = None
    base: int | None = None
    calls: list = field(default_factory=list)
    owned: tuple = ()  # (base, size) of objects allocated under this call


@dataclass
class EncodingContext:
    """Shared state of one localization/check query.

    ``B`` maps original line -> guard (absent lines are fixed true); per-test
    selectors ``pi``, memories ``M`` and dynamic-type maps ``DType`` are
    filled as tests are encoded.  ``target`` is the function under repair.
    """
    program: Program  # unrolled
    bounds: ExecBounds
    target: Sig | None = None
    B: dict = field(default_factory=dict)
    pi: dict = field(default_factory=dict)
    M: dict = field(default_factory=dict)
    DType: dict = field(default_factory=dict)
    S: SummaryCache | None = None
    inline_all: bool = False
    source: Program | None = None  # program before unrolling

    def __post_init__(self):
        if self.S is None:
            self.S = SummaryCache(self.program, self.bounds)
        self.tests: dict[str, "TestEncoding"] = {}
        self._inline: set[Sig] | None = None

    def guard(self, line: int):
        return self.B.get(self.program.orig_line(line), True)

    def target_funcs(self) -> set[Sig]:
        if self.target is None:
            return set()
        src = self.source or self.program
        lines = set(src.func(self.target).lines)
        return {f.sig for f in self.program.functions()
                if any(self.program.orig_line(l) in lines for l in f.lines)}

    def inline_set(self) -> set[Sig]:
        if self._inline is None:
            tf = self.target_funcs()
            out = set()
            for f in self.program.functions():
                if not f.body or self.program.model(f) is not None:
                    continue
                if self.inline_all or tf & set(ir.reachable_funcs(self.program, f.sig)):
                    out.add(f.sig)
            self._inline = out
        return self._inline


class TestEncoding:
    """Region and example-consistency constraints for one test."""

    def __init__(self, ctx: EncodingContext, test: UnitTest, index: int):
        self.ctx = ctx
        self.test = test
        self.tag = f"t{index}"
        self.p = ctx.program
        self.instances: list[Instance] = []
        self.nodes: dict[tuple, NodeInfo] = {}
        self.objects: list[tuple[int, int]] = []  # (base, size)
        self.dtype = z3.Function(f"DType_{self.tag}", INT, INT)
        self._slot = itertools.count(1)
        self._base = itertools.count(1)
        self.region: list = []
        self.consistency: list = []
        ctx.DType[test.name] = self.dtype
        root = self._new_instance(self.p.func(test.entry), None, None)
        self.root = root
        self._build(root)
        self.heap_cells = [b + i for b, n in self.objects for i in range(n)]
        for inst in self.instances:
            self._declare(inst)
        for inst in self.instances:
            self._encode_instance(inst)

    # -- structure -------------------------------------------------------
    def _new_instance(self, f: FunctionDecl, parent, call_node) -> Instance:
        slots = {}
        for v in list(f.locals()) + ["$ret"]:
            slots[v] = -next(self._slot)
        chain = (parent.chain if parent else ()) + (f.sig,)
        inst = Instance(len(self.instances), f, chain, slots, parent, call_node)
        self.instances.append(inst)
        return inst

    def _alloc(self, size: int) -> int:
        base = HEAP_STRIDE * next(self._base)
        self.objects.append((base, size))
        return base

    def _build(self, inst: Instance):
        inline = self.ctx.inline_set()
        for line, s in inst.func.body:
            key = (inst.id, line)
            pi = z3.Bool(f"pi_{self.tag}_{inst.id}_{line}")
            node = NodeInfo(key, inst, line, s, pi)
            self.nodes[key] = node
            self.ctx.pi[(self.test.name,) + key] = pi
            if isinstance(s, New):
                size = s.size if s.size is not None else len(self.p.cls(s.cls).fields)
                node.base = self._alloc(size)
            elif isinstance(s, (SCall, VCall)):
                before = len(self.objects)
                for g in ir.call_targets(self.p, s):
                    if g.sig in inline:
                        if inst.chain.count(g.sig) >= self.ctx.bounds.unroll_k:
                            node.calls.append(CallSite("trap", g))
                            continue
                        child = self._new_instance(g, inst, key)
                        node.calls.append(CallSite("inline", g, child))
                        self._build(child)
                    else:
                        summ = self.ctx.S.get(g.sig)
                        bases = []
                        for n in summ.alloc_sizes():
                            bases.append(self._alloc(n))
                        # allocation slots must be STRIDE apart and consecutive
                        if bases and any(b2 - b1 != HEAP_STRIDE for b1, b2 in zip(bases, bases[1:])):
                            raise EncodingError("non-contiguous allocation block")
                        node.calls.append(CallSite("summary", g, alloc_bases=tuple(bases)))
                node.owned = tuple(self.objects[before:])

    # -- helpers ---------------------------------------------------------
    def valid(self, a):
        return z3.Or(*[z3.And(a >= b, a < b + n) for b, n in self.objects if n > 0]) \
            if self.objects else z3.BoolVal(False)

    def is_obj(self, a):
        return z3.Or(*[a == b for b, _ in self.objects]) if self.objects else z3.BoolVal(False)

    def footprint(self, inst: Instance) -> list[int]:
        return list(inst.slots.values()) + self.heap_cells

    def _mem(self, name: str):
        f = z3.Function(name, INT, INT)
        return f

    def _frame(self, inst, post, pre, skip=()):
        skip = set(skip)
        return [post(a) == pre(a) for a in self.footprint(inst) if a not in skip]

    # -- per instance ----------------------------------------------------
    def _declare(self, inst: Instance):
        """Entry memory, jump variables and post-memories of an instance."""
        body = inst.func.body
        tag = f"{self.tag}_{inst.id}"
        self.nodes[(inst.id, body[0][0])].pre = self._mem(f"E_{tag}")
        for line, s in body:
            node = self.nodes[(inst.id, line)]
            if isinstance(s, Jump):
                node.jump = z3.Bool(f"J_{tag}_{line}")
            if isinstance(s, (Jump, Trap)):
                node.post = None  # alias of pre, set during encoding
            else:
                node.post = self._mem(f"M_{tag}_{line}")

    def _encode_instance(self, inst: Instance):
        f = inst.func
        body = f.body
        tag = f"{self.tag}_{inst.id}"
        first = self.nodes[(inst.id, body[0][0])]
        entry = first.pre
        if inst.parent is None:
            self.region.append(first.pi)
            params = {inst.slots[x] for x in f.params}
            for a in inst.slots.values():
                if a not in params:
                    self.region.append(entry(a) == 0)
        # in-edges
        preds: dict[int, list] = {l: [] for l, _ in body}
        for pos, (line, s) in enumerate(body):
            node = self.nodes[(inst.id, line)]
            nxt = body[pos + 1][0] if pos + 1 < len(body) else None
            if isinstance(s, Jump):
                if s.target == nxt:
                    preds[nxt].append((line, node.pi))
                else:
                    preds[s.target].append((line, z3.And(node.pi, node.jump)))
                    if nxt is not None:
                        preds[nxt].append((line, z3.And(node.pi, z3.Not(node.jump))))
            elif isinstance(s, (SCall, VCall)):
                if nxt is not None:
                    preds[nxt].append((line, None))  # completed below
            elif not isinstance(s, (Return, Trap)) and nxt is not None:
                preds[nxt].append((line, node.pi))
        # pre-memories (in body order; preds always precede in loop-free code)
        for pos, (line, s) in enumerate(body):
            node = self.nodes[(inst.id, line)]
            if pos > 0:
                ins = preds[line]
                if not ins:
                    node.pre = self._mem(f"Q_{tag}_{line}")
                elif len(ins) == 1:
                    node.pre = self._post(ins[0][0], inst)
                else:
                    node.pre = self._mem(f"Q_{tag}_{line}")
            if node.post is None:
                node.post = node.pre
            self.ctx.M[(self.test.name, inst.id, line)] = node.post
            self._encode_stmt(node)
        # control flow and joins
        for pos, (line, s) in enumerate(body):
            node = self.nodes[(inst.id, line)]
            edges = []
            for src, e in preds[line]:
                if e is None:
                    sn = self.nodes[(inst.id, src)]
                    g = self.ctx.guard(src)
                    e = z3.And(sn.pi, z3.Or(z3.Not(g), sn.done)) if g is not True else z3.And(sn.pi, sn.done)
                edges.append((src, e))
            if pos == 0:
                continue
            self.region.append(node.pi == (z3.Or(*[e for _, e in edges]) if edges else z3.BoolVal(False)))
            if len(edges) > 1:
                for src, e in edges:
                    srcm = self._post(src, inst)
                    self.region.append(z3.Implies(e, z3.And(*[node.pre(a) == srcm(a)
                                                              for a in self.footprint(inst)])))

    def _post(self, line, inst):
        return self.nodes[(inst.id, line)].post

    def _evaluator(self, node: NodeInfo) -> _Evaluator:
        inst = node.instance
        pre = node.pre
        test = self

        class View(_GuardedHeap):
            def read(self, a):
                self.ev.oblige(test.valid(a))
                return pre(a)

            def write(self, a, v):
                raise EncodingError("models inside expressions must be pure")

            def alloc(self, cls, n):
                raise EncodingError("models inside expressions must not allocate")

            def dtype(self, a):
                return test.dtype(a)

            def is_obj(self, a):
                return test.is_obj(a)

        heap = View()

        def var(name):
            if name not in inst.slots:
                raise EncodingError(f"unknown variable {name} in {inst.func.sig}")
            return pre(z3.IntVal(inst.slots[name]))
        ev = _Evaluator(self.p, inst.func, var, heap, self.ctx.S.types(inst.func), self.ctx.S)
        heap.ev = ev
        return ev

    def _encode_stmt(self, node: NodeInfo):
        s = node.stmt
        inst = node.instance
        pre, post = node.pre, node.post
        g = self.ctx.guard(node.line)
        phi_m, phi_c = [], []
        if isinstance(s, Assign):
            ev = self._evaluator(node)
            if isinstance(s.lhs, Var):
                delta = inst.slots[s.lhs.name]
                v = ev.eval(s.rhs)
                phi_m = ev.obligations + [post(delta) == v]
                phi_c = self._frame(inst, post, pre, (delta,))
            else:
                delta = z3.simplify(ev.addr(s.lhs))
                ev.oblige(self.valid(delta))
                v = ev.eval(s.rhs)
                phi_m = ev.obligations + [post(delta) == v]
                phi_c = [post(a) == pre(a) for a in inst.slots.values()]
                phi_c += [z3.Implies(delta != a, post(a) == pre(a)) for a in self.heap_cells]
        elif isinstance(s, Jump):
            ev = self._evaluator(node)
            c = truth(ev.eval(s.cond))
            phi_m = ev.obligations + [node.jump == c]
        elif isinstance(s, Return):
            ev = self._evaluator(node)
            v = ev.eval(s.value)
            phi_m = ev.obligations + [post(inst.ret_slot) == v]
            phi_c = self._frame(inst, post, pre, (inst.ret_slot,))
        elif isinstance(s, New):
            slot = inst.slots[s.var]
            cells = {node.base + i for i, _ in enumerate(range(self._size(s)))}
            phi_c = [post(slot) == node.base, self.dtype(node.base) == self.p.class_id(s.cls)]
            phi_c += [post(a) == 0 for a in sorted(cells)]
            phi_c += self._frame(inst, post, pre, cells | {slot})
            g = True
        elif isinstance(s, (SCall, VCall)):
            phi_m, phi_c = self._encode_call(node, g)
        elif isinstance(s, Trap):
            self.region.append(z3.Not(node.pi))
            return
        body = []
        if phi_m:
            m = z3.And(*phi_m)
            body.append(m if g is True else z3.Implies(g, m))
        body += phi_c
        if body:
            self.region.append(z3.Implies(node.pi, z3.And(*body)))

    def _size(self, s: New) -> int:
        return s.size if s.size is not None else len(self.p.cls(s.cls).fields)

    def _encode_call(self, node: NodeInfo, g):
        s = node.stmt
        inst = node.instance
        pre, post = node.pre, node.post
        x = inst.slots[s.var]
        ev = self._evaluator(node)
        args = [ev.eval(a) for a in s.args]
        phi_m = list(ev.obligations)
        recv = None
        if isinstance(s, VCall):
            recv = pre(z3.IntVal(inst.slots[s.receiver]))
            phi_m.append(self.is_obj(recv))
        matches, dones = [], []
        for cs in node.calls:
            if recv is None:
                match = z3.BoolVal(True)
            else:
                match = self.dtype(recv) == self.p.class_id(cs.func.owner)
            matches.append(match)
            full_args = args if cs.func.is_static else [recv] + args
            if cs.kind == "trap":
                dones.append(z3.BoolVal(False))
            elif cs.kind == "inline":
                child = cs.child
                cf = child.func
                first = self.nodes[(child.id, cf.body[0][0])]
                entry = first.pre
                taken = z3.And(node.pi, match) if g is True else z3.And(node.pi, g, match)
                self.region.append(first.pi == taken)
                formal = {child.slots[v]: a for v, a in zip(cf.formals, full_args)}
                init = []
                for a in child.slots.values():
                    init.append(entry(a) == formal.get(a, z3.IntVal(0)))
                init += [entry(h) == pre(h) for h in self.heap_cells]
                self.region.append(z3.Implies(first.pi, z3.And(*init)))
                rets = [self.nodes[(child.id, l)] for l, st in cf.body if isinstance(st, Return)]
                for r in rets:
                    out = [post(x) == r.post(child.ret_slot)]
                    out += [post(h) == r.post(h) for h in self.heap_cells]
                    self.region.append(z3.Implies(r.pi, z3.And(*out)))
                dones.append(z3.Or(*[r.pi for r in rets]) if rets else z3.BoolVal(False))
            else:
                summ = self.ctx.S.get(cs.func.sig)
                base = z3.IntVal(cs.alloc_bases[0] if cs.alloc_bases else 0)
                paths = summ.instantiate(full_args, pre, base, self.valid, self.is_obj, self.dtype)
                for j, b in enumerate(cs.alloc_bases):
                    for pth in paths:
                        if j < len(pth.allocs):
                            cid = self.p.class_id(pth.allocs[j][0])
                            self.region.append(z3.Implies(pth.pc, self.dtype(z3.IntVal(b)) == cid))
                ok = z3.Or(*[pth.pc for pth in paths]) if paths else z3.BoolVal(False)
                ret = z3.IntVal(0)
                for pth in reversed(paths):
                    ret = z3.If(pth.pc, pth.ret, ret) if len(paths) > 1 else pth.ret
                outs = []
                for h in self.heap_cells:
                    v = pre(h)
                    hv = None
                    for pth in reversed(paths):
                        pv = v
                        for wa, wv in pth.writes:
                            same = z3.simplify(wa == h)
                            if z3.is_true(same):
                                pv = wv
                            elif not z3.is_false(same):
                                pv = z3.If(same, wv, pv)
                        hv = pv if hv is None else z3.If(pth.pc, pv, hv)
                    if hv is None:
                        hv = v
                    outs.append(post(h) == hv)
                phi_m.append(z3.Implies(match, z3.And(ok, post(x) == ret, *outs)))
                dones.append(ok)
        if recv is not None:
            phi_m.append(z3.Or(*matches) if matches else z3.BoolVal(False))
        node.done = z3.Or(*[z3.And(m, d) for m, d in zip(matches, dones)]) if dones else z3.BoolVal(False)
        phi_c = [post(a) == pre(a) for a in inst.slots.values() if a != x]
        if g is not True:
            # a relaxed call may return anything and may mutate the objects
            # handed to it or allocated by it; the rest of the heap is kept
            passed = ([recv] if recv is not None else []) + args
            owned = {b + i for b, n in node.owned for i in range(n)}
            for ob, n in self.objects:
                for h in range(ob, ob + n):
                    if h in owned:
                        continue
                    touched = z3.Or(*[a == ob for a in passed]) if passed else z3.BoolVal(False)
                    phi_c.append(z3.Implies(z3.And(z3.Not(g), z3.Not(touched)), post(h) == pre(h)))
        return phi_m, phi_c

    # -- queries ---------------------------------------------------------
    def return_nodes(self, inst: Instance | None = None) -> list[NodeInfo]:
        inst = inst or self.root
        return [self.nodes[(inst.id, l)] for l, s in inst.func.body if isinstance(s, Return)]

    def formula(self) -> list:
        return self.region + self.consistency

    def selected_lines(self, values: dict) -> set[int]:
        """Original lines whose selector is true under ``values`` (key -> bool)."""
        out = set()
        for key, node in self.nodes.items():
            if values.get(node.pi):
                o = self.p.orig_line(node.line)
                if o is not None:
                    out.add(o)
        return out


def encode_region(ctx: EncodingContext, test: UnitTest, index: int | None = None) -> TestEncoding:
    """Encode the statements of ``test``'s instance tree (no input/output binding)."""
    if test.name in ctx.tests:
        return ctx.tests[test.name]
    enc = TestEncoding(ctx, test, len(ctx.tests) if index is None else index)
    ctx.tests[test.name] = enc
    return enc


def example_consistency(ctx: EncodingContext, test: UnitTest) -> list:
    """Bind entry parameters to the inputs and every root return to the expected value."""
    enc = ctx.tests.get(test.name) or encode_region(ctx, test)
    f = enc.root.func
    if len(test.inputs) != len(f.params):
        raise EncodingError(f"test {test.name}: arity mismatch for {f.sig}")
    entry = enc.nodes[(enc.root.id, f.body[0][0])].pre
    out = [entry(enc.root.slots[x]) == v for x, v in zip(f.params, test.inputs)]
    rets = enc.return_nodes()
    for r in rets:
        out.append(z3.Implies(r.pi, r.post(enc.root.ret_slot) == test.expected_int))
    out.append(z3.Or(*[r.pi for r in rets]) if rets else z3.BoolVal(False))
    enc.consistency = out
    return out


def encode_addr(ctx: EncodingContext, enc: TestEncoding, key: tuple, lv) -> z3.ArithRef:
    node = enc.nodes[key]
    if isinstance(lv, Var):
        return z3.IntVal(node.instance.slots[lv.name])
    return z3.simplify(enc._evaluator(node).addr(lv))


def encode_expr(ctx: EncodingContext, enc: TestEncoding, key: tuple, e) -> z3.ArithRef:
    return z3.simplify(enc._evaluator(enc.nodes[key]).eval(e))
