"""Object language: abstract syntax, text parser/printer and control-flow queries.

Programs are classes holding fields and functions; function bodies are lists
of line-numbered three-address statements.  Concrete syntax::

    class FirewallRule {
      fields: dl_dst: MacAddress, any_dl_dst: bool;
      func isSameAs(r: FirewallRule): bool {
        20: if (any_dl_dst != r.any_dl_dst) goto 24
        ...
      }
    }

Type annotations (``: T``) are optional; they drive field offset resolution
and the scope/type filters of the patch grammar.  Inside a non-static
function a bare name that is a field of the owning class (and not a
parameter) denotes ``this.<field>``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Union

# Interned string literals live far away from ordinary test values.
STRING_BASE = 1_000_000_000

BINARY_OPS = ("||", "&&", "|", "^", "&", "==", "!=", "<", "<=", ">", ">=",
              "<<", ">>", ">>>", "+", "-", "*", "/", "%")
UNARY_OPS = ("!", "-")
OPERATORS = frozenset(BINARY_OPS + UNARY_OPS)
BOOL_OPS = frozenset({"||", "&&", "!", "==", "!=", "<", "<=", ">", ">="})

_PRECEDENCE = [
    ("||",), ("&&",), ("|",), ("^",), ("&",), ("==", "!="),
    ("<", "<=", ">", ">="), ("<<", ">>", ">>>"), ("+", "-"), ("*", "/", "%"),
]
_LEVEL = {op: i for i, ops in enumerate(_PRECEDENCE) for op in ops}
_UNARY_LEVEL = len(_PRECEDENCE)


class IRSyntaxError(Exception):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {message}" if line else message)
        self.line = line
        self.col = col


class IRValidationError(Exception):
    pass


# ---------------------------------------------------------------------------
# Expressions


@dataclass(frozen=True)
class Const:
    value: int
    kind: str = "int"  # int | bool | null | str
    text: str | None = None

    def __str__(self) -> str:
        if self.kind == "bool":
            return "true" if self.value else "false"
        if self.kind == "null":
            return "null"
        if self.kind == "str":
            return self.text
        return str(self.value)


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class FieldRef:
    base: str
    name: str


@dataclass(frozen=True)
class Index:
    base: str
    index: "Expr"


@dataclass(frozen=True)
class Op:
    op: str
    args: tuple


@dataclass(frozen=True)
class CallExpr:
    """Pure call inside an expression, e.g. ``dl_dst.equals(r.dl_dst)``.

    Either ``receiver`` (virtual) or ``cls`` (static) is set.
    """
    receiver: "Expr | None"
    cls: str | None
    func: str
    args: tuple


@dataclass(frozen=True)
class Hole:
    kind: str
    type: str | None = None


LValue = Union[Var, FieldRef, Index]
Expr = Union[Const, Var, FieldRef, Index, Op, CallExpr, Hole]

NULL = Const(0, "null")
TRUE = Const(1, "bool")
FALSE = Const(0, "bool")


def is_immediate(e: Expr) -> bool:
    return isinstance(e, (Var, Const))


def sub_exprs(e: Expr) -> Iterable[Expr]:
    yield e
    if isinstance(e, Index):
        yield from sub_exprs(e.index)
    elif isinstance(e, Op):
        for a in e.args:
            yield from sub_exprs(a)
    elif isinstance(e, CallExpr):
        if e.receiver is not None:
            yield from sub_exprs(e.receiver)
        for a in e.args:
            yield from sub_exprs(a)


def expr_vars(e: Expr) -> set[str]:
    out = set()
    for s in sub_exprs(e):
        if isinstance(s, Var):
            out.add(s.name)
        elif isinstance(s, (FieldRef, Index)):
            out.add(s.base)
    return out


# ---------------------------------------------------------------------------
# Statements


@dataclass(frozen=True)
class Assign:
    lhs: LValue
    rhs: Expr


@dataclass(frozen=True)
class Jump:
    cond: Expr
    target: int


@dataclass(frozen=True)
class Return:
    value: Expr


@dataclass(frozen=True)
class New:
    var: str
    cls: str
    size: int | None = None


@dataclass(frozen=True)
class SCall:
    var: str
    cls: str
    func: str
    args: tuple


@dataclass(frozen=True)
class VCall:
    var: str
    receiver: str
    func: str
    args: tuple


@dataclass(frozen=True)
class Trap:
    """Internal statement produced by unrolling; reaching it falsifies a trace."""
    reason: str = "bound"


Statement = Union[Assign, Jump, Return, New, SCall, VCall, Trap]
CALL_KINDS = (SCall, VCall)


class Sig(NamedTuple):
    cls: str
    name: str
    arity: int

    def __str__(self) -> str:
        return f"{self.cls}.{self.name}/{self.arity}"


# ---------------------------------------------------------------------------
# Declarations


@dataclass(frozen=True)
class FunctionDecl:
    name: str
    owner: str
    is_static: bool
    params: tuple[str, ...]
    body: tuple[tuple[int, Statement], ...]
    param_types: tuple[str | None, ...] = ()
    ret_type: str | None = None
    model: str | None = None  # set by the abstraction pass

    @property
    def sig(self) -> Sig:
        return Sig(self.owner, self.name, len(self.params))

    @property
    def lines(self) -> list[int]:
        return [l for l, _ in self.body]

    @property
    def formals(self) -> tuple[str, ...]:
        """Parameter variables including the implicit receiver."""
        return self.params if self.is_static else ("this",) + self.params

    def locals(self) -> list[str]:
        """Formals followed by every assigned variable, in first-write order."""
        seen = dict.fromkeys(self.formals)
        for _, s in self.body:
            v = defined_var(s)
            if v is not None:
                seen.setdefault(v)
            for e in stmt_exprs(s):
                for name in expr_vars(e):
                    seen.setdefault(name)
        return list(seen)


@dataclass(frozen=True)
class ClassDecl:
    name: str
    is_network: bool = False
    fields: tuple[str, ...] = ()
    functions: tuple[FunctionDecl, ...] = ()
    field_types: tuple[str | None, ...] = ()

    def field_offset(self, name: str) -> int:
        return self.fields.index(name)

    def field_type(self, name: str) -> str | None:
        i = self.fields.index(name)
        return self.field_types[i] if i < len(self.field_types) else None


@dataclass(frozen=True)
class Program:
    classes: tuple[ClassDecl, ...]
    strings: tuple[tuple[str, int], ...] = ()
    models: tuple = ()  # (Sig, AbstractModel) pairs bound by the abstraction pass
    origin: tuple = ()  # (line, source line) pairs for unrolled copies

    def __post_init__(self):
        funcs, lines, owner_of = {}, {}, {}
        for c in self.classes:
            for f in c.functions:
                funcs[f.sig] = f
                for pos, (l, s) in enumerate(f.body):
                    lines[l] = (f, pos, s)
        object.__setattr__(self, "_funcs", funcs)
        object.__setattr__(self, "_lines", lines)
        object.__setattr__(self, "_classes", {c.name: c for c in self.classes})
        object.__setattr__(self, "_models", dict(self.models))
        object.__setattr__(self, "_origin", dict(self.origin))

    def orig_line(self, line: int) -> int | None:
        """Source line a (possibly unrolled) line stands for; None for traps."""
        return self._origin.get(line, line)

    def model(self, f: "FunctionDecl"):
        """Bound model of ``f`` or None when its body is executed."""
        return self._models.get(f.sig) if f.model is not None else None

    # lookups -------------------------------------------------------------
    def cls(self, name: str) -> ClassDecl:
        try:
            return self._classes[name]
        except KeyError:
            raise KeyError(f"unknown class {name}") from None

    def has_class(self, name: str) -> bool:
        return name in self._classes

    def class_id(self, name: str) -> int:
        """Dynamic-type id: 1-based class declaration index."""
        return [c.name for c in self.classes].index(name) + 1

    def functions(self) -> list[FunctionDecl]:
        return list(self._funcs.values())

    def func(self, sig: Sig) -> FunctionDecl:
        try:
            return self._funcs[sig]
        except KeyError:
            raise KeyError(f"unknown function {sig}") from None

    def has_func(self, sig: Sig) -> bool:
        return sig in self._funcs

    def find(self, cls: str, name: str, arity: int | None = None) -> FunctionDecl:
        hits = [f for s, f in self._funcs.items()
                if s.cls == cls and s.name == name and (arity is None or s.arity == arity)]
        if len(hits) != 1:
            raise KeyError(f"no unique function {cls}.{name}")
        return hits[0]

    def stmt(self, line: int) -> Statement:
        return self._line(line)[2]

    def func_of(self, line: int) -> FunctionDecl:
        return self._line(line)[0]

    def has_line(self, line: int) -> bool:
        return line in self._lines

    def _line(self, line: int):
        try:
            return self._lines[line]
        except KeyError:
            raise KeyError(f"unknown line {line}") from None

    def all_lines(self) -> list[int]:
        return list(self._lines)

    def next_line(self, line: int) -> int | None:
        """Positional successor inside the enclosing body (L+1 in source programs)."""
        f, pos, _ = self._line(line)
        return f.body[pos + 1][0] if pos + 1 < len(f.body) else None

    def replace_stmt(self, line: int, stmt: Statement) -> "Program":
        f = self.func_of(line)
        body = tuple((l, stmt if l == line else s) for l, s in f.body)
        return self.replace_func(f.sig, body=body)

    def replace_func(self, sig: Sig, **changes) -> "Program":
        classes = []
        for c in self.classes:
            fs = tuple(_replace(f, **changes) if f.sig == sig else f for f in c.functions)
            classes.append(_replace(c, functions=fs))
        return Program(tuple(classes), self.strings, self.models, self.origin)


def _replace(obj, **changes):
    import dataclasses
    return dataclasses.replace(obj, **changes)


def defined_var(s: Statement) -> str | None:
    if isinstance(s, Assign) and isinstance(s.lhs, Var):
        return s.lhs.name
    if isinstance(s, (New, SCall, VCall)):
        return s.var
    return None


def stmt_exprs(s: Statement) -> list[Expr]:
    if isinstance(s, Assign):
        return [s.lhs, s.rhs]
    if isinstance(s, Jump):
        return [s.cond]
    if isinstance(s, Return):
        return [s.value]
    if isinstance(s, SCall):
        return list(s.args)
    if isinstance(s, VCall):
        return [Var(s.receiver), *s.args]
    return []


# ---------------------------------------------------------------------------
# Control-flow queries


def first_line(p: Program, sig: Sig) -> int:
    return min(p.func(sig).lines)


def is_prev_line(p: Program, l1: int, l2: int) -> bool:
    s1 = p.stmt(l1)
    p.stmt(l2)
    if isinstance(s1, Jump) and s1.target == l2:
        return True
    return p.next_line(l1) == l2 and not isinstance(s1, (Return, Trap))


def predecessors(p: Program, line: int) -> list[int]:
    f = p.func_of(line)
    return [l for l in f.lines if is_prev_line(p, l, line)]


def dispatch_targets(p: Program, name: str, arity: int) -> list[FunctionDecl]:
    """Static over-approximation of a virtual call: every class declaring name/arity."""
    return [f for c in p.classes for f in c.functions
            if f.name == name and len(f.params) == arity and not f.is_static]


def call_targets(p: Program, s: Statement) -> list[FunctionDecl]:
    if isinstance(s, SCall):
        return [f for f in p.functions() if f.owner == s.cls and f.name == s.func
                and len(f.params) == len(s.args)]
    if isinstance(s, VCall):
        return dispatch_targets(p, s.func, len(s.args))
    return []


def expr_call_targets(p: Program, e: Expr) -> list[FunctionDecl]:
    out = []
    for sub in sub_exprs(e):
        if isinstance(sub, CallExpr):
            if sub.cls is not None:
                out.extend(f for f in p.functions() if f.owner == sub.cls
                           and f.name == sub.func and len(f.params) == len(sub.args))
            else:
                out.extend(dispatch_targets(p, sub.func, len(sub.args)))
    return out


def callees(p: Program, sig: Sig) -> list[Sig]:
    f = p.func(sig)
    seen: dict[Sig, None] = {}
    for _, s in f.body:
        for g in call_targets(p, s):
            seen.setdefault(g.sig)
        for e in stmt_exprs(s):
            for g in expr_call_targets(p, e):
                seen.setdefault(g.sig)
    return list(seen)


def reachable_funcs(p: Program, sig: Sig) -> list[Sig]:
    order, stack, seen = [], [sig], {sig}
    while stack:
        s = stack.pop(0)
        order.append(s)
        for c in callees(p, s):
            if c not in seen:
                seen.add(c)
                stack.append(c)
    return order


def trans_in_func(p: Program, sig: Sig) -> set[int]:
    out: set[int] = set()
    for s in reachable_funcs(p, sig):
        out.update(p.func(s).lines)
    return out


def is_call_stmt(p: Program, line: int) -> bool:
    s = p.stmt(line)
    return isinstance(s, CALL_KINDS) and any(
        f.model is None and f.body for f in call_targets(p, s))


# ---------------------------------------------------------------------------
# Types


def _join(a, b):
    if a is None:
        return b
    if b is None or a == b:
        return a
    if a == "null":
        return b
    if b == "null":
        return a
    if {a, b} == {"int", "bool"}:
        return "int"
    return a


def expr_type(p: Program, env: dict[str, str | None], e: Expr) -> str | None:
    if isinstance(e, Const):
        return {"bool": "bool", "null": "null", "str": "int"}.get(e.kind, "int")
    if isinstance(e, Var):
        return env.get(e.name)
    if isinstance(e, FieldRef):
        bt = env.get(e.base)
        if bt and p.has_class(bt) and e.name in p.cls(bt).fields:
            return p.cls(bt).field_type(e.name) or "int"
        owners = [c for c in p.classes if e.name in c.fields]
        types = {c.field_type(e.name) for c in owners}
        return types.pop() if len(types) == 1 else None
    if isinstance(e, Index):
        return "int"
    if isinstance(e, Op):
        if e.op in BOOL_OPS:
            return "bool"
        return "int"
    if isinstance(e, CallExpr):
        fs = _call_expr_targets(p, env, e)
        types = {f.ret_type for f in fs}
        return types.pop() if len(types) == 1 else None
    if isinstance(e, Hole):
        return e.type
    return None


def _call_expr_targets(p, env, e: CallExpr):
    if e.cls is not None:
        return [f for f in p.functions() if f.owner == e.cls and f.name == e.func
                and len(f.params) == len(e.args)]
    rt = expr_type(p, env, e.receiver)
    fs = dispatch_targets(p, e.func, len(e.args))
    narrowed = [f for f in fs if f.owner == rt]
    return narrowed or fs


def infer_types(p: Program, f: FunctionDecl) -> dict[str, str | None]:
    """Flow-insensitive variable types for one function (fixpoint over assignments)."""
    env: dict[str, str | None] = {v: None for v in f.locals()}
    if not f.is_static:
        env["this"] = f.owner
    for x, t in zip(f.params, f.param_types or (None,) * len(f.params)):
        env[x] = t
    declared = {x for x, t in zip(f.params, f.param_types) if t}
    if not f.is_static:
        declared.add("this")
    for _ in range(len(env) + 2):
        changed = False
        for _, s in f.body:
            v, t = None, None
            if isinstance(s, Assign) and isinstance(s.lhs, Var):
                v, t = s.lhs.name, expr_type(p, env, s.rhs)
            elif isinstance(s, New):
                v, t = s.var, s.cls
            elif isinstance(s, SCall):
                fs = call_targets(p, s)
                v, t = s.var, (fs[0].ret_type if fs else None)
            elif isinstance(s, VCall):
                fs = call_targets(p, s)
                rt = env.get(s.receiver)
                fs = [g for g in fs if g.owner == rt] or fs
                types = {g.ret_type for g in fs}
                v, t = s.var, (types.pop() if len(types) == 1 else None)
            if v is None or v in declared:
                continue
            nt = _join(env.get(v), t)
            if nt != env.get(v):
                env[v] = nt
                changed = True
        if not changed:
            break
    return env


def field_offset(p: Program, f: FunctionDecl, base: str, name: str,
                 env: dict[str, str | None] | None = None) -> int:
    """Offset of field ``name`` on variable ``base`` inside function ``f``."""
    env = env if env is not None else infer_types(p, f)
    bt = env.get(base)
    if bt and p.has_class(bt):
        c = p.cls(bt)
        if name in c.fields:
            return c.field_offset(name)
        raise IRValidationError(f"class {bt} has no field {name}")
    offsets = {c.field_offset(name) for c in p.classes if name in c.fields}
    if len(offsets) == 1:
        return offsets.pop()
    if not offsets:
        raise IRValidationError(f"unknown field {name}")
    raise IRValidationError(f"ambiguous field {base}.{name}: annotate the type of {base}")


# ---------------------------------------------------------------------------
# Printing


def format_expr(e: Expr, ctx: FunctionDecl | None = None, prog: Program | None = None,
                parent: int = -1) -> str:
    if isinstance(e, Const):
        return str(e)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, FieldRef):
        if e.base == "this" and ctx is not None and _implicit_field(prog, ctx, e.name):
            return e.name
        return f"{e.base}.{e.name}"
    if isinstance(e, Index):
        return f"{e.base}[{format_expr(e.index, ctx, prog)}]"
    if isinstance(e, Hole):
        return "??"
    if isinstance(e, CallExpr):
        args = ", ".join(format_expr(a, ctx, prog) for a in e.args)
        head = e.cls if e.cls is not None else format_expr(e.receiver, ctx, prog, _UNARY_LEVEL + 1)
        return f"{head}.{e.func}({args})"
    if isinstance(e, Op):
        if len(e.args) == 1:
            inner = format_expr(e.args[0], ctx, prog, _UNARY_LEVEL)
            text = f"{e.op}{inner}"
            return f"({text})" if parent > _UNARY_LEVEL else text
        lvl = _LEVEL[e.op]
        left = format_expr(e.args[0], ctx, prog, lvl)
        right = format_expr(e.args[1], ctx, prog, lvl + 1)
        text = f"{left} {e.op} {right}"
        return f"({text})" if parent > lvl else text
    raise TypeError(f"not an expression: {e!r}")


def _implicit_field(prog: Program | None, f: FunctionDecl, name: str) -> bool:
    if f.is_static or name in f.params or prog is None or not prog.has_class(f.owner):
        return False
    return name in prog.cls(f.owner).fields


def format_stmt(s: Statement, ctx: FunctionDecl | None = None, prog: Program | None = None) -> str:
    fx = lambda e: format_expr(e, ctx, prog)
    if isinstance(s, Assign):
        return f"{fx(s.lhs)} = {fx(s.rhs)}"
    if isinstance(s, Jump):
        return f"if ({fx(s.cond)}) goto {s.target}"
    if isinstance(s, Return):
        return f"return {fx(s.value)}"
    if isinstance(s, New):
        return f"{s.var} = new {s.cls}" + (f"[{s.size}]" if s.size is not None else "")
    if isinstance(s, SCall):
        return f"{s.var} = {s.cls}.{s.func}({', '.join(map(fx, s.args))})"
    if isinstance(s, VCall):
        return f"{s.var} = {s.receiver}.{s.func}({', '.join(map(fx, s.args))})"
    if isinstance(s, Trap):
        return f"trap {s.reason}"
    raise TypeError(f"not a statement: {s!r}")


def _typed(name: str, t: str | None) -> str:
    return f"{name}: {t}" if t else name


def format_program(p: Program) -> str:
    out = []
    for c in p.classes:
        head = f"class {c.name}" + (" @network" if c.is_network else "") + " {"
        out.append(head)
        if c.fields:
            types = c.field_types or (None,) * len(c.fields)
            out.append("  fields: " + ", ".join(_typed(a, t) for a, t in zip(c.fields, types)) + ";")
        for f in c.functions:
            if not f.body:
                continue  # synthesized model stubs have no text form
            types = f.param_types or (None,) * len(f.params)
            params = ", ".join(_typed(x, t) for x, t in zip(f.params, types))
            ret = f": {f.ret_type}" if f.ret_type else ""
            out.append(f"  {'static ' if f.is_static else ''}func {f.name}({params}){ret} {{")
            for l, s in f.body:
                out.append(f"    {l}: {format_stmt(s, f, p)}")
            out.append("  }")
        out.append("}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Parsing

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r\n]+|//[^\n]*)
  | (?P<str>"(?:[^"\\]|\\.)*")
  | (?P<num>\d+)
  | (?P<id>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>>>>|<<|>>|<=|>=|==|!=|&&|\|\||\?\?|[-+*/%<>!&|^=(){}\[\].,:;@])
""", re.VERBOSE)

_KEYWORDS = {"class", "fields", "func", "static", "if", "goto", "return", "new",
             "true", "false", "null", "trap"}


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks, pos, line, line_start = [], 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise IRSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        nl = m.group().count("\n")
        if nl:
            line += nl
            line_start = m.start() + m.group().rfind("\n") + 1
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0
        self.strings: dict[str, int] = {}
        self.class_names: set[str] = set()
        self.cur_fields: tuple[str, ...] = ()
        self.cur_func_static = True
        self.cur_params: tuple[str, ...] = ()

    # token helpers
    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> _Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.tok
        raise IRSyntaxError(msg, tok.line, tok.col)

    def accept(self, text: str) -> bool:
        if self.tok.text == text and self.tok.kind in ("op", "id"):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> _Tok:
        if not (self.tok.text == text and self.tok.kind in ("op", "id")):
            self.error(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
        t = self.tok
        self.i += 1
        return t

    def ident(self) -> str:
        if self.tok.kind != "id" or self.tok.text in _KEYWORDS and self.tok.text != "this":
            self.error(f"expected identifier, found {self.tok.text!r}")
        t = self.tok.text
        self.i += 1
        return t

    def number(self) -> int:
        if self.tok.kind != "num":
            self.error(f"expected line number, found {self.tok.text!r}")
        n = int(self.tok.text)
        self.i += 1
        return n

    # program structure
    def program(self) -> Program:
        # pre-scan class names so `C.f(...)` can be told apart from `x.f(...)`
        for k, t in enumerate(self.toks[:-1]):
            if t.text == "class" and self.toks[k + 1].kind == "id":
                self.class_names.add(self.toks[k + 1].text)
        classes = []
        while self.tok.kind != "eof":
            classes.append(self.class_decl())
        strings = tuple(sorted(self.strings.items(), key=lambda kv: kv[1]))
        return Program(tuple(classes), strings)

    def class_decl(self) -> ClassDecl:
        self.expect("class")
        name = self.ident()
        network = False
        if self.accept("@"):
            if self.ident() != "network":
                self.error("only @network annotation is supported", self.toks[self.i - 1])
            network = True
        self.expect("{")
        fields, ftypes = [], []
        if self.accept("fields"):
            self.expect(":")
            if not self.accept(";"):
                while True:
                    fields.append(self.ident())
                    ftypes.append(self.ident() if self.accept(":") else None)
                    if self.accept(";"):
                        break
                    self.expect(",")
        self.cur_fields = tuple(fields)
        funcs = []
        while not self.accept("}"):
            funcs.append(self.func_decl(name))
        return ClassDecl(name, network, tuple(fields), tuple(funcs), tuple(ftypes))

    def func_decl(self, owner: str) -> FunctionDecl:
        static = self.accept("static")
        self.expect("func")
        name = self.ident()
        self.expect("(")
        params, ptypes = [], []
        if not self.accept(")"):
            while True:
                params.append(self.ident())
                ptypes.append(self.ident() if self.accept(":") else None)
                if self.accept(")"):
                    break
                self.expect(",")
        ret = self.ident() if self.accept(":") else None
        self.cur_func_static = static
        self.cur_params = tuple(params)
        self.expect("{")
        body = []
        while not self.accept("}"):
            tok = self.tok
            line = self.number()
            self.expect(":")
            body.append((line, self.statement(), tok))
        if not body:
            self.error(f"function {owner}.{name} has an empty body")
        # line discipline is checked here so errors carry positions
        for (l0, _, _), (l1, _, t1) in zip(body, body[1:]):
            if l1 != l0 + 1:
                self.error(f"non-consecutive line numbers {l0} -> {l1} in {owner}.{name}", t1)
        return FunctionDecl(name, owner, static, tuple(params),
                            tuple((l, s) for l, s, _ in body), tuple(ptypes), ret)

    # statements
    def statement(self) -> Statement:
        if self.accept("if"):
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            self.expect("goto")
            return Jump(cond, self.number())
        if self.accept("return"):
            return Return(self.expr())
        if self.accept("trap"):
            return Trap(self.ident() if self.tok.kind == "id" and self.peek().text != ":" else "bound")
        start = self.tok
        lhs = self.postfix(self.primary())
        if not isinstance(lhs, (Var, FieldRef, Index)):
            self.error("left-hand side must be a variable, field or array cell", start)
        self.expect("=")
        if self.accept("new"):
            if not isinstance(lhs, Var):
                self.error("new must be assigned to a variable", start)
            cls = self.ident()
            size = None
            if self.accept("["):
                size = self.number()
                self.expect("]")
            return New(lhs.name, cls, size)
        rhs = self.expr()
        if isinstance(rhs, CallExpr):
            if not isinstance(lhs, Var):
                self.error("call result must be assigned to a variable", start)
            if not all(is_immediate(a) for a in rhs.args):
                self.error("call arguments must be variables or constants", start)
            if rhs.cls is not None:
                return SCall(lhs.name, rhs.cls, rhs.func, rhs.args)
            if not isinstance(rhs.receiver, Var):
                self.error("call receiver must be a variable", start)
            return VCall(lhs.name, rhs.receiver.name, rhs.func, rhs.args)
        return Assign(lhs, rhs)

    # expressions
    def expr(self, level: int = 0) -> Expr:
        if level == _UNARY_LEVEL:
            return self.unary()
        left = self.expr(level + 1)
        while self.tok.kind == "op" and self.tok.text in _PRECEDENCE[level]:
            op = self.tok.text
            self.i += 1
            right = self.expr(level + 1)
            left = Op(op, (left, right))
        return left

    def unary(self) -> Expr:
        if self.tok.kind == "op" and self.tok.text in UNARY_OPS:
            op = self.tok.text
            self.i += 1
            inner = self.unary()
            if op == "-" and isinstance(inner, Const) and inner.kind == "int":
                return Const(-inner.value)
            return Op(op, (inner,))
        return self.postfix(self.primary())

    def primary(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return Const(int(t.text))
        if t.kind == "str":
            self.i += 1
            raw = t.text
            if raw not in self.strings:
                self.strings[raw] = STRING_BASE + len(self.strings)
            return Const(self.strings[raw], "str", raw)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if self.accept("??"):
            return Hole("expr")
        if self.accept("true"):
            return TRUE
        if self.accept("false"):
            return FALSE
        if self.accept("null"):
            return NULL
        name = self.ident()
        if name in self.class_names and self.tok.text == "." and name not in self.cur_params:
            self.expect(".")
            func = self.ident()
            return CallExpr(None, name, func, self.call_args())
        return self.resolve_name(name)

    def resolve_name(self, name: str) -> Expr:
        if (not self.cur_func_static and name in self.cur_fields
                and name not in self.cur_params and name != "this"):
            return FieldRef("this", name)
        return Var(name)

    def call_args(self) -> tuple:
        self.expect("(")
        args = []
        if not self.accept(")"):
            while True:
                args.append(self.expr())
                if self.accept(")"):
                    break
                self.expect(",")
        return tuple(args)

    def postfix(self, e: Expr) -> Expr:
        while True:
            if self.tok.text == "." and self.tok.kind == "op":
                self.i += 1
                name = self.ident()
                if self.tok.text == "(":
                    e = CallExpr(e, None, name, self.call_args())
                    continue
                if not isinstance(e, Var):
                    self.error("field access base must be a variable")
                e = FieldRef(e.name, name)
            elif self.tok.text == "[" and self.tok.kind == "op":
                if not isinstance(e, Var):
                    self.error("array base must be a variable")
                self.i += 1
                idx = self.expr()
                self.expect("]")
                if not is_immediate(idx):
                    self.error("array index must be a variable or constant")
                e = Index(e.name, idx)
            else:
                return e


def _scoped_parser(text: str, func: FunctionDecl | None, prog: Program | None) -> _Parser:
    ps = _Parser(text)
    if prog is not None:
        ps.class_names = {c.name for c in prog.classes}
        ps.strings = dict(prog.strings)
    if func is not None:
        ps.cur_func_static = func.is_static
        ps.cur_params = func.params
        if prog is not None and prog.has_class(func.owner):
            ps.cur_fields = prog.cls(func.owner).fields
    return ps


def parse_expr(text: str, func: FunctionDecl | None = None, prog: Program | None = None) -> Expr:
    ps = _scoped_parser(text, func, prog)
    e = ps.expr()
    if ps.tok.kind != "eof":
        ps.error(f"trailing input {ps.tok.text!r}")
    return e


def parse_stmt(text: str, func: FunctionDecl | None = None, prog: Program | None = None) -> Statement:
    """Parse one statement (without its line label) in the scope of ``func``."""
    ps = _scoped_parser(text, func, prog)
    s = ps.statement()
    if ps.tok.kind != "eof":
        ps.error(f"trailing input {ps.tok.text!r}")
    return s


def parse_program(text: str) -> Program:
    p = _Parser(text).program()
    validate(p)
    return p


def validate(p: Program) -> list[str]:
    """Raise on structural errors; return non-fatal diagnostics."""
    seen_lines: dict[int, str] = {}
    sigs: set[Sig] = set()
    names: set[str] = set()
    warnings = []
    for c in p.classes:
        if c.name in names:
            raise IRValidationError(f"duplicate class {c.name}")
        names.add(c.name)
        if len(set(c.fields)) != len(c.fields):
            raise IRValidationError(f"duplicate field in class {c.name}")
        for f in c.functions:
            if f.sig in sigs:
                raise IRValidationError(f"duplicate function signature {f.sig}")
            sigs.add(f.sig)
            if not f.body and f.model is None:
                raise IRValidationError(f"function {f.sig} has an empty body")
            lines = f.lines
            for l in lines:
                if l < 0:
                    raise IRValidationError(f"negative line number {l}")
                if l in seen_lines:
                    raise IRValidationError(f"duplicate line number {l}")
                seen_lines[l] = str(f.sig)
            for a, b in zip(lines, lines[1:]):
                if b != a + 1:
                    raise IRValidationError(f"non-consecutive line numbers {a} -> {b} in {f.sig}")
            own = set(lines)
            for l, s in f.body:
                if isinstance(s, Jump) and s.target not in own:
                    raise IRValidationError(
                        f"line {l}: jump target {s.target} outside function {f.sig}")
                if isinstance(s, New) and not p.has_class(s.cls):
                    raise IRValidationError(f"line {l}: unknown class {s.cls}")
                if isinstance(s, SCall) and not call_targets(p, s):
                    raise IRValidationError(f"line {l}: unknown function {s.cls}.{s.func}")
                for e in stmt_exprs(s):
                    for sub in sub_exprs(e):
                        if isinstance(sub, Op):
                            arity = len(sub.args)
                            ok = (arity == 2 and sub.op in BINARY_OPS) or (arity == 1 and sub.op in UNARY_OPS)
                            if not ok:
                                raise IRValidationError(f"line {l}: bad operator {sub.op}/{arity}")
            for l in lines[1:]:
                if not any(is_prev_line(p, k, l) for k in lines):
                    warnings.append(f"line {l} of {f.sig} has no predecessor")
    return warnings
