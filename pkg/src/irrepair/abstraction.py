"""Domain models for @network classes.

A model replaces a function body with a hand-written specification that has
both a concrete reading (used by the interpreter) and a symbolic reading
(used to build summaries).  Both readings go through a small heap protocol so
the same model code cannot drift between the two worlds:

    heap.read(addr) / heap.write(addr, value) / heap.alloc(cls) / heap.dtype(addr)
    heap.eq(a, b) / heap.and_(a, b) / heap.ne_null(a) / heap.add(a, k)
    heap.to_int(c) / heap.cond(c, then_thunk, else_thunk)

Concrete heaps operate on ints; symbolic heaps on solver terms.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import warnings
from dataclasses import dataclass
from typing import Any, Callable

from .ir import ClassDecl, FunctionDecl, Program, Sig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AbstractModel:
    """Specification of one function.

    ``fn(heap, receiver, args)`` returns the result value; ``receiver`` is
    ``None`` for static functions.  ``pure`` models never write memory and
    may therefore appear inside patch expressions.
    """
    signature: Sig
    fn: Callable[..., Any]
    pure: bool = True
    is_static: bool = False
    ret_type: str | None = None
    param_types: tuple = ()
    template: str = "custom"

    def concrete(self, heap, receiver, args):
        return self.fn(heap, receiver, args)

    def symbolic(self, heap, receiver, args):
        return self.fn(heap, receiver, args)


@dataclass(frozen=True)
class ModelRegistry:
    models: tuple = ()

    def as_dict(self) -> dict[Sig, AbstractModel]:
        return {m.signature: m for m in self.models}

    def get(self, sig: Sig) -> AbstractModel | None:
        return self.as_dict().get(sig)

    def __len__(self) -> int:
        return len(self.models)

    def __contains__(self, sig) -> bool:
        return sig in self.as_dict()


def register_model(r: ModelRegistry, m: AbstractModel) -> ModelRegistry:
    kept = tuple(x for x in r.models if x.signature != m.signature)
    return ModelRegistry(kept + (m,))


# ---------------------------------------------------------------------------
# Templates for value-wrapper classes (MacAddress, IPv4Address, ...)


def value_equals(cls: str, offset: int, name: str = "equals") -> AbstractModel:
    """x.dtype = y.dtype and x.value = y.value (null never equals)."""
    def fn(heap, x, args):
        y = args[0]

        def compare():
            same_type = heap.eq(heap.dtype(x), heap.dtype(y))
            same_value = heap.eq(heap.read(heap.add(x, offset)), heap.read(heap.add(y, offset)))
            return heap.to_int(heap.and_(same_type, same_value))
        return heap.cond(heap.ne_null(y), compare, lambda: 0)
    return AbstractModel(Sig(cls, name, 1), fn, pure=True, ret_type="bool",
                         param_types=(cls,), template="value_equals")


def value_hash(cls: str, offset: int, name: str = "hashCode") -> AbstractModel:
    def fn(heap, x, args):
        return heap.read(heap.add(x, offset))
    return AbstractModel(Sig(cls, name, 0), fn, pure=True, ret_type="int", template="value_hash")


def value_of(cls: str, offset: int, nfields: int, name: str = "of") -> AbstractModel:
    def fn(heap, _recv, args):
        obj = heap.alloc(cls, nfields)
        heap.write(heap.add(obj, offset), args[0])
        return obj
    return AbstractModel(Sig(cls, name, 1), fn, pure=False, is_static=True, ret_type=cls,
                         param_types=("int",), template="value_of")


def getter(cls: str, fname: str, offset: int, ftype: str | None = None) -> AbstractModel:
    def fn(heap, x, args):
        return heap.read(heap.add(x, offset))
    return AbstractModel(Sig(cls, "get_" + fname, 0), fn, pure=True, ret_type=ftype or "int",
                         template="getter")


def setter(cls: str, fname: str, offset: int, ftype: str | None = None) -> AbstractModel:
    def fn(heap, x, args):
        heap.write(heap.add(x, offset), args[0])
        return 0
    return AbstractModel(Sig(cls, "set_" + fname, 1), fn, pure=False, ret_type="int",
                         param_types=(ftype,), template="setter")


def value_wrapper(cls: str, value_field: str = "value", fields: tuple[str, ...] = ("value",)) -> list[AbstractModel]:
    off = fields.index(value_field)
    return [value_of(cls, off, len(fields)), value_equals(cls, off), value_hash(cls, off)]


TEMPLATES = {
    "value_equals": lambda cls, c, p: value_equals(cls, c.field_offset(p.get("field", "value")), p.get("name", "equals")),
    "value_hash": lambda cls, c, p: value_hash(cls, c.field_offset(p.get("field", "value")), p.get("name", "hashCode")),
    "value_of": lambda cls, c, p: value_of(cls, c.field_offset(p.get("field", "value")), len(c.fields), p.get("name", "of")),
}


def builtin_registry() -> ModelRegistry:
    r = ModelRegistry()
    for cls in ("MacAddress", "IPv4Address"):
        for m in value_wrapper(cls):
            r = register_model(r, m)
    return r


def load_manifest(path_or_obj, program: Program, base: ModelRegistry | None = None) -> ModelRegistry:
    """Bind models from a manifest: {"Class.func": {"template": name, ...params}}."""
    if isinstance(path_or_obj, (str, bytes)) or hasattr(path_or_obj, "__fspath__"):
        with open(path_or_obj) as fh:
            data = json.load(fh)
    else:
        data = path_or_obj
    r = base or ModelRegistry()
    for key, spec in data.items():
        cls, func = key.split(".", 1)
        if spec["template"] not in TEMPLATES:
            raise ValueError(f"unknown model template {spec['template']!r}")
        params = dict(spec)
        params.setdefault("name", func)
        r = register_model(r, TEMPLATES[spec["template"]](cls, program.cls(cls), params))
    return r


# ---------------------------------------------------------------------------


def _accessor_models(c: ClassDecl) -> list[AbstractModel]:
    out = []
    for i, a in enumerate(c.fields):
        t = c.field_type(a)
        out += [getter(c.name, a, i, t), setter(c.name, a, i, t)]
    return out


def apply_abstraction(p: Program, r: ModelRegistry | None = None) -> Program:
    """Bind models to @network functions and add implicit field accessors.

    Bound functions keep their body text (so lines stay addressable) but
    their ``model`` attribute routes execution to the model.
    """
    r = r if r is not None else builtin_registry()
    registry = r.as_dict()
    table: dict[Sig, AbstractModel] = {}
    classes = []
    for c in p.classes:
        if not c.is_network:
            classes.append(c)
            continue
        funcs = []
        for f in c.functions:
            m = registry.get(f.sig)
            if m is None:
                warnings.warn(f"@network function {f.sig} has no model; keeping its body")
                funcs.append(f)
                continue
            table[f.sig] = m
            funcs.append(dataclasses.replace(f, model=m.template))
        declared = {f.sig for f in funcs}
        for m in _accessor_models(c):
            if m.signature in declared:
                continue
            table[m.signature] = m
            params = tuple(f"a{i}" for i in range(m.signature.arity))
            funcs.append(FunctionDecl(m.signature.name, c.name, False, params, (),
                                      m.param_types, m.ret_type, model=m.template))
        classes.append(dataclasses.replace(c, functions=tuple(funcs)))
    return Program(tuple(classes), p.strings, tuple(table.items()))
