"""The modular repair loop: pick a function, localize, synthesize, repeat."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field

from . import ir
from .abstraction import ModelRegistry, apply_abstraction
from .ir import Program, Sig
from .localizer import FaultAt, LocalizationTimeout, NoFault, Workspace, localize_fault
from .smt import SolverSession
from .synthesizer import (ExpansionBudget, NoHole, complete_sketch, generate_grammar,
                          make_sketch, patch_expression_text)
from .testkit import ExecBounds, run_test, trace_test, verify

log = logging.getLogger(__name__)

NOT_FAULTY = "not faulty, nothing to repair"


@dataclass(frozen=True)
class RepairConfig:
    bounds: ExecBounds = field(default_factory=ExecBounds)
    expansions: int = 8
    no_abstraction: bool = False
    no_summaries: bool = False
    solver_path: str | None = None
    seed: int = 0
    timeout: float = 60.0
    # caps per synthesis call; None searches the whole budget
    max_candidates: int | None = 100_000
    synth_timeout: float | None = None
    backend: str = "auto"
    registry: ModelRegistry | None = field(default=None, compare=False, repr=False)

    def session(self) -> SolverSession:
        return SolverSession(self.solver_path, seed=self.seed, timeout=self.timeout,
                             backend=self.backend)

    def to_dict(self) -> dict:
        return {"unroll": self.bounds.unroll_k, "step_limit": self.bounds.step_limit,
                "expansions": self.expansions, "max_candidates": self.max_candidates,
                "no_abstraction": self.no_abstraction,
                "no_summaries": self.no_summaries, "seed": self.seed, "timeout": self.timeout}


@dataclass(frozen=True)
class Repaired:
    program: Program
    fault_line: int
    patch: str
    expression: str = ""


@dataclass(frozen=True)
class Failed:
    reason: str


@dataclass
class Iteration:
    target: Sig
    localized: int | None  # None stands for NoFault
    synthesis: dict | None = None

    def to_dict(self) -> dict:
        return {"target": str(self.target),
                "localized": "NoFault" if self.localized is None else self.localized,
                "synthesis": self.synthesis}


@dataclass
class Timings:
    localization: float = 0.0
    synthesis: float = 0.0
    total: float = 0.0


@dataclass
class RepairReport:
    outcome: Repaired | Failed
    iterations: list[Iteration] = field(default_factory=list)
    timings: Timings = field(default_factory=Timings)
    config: dict = field(default_factory=dict)
    solver_queries: int = 0

    @property
    def repaired(self) -> bool:
        return isinstance(self.outcome, Repaired)

    def visited_functions(self) -> list[Sig]:
        out = []
        for it in self.iterations:
            if it.target not in out:
                out.append(it.target)
        return out

    def to_dict(self) -> dict:
        o = self.outcome
        if isinstance(o, Repaired):
            outcome = {"kind": "repaired", "fault_line": o.fault_line, "patch": o.patch,
                       "expression": o.expression}
        else:
            outcome = {"kind": "failed", "reason": o.reason}
        return {"outcome": outcome,
                "iterations": [it.to_dict() for it in self.iterations],
                "timings": asdict(self.timings),
                "solver_queries": self.solver_queries,
                "config": self.config}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = []
        o = self.outcome
        if isinstance(o, Repaired):
            lines.append(f"Repaired: line {o.fault_line}: {o.patch}")
        else:
            lines.append(f"Failed: {o.reason}")
        for i, it in enumerate(self.iterations, 1):
            loc = "NoFault" if it.localized is None else f"line {it.localized}"
            syn = ""
            if it.synthesis is not None:
                st = it.synthesis.get("status")
                syn = f", synthesis {st}"
                if it.synthesis.get("patch"):
                    syn += f": {it.synthesis['patch']}"
                if "candidates" in it.synthesis:
                    syn += f" ({it.synthesis['candidates']} candidates)"
            lines.append(f"  {i:2d}. {it.target}: {loc}{syn}")
        t = self.timings
        lines.append(f"time: localization {t.localization:.2f}s, synthesis {t.synthesis:.2f}s, "
                     f"total {t.total:.2f}s")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Function selection


@dataclass
class SelectionState:
    order: list[Sig]  # first-invocation order over the failing tests
    excluded: set[Sig] = field(default_factory=set)
    descend: Sig | None = None


def invocation_order(p: Program, tests, b: ExecBounds | None = None) -> list[Sig]:
    """Functions in order of first invocation across the failing tests."""
    order: dict[Sig, None] = {}
    for t in tests:
        out, trace = trace_test(p, t, b)
        if out.passed:
            continue
        for sig in trace.calls:
            order.setdefault(sig)
    return list(order)


def new_selection(p: Program, tests, b: ExecBounds | None = None) -> SelectionState:
    excluded = {t.entry for t in tests}
    excluded |= {f.sig for f in p.functions() if p.model(f) is not None}
    return SelectionState(invocation_order(p, tests, b), excluded)


def _has_unvisited(p: Program, sig: Sig, v: dict) -> bool:
    return any(not v.get(l, False) for l in p.func(sig).lines)


def select_function(p: Program, v: dict, state: SelectionState) -> Sig | None:
    """Callee of the last call-statement fault, else the first invoked
    function with unvisited lines; never-invoked functions come last."""
    if state.descend is not None:
        g, state.descend = state.descend, None
        if g not in state.excluded and _has_unvisited(p, g, v):
            return g
    seen = set()
    for sig in list(state.order) + [f.sig for f in p.functions()]:
        if sig in seen or sig in state.excluded or not p.has_func(sig):
            continue
        seen.add(sig)
        if _has_unvisited(p, sig, v):
            return sig
    return None


# ---------------------------------------------------------------------------
# Repair


class _Run:
    """Mutable bookkeeping shared by one repair invocation."""

    def __init__(self, source: Program, work: Program, tests, cfg: RepairConfig):
        self.source = source
        self.work = work
        self.tests = list(tests)
        self.cfg = cfg
        self.session = cfg.session()
        self.workspace = Workspace(work, cfg.bounds, inline_all=cfg.no_summaries)
        self.report = RepairReport(Failed("no function left to repair"), config=cfg.to_dict())
        self.selection = new_selection(work, self.tests, cfg.bounds)


def _descend_target(p: Program, line: int, v: dict) -> Sig | None:
    for g in ir.call_targets(p, p.stmt(line)):
        if p.model(g) is None and g.body and _has_unvisited(p, g.sig, v):
            return g.sig
    return None


def _finalize(run: _Run, line: int, stmt_text: str) -> Program | None:
    """Re-parse the patch into the caller's program and re-check it from scratch."""
    src = run.source
    f = src.func_of(line)
    stmt = ir.parse_stmt(stmt_text, f, src)
    fixed = ir.parse_program(ir.format_program(src.replace_stmt(line, stmt)))
    changed = [l for l in src.all_lines() if src.stmt(l) != fixed.stmt(l)]
    if changed != [line]:
        return None
    checked = fixed if run.cfg.no_abstraction else apply_abstraction(fixed, run.cfg.registry)
    return fixed if verify(checked, run.tests, run.cfg.bounds) else None


def repair_function(p: Program, f: Sig, tests, v: dict, cfg: RepairConfig,
                    run: _Run | None = None):
    """Localize and patch inside ``f`` until success or exhaustion.

    Returns ``(v, Repaired | None)``; ``None`` means the caller should pick
    another target (the last fault was a call, or ``f`` has no fault left).
    """
    if run is None:
        run = _Run(p, p, tests, cfg)
    rep = run.report
    while True:
        t0 = time.perf_counter()
        try:
            res = localize_fault(p, f, run.tests, v, cfg.bounds, run.session,
                                 workspace=run.workspace)
        finally:
            rep.timings.localization += time.perf_counter() - t0
        if isinstance(res, NoFault):
            rep.iterations.append(Iteration(f, None))
            for l in ir.trans_in_func(p, f):
                v[l] = True
            return v, None
        line = res.line
        log.info("%s: fault candidate at line %d", f, line)
        v[line] = True
        it = Iteration(f, line)
        rep.iterations.append(it)
        if ir.is_call_stmt(p, line):
            callee = _descend_target(p, line, v)
            it.synthesis = {"status": "descend", "callee": str(callee) if callee else None}
            run.selection.descend = callee
            return v, None
        t0 = time.perf_counter()
        try:
            out = _synthesize(run, p, f, line)
        finally:
            rep.timings.synthesis += time.perf_counter() - t0
        it.synthesis = out[0]
        log.info("line %d: synthesis %s", line, out[0]["status"])
        if out[1] is not None:
            return v, out[1]


def _synthesize(run: _Run, p: Program, f: Sig, line: int):
    cfg = run.cfg
    try:
        sketch = make_sketch(p, f, line)
    except NoHole as exc:
        return {"status": "no-hole", "reason": str(exc)}, None
    grammar = generate_grammar(sketch)
    deadline = time.monotonic() + cfg.synth_timeout if cfg.synth_timeout else None
    res = complete_sketch(sketch, grammar, run.tests, ExpansionBudget(cfg.expansions),
                          bounds=cfg.bounds, deadline=deadline,
                          max_candidates=cfg.max_candidates)
    info = {"status": "failed" if not res.ok else "ok", "sketch": sketch.text(),
            "grammar_size": len(grammar), "candidates": res.candidates,
            "fast_rejects": res.fast_rejects}
    if not res.ok:
        info["reason"] = res.reason
        return info, None
    info["patch"] = res.patch
    info["expansions"] = res.expansions
    fixed = _finalize(run, line, res.patch)
    if fixed is None:
        info["status"] = "rejected"
        info["reason"] = "final verification failed"
        return info, None
    return info, Repaired(fixed, line, res.patch, patch_expression_text(sketch, res.expr))


def repair(p: Program, tests, cfg: RepairConfig | None = None) -> RepairReport:
    """Repair ``p`` against ``tests``; failures are reported, not raised.

    ``SolverUnavailable`` is the one exception that escapes, since no
    result can be produced without a solver.
    """
    cfg = cfg or RepairConfig()
    tests = list(tests)
    if not tests:
        raise ValueError("repair needs at least one test")
    start = time.perf_counter()
    work = p if cfg.no_abstraction else apply_abstraction(p, cfg.registry)
    if verify(work, tests, cfg.bounds):
        rep = RepairReport(Failed(NOT_FAULTY), config=cfg.to_dict())
        rep.timings.total = time.perf_counter() - start
        return rep
    run = _Run(p, work, tests, cfg)
    rep = run.report
    v = {l: False for l in work.all_lines()}
    # harness and model lines are never candidates
    for sig in run.selection.excluded:
        for l in work.func(sig).lines:
            v[l] = True
    try:
        while True:
            f = select_function(work, v, run.selection)
            if f is None:
                rep.outcome = Failed("no function left to repair")
                break
            log.info("target %s", f)
            v, fixed = repair_function(work, f, tests, v, cfg, run)
            if fixed is not None:
                rep.outcome = fixed
                break
    except LocalizationTimeout as exc:
        rep.outcome = Failed(f"solver timeout: {exc}")
    rep.solver_queries = run.session.queries
    rep.timings.total = time.perf_counter() - start
    if isinstance(rep.outcome, Repaired):
        assert verify(apply_abstraction(rep.outcome.program, cfg.registry)
                      if not cfg.no_abstraction else rep.outcome.program, tests, cfg.bounds)
    return rep


def failing_tests(p: Program, tests, b: ExecBounds | None = None) -> list:
    return [t for t in tests if not run_test(p, t, b).passed]


def localize_first(p: Program, tests, cfg: RepairConfig | None = None,
                   function: Sig | None = None) -> tuple[Sig | None, FaultAt | NoFault, list]:
    """Run the selection loop with localization only, stopping at the first fault."""
    cfg = cfg or RepairConfig()
    tests = list(tests)
    work = p if cfg.no_abstraction else apply_abstraction(p, cfg.registry)
    run = _Run(p, work, tests, cfg)
    v = {l: False for l in work.all_lines()}
    for sig in run.selection.excluded:
        for l in work.func(sig).lines:
            v[l] = True
    log_ = []
    if function is not None:
        res = localize_fault(work, function, tests, v, cfg.bounds, run.session,
                             workspace=run.workspace)
        log_.append(Iteration(function, res.line if isinstance(res, FaultAt) else None))
        return function, res, log_
    while True:
        f = select_function(work, v, run.selection)
        if f is None:
            return None, NoFault(), log_
        res = localize_fault(work, f, tests, v, cfg.bounds, run.session, workspace=run.workspace)
        log_.append(Iteration(f, res.line if isinstance(res, FaultAt) else None))
        if isinstance(res, FaultAt):
            return f, res, log_
        for l in ir.trans_in_func(work, f):
            v[l] = True
