"""Command line: ``irrepair {repair,localize,check,bench}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import ir
from .abstraction import apply_abstraction
from .corpus import DEFAULT_ROOT, load_benchmark, load_corpus
from .driver import NOT_FAULTY, RepairConfig, Repaired, localize_first, repair
from .localizer import FaultAt, LocalizationTimeout, check_faulty_symbolic
from .smt import SolverError, SolverSession, SolverUnavailable
from .testkit import ExecBounds, load_tests, parse_entry, run_test

EXIT_OK, EXIT_FAILED, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2, 3

log = logging.getLogger("irrepair")


class InputError(Exception):
    pass


def _add_config_flags(ap: argparse.ArgumentParser) -> None:
    ap.add_argument("--unroll", type=int, default=3, metavar="K", help="loop/recursion bound")
    ap.add_argument("--step-limit", type=int, default=100_000)
    ap.add_argument("--expansions", type=int, default=8, metavar="K", help="synthesis budget")
    ap.add_argument("--max-candidates", type=int, default=100_000,
                    help="candidates tried per sketch (0 for no cap)")
    ap.add_argument("--solver", metavar="PATH", help="z3 binary (default: z3 on PATH)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--timeout", type=float, default=60.0, metavar="S", help="per-query solver timeout")
    ap.add_argument("--no-abstraction", action="store_true")
    ap.add_argument("--no-summaries", action="store_true")
    ap.add_argument("--report", choices=("json", "text"), default="text")
    ap.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="irrepair", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("repair", "localize and patch a faulty program"),
                        ("localize", "print the first localized fault"),
                        ("check", "report whether the program fails its tests")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("program")
        sp.add_argument("tests")
        _add_config_flags(sp)
        if name == "repair":
            sp.add_argument("-o", "--output", help="patched program path")
        if name == "localize":
            sp.add_argument("--function", metavar="Class.func", help="localize in this function only")
    sp = sub.add_parser("bench", help="run the benchmark corpus")
    sp.add_argument("--root", default=None, help="corpus directory")
    sp.add_argument("--only", nargs="*", metavar="NAME")
    sp.add_argument("--json", dest="json_out", metavar="PATH", help="also write the JSON report here")
    sp.add_argument("--jobs", type=int, default=1)
    _add_config_flags(sp)
    return ap


def config_from(args) -> RepairConfig:
    try:
        bounds = ExecBounds(args.unroll, args.step_limit)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    if args.expansions < 0:
        raise InputError("--expansions must be non-negative")
    return RepairConfig(bounds=bounds, expansions=args.expansions,
                        max_candidates=args.max_candidates or None,
                        no_abstraction=args.no_abstraction, no_summaries=args.no_summaries,
                        solver_path=args.solver, seed=args.seed, timeout=args.timeout)


def load_inputs(program_path: str, tests_path: str):
    try:
        program = ir.parse_program(Path(program_path).read_text())
        tests = load_tests(program, Path(tests_path))
    except OSError as exc:
        raise InputError(f"cannot read input: {exc}") from None
    except (ir.IRSyntaxError, ir.IRValidationError) as exc:
        raise InputError(f"{program_path}: {exc}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{tests_path}: {exc}") from None
    if not tests:
        raise InputError(f"{tests_path}: no tests")
    return program, tests


def fixed_path(program_path: str) -> Path:
    p = Path(program_path)
    return p.with_name(p.stem + ".fixed.np")


def _emit(args, text: str, data) -> None:
    if args.report == "json":
        print(json.dumps(data, indent=2, sort_keys=True))
    else:
        print(text)


# ---------------------------------------------------------------------------


def cmd_repair(args) -> int:
    cfg = config_from(args)
    cfg.session()  # fail early when no solver is available
    program, tests = load_inputs(args.program, args.tests)
    report = repair(program, tests, cfg)
    out = Path(args.output) if args.output else fixed_path(args.program)
    if isinstance(report.outcome, Repaired):
        out.write_text(ir.format_program(report.outcome.program))
        suffix = ".report.json" if args.report == "json" else ".report.txt"
        body = report.to_json() if args.report == "json" else report.to_text()
        out.with_name(Path(args.program).stem + suffix).write_text(body + "\n")
    _emit(args, report.to_text() + (f"\nwrote {out}" if report.repaired else ""), report.to_dict())
    return EXIT_OK if report.repaired else EXIT_FAILED


def cmd_localize(args) -> int:
    cfg = config_from(args)
    cfg.session()
    program, tests = load_inputs(args.program, args.tests)
    func = None
    if args.function:
        try:
            func = parse_entry(program, args.function)
        except KeyError as exc:
            raise InputError(f"unknown function {args.function}") from exc
    f, res, steps = localize_first(program, tests, cfg, func)
    data = {"function": str(f) if f else None, "fault": str(res),
            "line": getattr(res, "line", None), "iterations": [s.to_dict() for s in steps]}
    found = isinstance(res, FaultAt)
    text = str(res) if f is None else f"{res} in {f}"
    if found:
        text = f"{res} in {f}: {ir.format_stmt(program.stmt(res.line), program.func(f), program)}"
    _emit(args, text, data)
    return EXIT_OK if found else EXIT_FAILED


def cmd_check(args) -> int:
    cfg = config_from(args)
    session = cfg.session()
    program, tests = load_inputs(args.program, args.tests)
    work = program if cfg.no_abstraction else apply_abstraction(program, cfg.registry)
    outcomes = {t.name: run_test(work, t, cfg.bounds) for t in tests}
    concrete = any(not o.passed for o in outcomes.values())
    symbolic = check_faulty_symbolic(work, tests, cfg.bounds, session)
    verdict = "faulty" if concrete else "not faulty"
    lines = [f"{name}: {o}" for name, o in outcomes.items()]
    lines.append(verdict + ("" if symbolic == concrete else " (symbolic check disagrees)"))
    data = {"faulty": concrete, "symbolic_faulty": symbolic,
            "tests": {n: str(o) for n, o in outcomes.items()}}
    _emit(args, "\n".join(lines), data)
    if symbolic != concrete:
        return EXIT_FAILED
    return EXIT_FAILED if concrete else EXIT_OK


# ---------------------------------------------------------------------------
# bench


def _same_stmt(a, b, fa, fb, pa, pb) -> bool:
    return "".join(ir.format_stmt(a, fa, pa).split()) == "".join(ir.format_stmt(b, fb, pb).split())


def bench_one(path: str, cfg: RepairConfig) -> dict:
    b = load_benchmark(path)
    report = repair(b.program, b.tests, cfg)
    row = {"name": b.name, "lines": b.size, "tests": len(b.tests),
           "ground_truth": b.fault_lines, "succ": report.repaired,
           "iterations": len(report.iterations), "solver_queries": report.solver_queries,
           "timings": {"loc": round(report.timings.localization, 3),
                       "synth": round(report.timings.synthesis, 3),
                       "total": round(report.timings.total, 3)}}
    o = report.outcome
    if isinstance(o, Repaired):
        row["fault_line"] = o.fault_line
        row["patch"] = o.patch
        exp = None
        if b.expected is not None and b.expected.has_line(o.fault_line):
            f = o.program.func_of(o.fault_line)
            exp = _same_stmt(o.program.stmt(o.fault_line), b.expected.stmt(o.fault_line), f,
                             b.expected.func_of(o.fault_line), o.program, b.expected)
        row["exp"] = exp
    else:
        row["fault_line"] = None
        row["reason"] = o.reason
        row["exp"] = None if b.expected is None else False
    row["localized"] = [it.localized for it in report.iterations]
    return row


def bench_table(rows: list[dict]) -> str:
    head = f"{'Benchmark':<12} {'Lines':>5} {'Tests':>5} {'Succ':>4} {'Exp':>4} {'Line':>5} " \
           f"{'Loc Time (s)':>12} {'Synth Time (s)':>14} {'Total (s)':>9}  Patch"
    out = [head, "-" * len(head)]
    for r in rows:
        exp = "-" if r["exp"] is None else ("yes" if r["exp"] else "no")
        line = "-" if r["fault_line"] is None else str(r["fault_line"])
        t = r["timings"]
        out.append(f"{r['name']:<12} {r['lines']:>5} {r['tests']:>5} {'yes' if r['succ'] else 'no':>4} "
                   f"{exp:>4} {line:>5} {t['loc']:>12.2f} {t['synth']:>14.2f} {t['total']:>9.2f}  "
                   f"{r.get('patch') or r.get('reason', '')}")
    n = sum(r["succ"] for r in rows)
    out.append(f"repaired {n}/{len(rows)}")
    return "\n".join(out)


def cmd_bench(args) -> int:
    cfg = config_from(args)
    cfg.session()
    root = Path(args.root) if args.root else DEFAULT_ROOT
    try:
        corpus = load_corpus(root, args.only)
    except (OSError, ir.IRSyntaxError, ir.IRValidationError, ValueError, KeyError) as exc:
        raise InputError(str(exc)) from None
    paths = [str(b.path) for b in corpus]
    start = time.perf_counter()
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(bench_one, paths, [cfg] * len(paths)))
    else:
        rows = [bench_one(p, cfg) for p in paths]
    data = {"config": cfg.to_dict(), "benchmarks": rows,
            "summary": {"total": len(rows), "repaired": sum(r["succ"] for r in rows)},
            "timings": {"wall": round(time.perf_counter() - start, 3)}}
    text = json.dumps(data, indent=2, sort_keys=True)
    if args.json_out:
        Path(args.json_out).write_text(text + "\n")
    _emit(args, bench_table(rows), data)
    return EXIT_OK if all(r["succ"] for r in rows) else EXIT_FAILED


COMMANDS = {"repair": cmd_repair, "localize": cmd_localize, "check": cmd_check, "bench": cmd_bench}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverUnavailable as exc:
        print(f"error: solver unavailable: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (SolverError, LocalizationTimeout) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
