"""Benchmark corpus: ``<root>/<name>/{program.np, tests.json, expected_patch.np}``."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from . import ir
from .ir import Program
from .testkit import load_tests

DEFAULT_ROOT = Path(__file__).parent / "benchmarks"


@dataclass(frozen=True)
class Benchmark:
    name: str
    path: Path
    program: Program
    tests: tuple
    expected: Program | None

    @property
    def fault_lines(self) -> list[int]:
        """Lines where the expected patch differs from the program."""
        if self.expected is None:
            return []
        p, e = self.program, self.expected
        return [l for l in p.all_lines() if not e.has_line(l) or p.stmt(l) != e.stmt(l)]

    @property
    def size(self) -> int:
        return len(self.program.all_lines())


def load_benchmark(path) -> Benchmark:
    path = Path(path)
    program = ir.parse_program((path / "program.np").read_text())
    tests = tuple(load_tests(program, path / "tests.json"))
    exp = path / "expected_patch.np"
    expected = ir.parse_program(exp.read_text()) if exp.exists() else None
    return Benchmark(path.name, path, program, tests, expected)


def benchmark_names(root=None) -> list[str]:
    root = Path(root or DEFAULT_ROOT)
    return sorted(d.name for d in root.iterdir() if (d / "program.np").exists())


def load_corpus(root=None, only=None) -> list[Benchmark]:
    root = Path(root or DEFAULT_ROOT)
    names = benchmark_names(root)
    if only:
        missing = sorted(set(only) - set(names))
        if missing:
            raise FileNotFoundError(f"unknown benchmarks: {', '.join(missing)}")
        names = [n for n in names if n in only]
    return [load_benchmark(root / n) for n in names]
