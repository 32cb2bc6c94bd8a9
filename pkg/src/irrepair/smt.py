"""SMT-LIB 2 client.

Formulas are built with the z3 Python bindings and either shipped as text to
an external solver process (``z3 -in``) or checked in-process.  Each query is
self-contained, so results only depend on the script and the seed.
"""

from __future__ import annotations

import logging
import os
import shutil
import subprocess
from dataclasses import dataclass, field

import z3

log = logging.getLogger(__name__)


class SolverUnavailable(RuntimeError):
    pass


class SolverError(RuntimeError):
    pass


@dataclass
class CheckResult:
    status: str  # sat | unsat | unknown | timeout
    values: dict = field(default_factory=dict)

    @property
    def sat(self) -> bool:
        return self.status == "sat"

    @property
    def unsat(self) -> bool:
        return self.status == "unsat"


# ---------------------------------------------------------------------------
# s-expressions


def parse_sexprs(text: str) -> list:
    """Parse a sequence of s-expressions into nested lists of atoms."""
    out, stack, i, n = [], [[]], 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c == "(":
            stack.append([])
            i += 1
        elif c == ")":
            if len(stack) == 1:
                raise SolverError(f"unbalanced solver output: {text[:200]!r}")
            done = stack.pop()
            stack[-1].append(done)
            i += 1
        elif c == '"':
            j = i + 1
            while j < n and not (text[j] == '"' and (j + 1 >= n or text[j + 1] != '"')):
                j += 2 if text[j] == '"' else 1
            stack[-1].append(text[i:j + 1])
            i = j + 1
        elif c == "|":
            j = text.index("|", i + 1)
            stack[-1].append(text[i:j + 1])
            i = j + 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "()":
                j += 1
            stack[-1].append(text[i:j])
            i = j
    if len(stack) != 1:
        raise SolverError(f"unbalanced solver output: {text[:200]!r}")
    out.extend(stack[0])
    return out


def value_of(sx):
    """Python value of a solver literal (ints, booleans, negations)."""
    if isinstance(sx, str):
        if sx == "true":
            return True
        if sx == "false":
            return False
        try:
            return int(sx)
        except ValueError:
            raise SolverError(f"unsupported literal {sx!r}") from None
    if len(sx) == 2 and sx[0] == "-":
        return -value_of(sx[1])
    raise SolverError(f"unsupported value {sx!r}")


def _z3_value(v):
    if z3.is_true(v):
        return True
    if z3.is_false(v):
        return False
    if z3.is_int_value(v):
        return v.as_long()
    raise SolverError(f"unsupported model value {v}")


# ---------------------------------------------------------------------------


class SolverSession:
    """One solver endpoint with fixed seed and timeout.

    ``backend`` is ``"process"`` (external binary), ``"api"`` (bindings) or
    ``"auto"`` (binary when one is found, else bindings).
    """

    def __init__(self, path: str | None = None, seed: int = 0, timeout: float = 60.0,
                 backend: str = "auto", logic: str | None = None):
        self.seed = seed
        self.timeout = timeout
        self.logic = logic
        self.queries = 0
        if backend not in ("auto", "process", "api"):
            raise ValueError(f"unknown backend {backend}")
        binary = path or os.environ.get("IRREPAIR_Z3") or shutil.which("z3")
        if path and not (os.path.isfile(path) or shutil.which(path)):
            raise SolverUnavailable(f"solver binary not found: {path}")
        if backend == "process" or (backend == "auto" and binary):
            if not binary:
                raise SolverUnavailable("no z3 binary on PATH")
            self.backend, self.binary = "process", shutil.which(binary) or binary
        else:
            self.backend, self.binary = "api", None

    def script(self, assertions, want=()) -> str:
        s = z3.Solver()
        s.add(*assertions)
        head = []
        if self.logic:
            head.append(f"(set-logic {self.logic})")
        head.append(f"(set-option :random-seed {self.seed})")
        head.append(f"(set-option :smt.random_seed {self.seed})")
        body = s.sexpr()
        tail = ["(check-sat)"]
        if want:
            tail.append("(get-value (" + " ".join(w.sexpr() for w in want) + "))")
        return "\n".join(head) + "\n" + body + "\n".join(tail) + "\n"

    def check(self, assertions, want=()) -> CheckResult:
        """Check the conjunction of ``assertions``; on sat, evaluate ``want``.

        ``values`` maps each index of ``want`` to a Python int/bool.
        """
        self.queries += 1
        want = list(want)
        if self.backend == "api":
            return self._check_api(assertions, want)
        return self._check_process(assertions, want)

    def _check_api(self, assertions, want) -> CheckResult:
        s = z3.Solver()
        s.set("random_seed", self.seed)
        s.set("timeout", int(self.timeout * 1000))
        s.add(*assertions)
        r = s.check()
        if r == z3.unsat:
            return CheckResult("unsat")
        if r == z3.unknown:
            reason = s.reason_unknown()
            return CheckResult("timeout" if "timeout" in reason or "canceled" in reason else "unknown")
        m = s.model()
        return CheckResult("sat", {i: _z3_value(m.eval(w, model_completion=True))
                                   for i, w in enumerate(want)})

    def _check_process(self, assertions, want) -> CheckResult:
        text = self.script(assertions, want)
        cmd = [self.binary, "-in", "-smt2", f"-T:{max(1, int(round(self.timeout)))}"]
        try:
            proc = subprocess.run(cmd, input=text, capture_output=True, text=True,
                                  timeout=self.timeout + 5)
        except FileNotFoundError as exc:
            raise SolverUnavailable(str(exc)) from None
        except subprocess.TimeoutExpired:
            return CheckResult("timeout")
        out = parse_sexprs(proc.stdout)
        if not out:
            if "timeout" in proc.stdout + proc.stderr:
                return CheckResult("timeout")
            raise SolverError(f"solver produced no output: {proc.stderr.strip()}")
        status = out[0]
        if isinstance(status, list) and status and status[0] == "error":
            raise SolverError(" ".join(map(str, status[1:])))
        if status == "timeout":
            return CheckResult("timeout")
        if status == "unknown":
            return CheckResult("unknown")
        if status == "unsat":
            return CheckResult("unsat")
        if status != "sat":
            raise SolverError(f"unexpected solver answer {status!r}")
        values = {}
        if want:
            if len(out) < 2 or not isinstance(out[1], list):
                raise SolverError(f"missing get-value response: {proc.stdout[:200]!r}")
            pairs = out[1]
            if pairs and pairs[0] == "error":
                raise SolverError(" ".join(map(str, pairs[1:])))
            for i, pair in enumerate(pairs):
                values[i] = value_of(pair[1])
        return CheckResult("sat", values)
