"""Test-driven fault localization and repair for a small object-oriented IR."""

from .driver import Failed, RepairConfig, RepairReport, Repaired, repair
from .ir import Program, Sig, parse_program
from .testkit import ExecBounds, UnitTest, load_tests

__all__ = ["ExecBounds", "Failed", "Program", "RepairConfig", "RepairReport", "Repaired", "Sig",
           "UnitTest", "load_tests", "parse_program", "repair"]
__version__ = "0.1.0"
