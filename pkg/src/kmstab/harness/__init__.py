"""Verification suites, counterexample reproductions, reports and the command line."""

from .counterexamples import run_counterexample_rectangle, run_counterexample_segments
from .report import Report, Table, emit_report, read_report
from .suites import (
    FAIL,
    PASS,
    SKIPPED,
    ExperimentSpec,
    Verdict,
    summarize,
    verify_comparison_suite,
    verify_epsilon_minimizer,
    verify_geometry_suite,
    verify_theorem_bound,
)

__all__ = [
    "FAIL",
    "PASS",
    "SKIPPED",
    "ExperimentSpec",
    "Report",
    "Table",
    "Verdict",
    "emit_report",
    "read_report",
    "run_counterexample_rectangle",
    "run_counterexample_segments",
    "summarize",
    "verify_comparison_suite",
    "verify_epsilon_minimizer",
    "verify_geometry_suite",
    "verify_theorem_bound",
]
