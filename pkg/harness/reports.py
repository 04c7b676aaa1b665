"""
Verification reports and result files
"""

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from utils.serialization_utils import encode_real, write_json

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_VIOLATED = 1
EXIT_INVALID = 2
EXIT_DIVERGED = 3

VERDICT_PASS = "PASS"
VERDICT_FAIL = "FAIL"
VERDICT_DIVERGED = "DIVERGED"

SE_MULTIPLIER = 3.0
# absorbs rounding when a run is deterministic and SE_k = 0
BOUND_RELATIVE_SLACK = 1e-12


@dataclass
class BoundCheck:
    """Per-k comparison of the empirical mean against a bound sequence"""

    name: str
    bounds: np.ndarray
    means: np.ndarray
    standard_errors: np.ndarray

    @property
    def passes(self):
        limit = self.bounds * (1.0 + BOUND_RELATIVE_SLACK) + SE_MULTIPLIER * self.standard_errors
        return self.means <= limit

    @property
    def passed(self):
        return bool(np.all(self.passes))

    @property
    def violation_count(self):
        return int(np.sum(~self.passes))

    def rows(self, hex_floats=False):
        passes = self.passes
        return [
            {
                "k": k,
                "bound": encode_real(self.bounds[k], hex_floats),
                "mean": encode_real(self.means[k], hex_floats),
                "se": encode_real(self.standard_errors[k], hex_floats),
                "pass": bool(passes[k]),
            }
            for k in range(len(self.bounds))
        ]

    def to_dict(self, hex_floats=False):
        return {
            "name": self.name,
            "passed": self.passed,
            "violations": self.violation_count,
            "rows": self.rows(hex_floats),
        }


@dataclass
class StepCheck:
    """Almost-sure per-step claim V_{k+1} <= alpha V_k over every replication and step"""

    coefficient: float
    steps: int
    violations: int
    worst_ratio: float

    @property
    def passed(self):
        return self.violations == 0

    def to_dict(self, hex_floats=False):
        return {
            "coefficient": encode_real(self.coefficient, hex_floats),
            "steps": self.steps,
            "violations": self.violations,
            "worst_ratio": encode_real(self.worst_ratio, hex_floats),
            "passed": self.passed,
        }


@dataclass
class VerificationReport:
    """
    Outcome of a verification run

    The verdict is DIVERGED when more replications than allowed produced
    non-finite states, PASS when every bound check, step check, level check
    and tail check passed, and FAIL otherwise.
    """

    name: str
    algorithm: str
    certificate: dict
    replications: int
    diverged_count: int
    max_diverged_fraction: float
    config_hash: str
    config: dict
    checks: list = field(default_factory=list)
    step_check: StepCheck = None
    level_check: dict = None
    tail_check: dict = None

    @property
    def diverged_fraction(self):
        return self.diverged_count / self.replications if self.replications else 0.0

    @property
    def passed(self):
        outcomes = [check.passed for check in self.checks]
        if self.step_check is not None:
            outcomes.append(self.step_check.passed)
        for extra in (self.level_check, self.tail_check):
            if extra is not None:
                outcomes.append(bool(extra["passed"]))
        return all(outcomes)

    @property
    def verdict(self):
        if self.diverged_fraction > self.max_diverged_fraction:
            return VERDICT_DIVERGED
        return VERDICT_PASS if self.passed else VERDICT_FAIL

    @property
    def exit_code(self):
        return {VERDICT_PASS: EXIT_PASS, VERDICT_FAIL: EXIT_VIOLATED, VERDICT_DIVERGED: EXIT_DIVERGED}[self.verdict]

    def get_check(self, name):
        for check in self.checks:
            if check.name == name:
                return check
        return None

    def to_json_dict(self, hex_floats=False):
        return {
            "name": self.name,
            "algorithm": self.algorithm,
            "verdict": self.verdict,
            "exit_code": self.exit_code,
            "certificate": self.certificate,
            "replications": self.replications,
            "diverged_count": self.diverged_count,
            "checks": [check.to_dict(hex_floats) for check in self.checks],
            "step_check": None if self.step_check is None else self.step_check.to_dict(hex_floats),
            "level_check": self.level_check,
            "tail_check": self.tail_check,
            "config_hash": self.config_hash,
            "config": self.config,
        }

    def summary_line(self):
        failed = [check.name for check in self.checks if not check.passed]
        if self.step_check is not None and not self.step_check.passed:
            failed.append(f"per-step ({self.step_check.violations} violations)")
        for label, extra in (("level", self.level_check), ("tail", self.tail_check)):
            if extra is not None and not extra["passed"]:
                failed.append(label)
        detail = f" failed: {', '.join(failed)}" if failed else ""
        return (
            f"{self.name}: {self.verdict} ({self.algorithm}, alpha={self.certificate.get('alpha')}, "
            f"diverged {self.diverged_count}/{self.replications}){detail}"
        )


def output_paths(directory, name):
    """
    Result file locations for an experiment

    Returns:
        dict: {"trajectory", "summary", "report"} paths under directory/name
    """
    base = os.path.join(directory, name)
    return {
        "trajectory": os.path.join(base, "trajectory.csv"),
        "summary": os.path.join(base, "summary.json"),
        "report": os.path.join(base, "report.json"),
    }


def write_report(report, file_path, hex_floats=False):
    try:
        write_json(report.to_json_dict(hex_floats), file_path)
        logger.info(report.summary_line())
    except Exception as e:
        logger.error(f"Error writing verification report: {str(e)}")
        raise


def write_summary(summary, file_path):
    write_json(summary, file_path)
