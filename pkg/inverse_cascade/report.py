"""Diagnostics report: named checks with value, target, tolerance and verdict."""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

CSV_COLUMNS = ("check_id", "value", "target", "tol", "pass")
RELATIONS = ("eq", "le", "ge", "report")


def format_number(value: Optional[float]) -> str:
    if value is None:
        return ""
    return "%.17g" % value


@dataclass
class Check:
    check_id: str
    value: float
    target: float
    tol: float
    relation: str = "eq"

    @property
    def passed(self) -> Optional[bool]:
        """None for report-only entries."""
        if self.relation == "report":
            return None
        if math.isnan(self.value):
            return False
        if self.relation == "le":
            return self.value <= self.target + self.tol
        if self.relation == "ge":
            return self.value >= self.target - self.tol
        return abs(self.value - self.target) <= self.tol

    def row(self) -> List[str]:
        verdict = {None: "report", True: "pass", False: "fail"}[self.passed]
        return [self.check_id, format_number(self.value), format_number(self.target), format_number(self.tol), verdict]


@dataclass
class FitSummary:
    slope: float
    stderr: float
    points: int

    @property
    def interval(self) -> tuple:
        """95% normal-approximation interval of the slope."""
        half = 1.96 * self.stderr
        return self.slope - half, self.slope + half


@dataclass
class DiagnosticsReport:
    provenance: Dict[str, str] = field(default_factory=dict)
    checks: List[Check] = field(default_factory=list)
    fits: Dict[str, FitSummary] = field(default_factory=dict)
    failed_stage: Optional[str] = None

    def add(self, check_id: str, value: float, target: float, tol: float = 0.0, relation: str = "eq") -> Check:
        if relation not in RELATIONS:
            raise ValueError(f"relation must be one of {RELATIONS}, got {relation!r}")
        if any(c.check_id == check_id for c in self.checks):
            raise ValueError(f"check {check_id!r} already recorded")
        check = Check(check_id, float(value), float(target), float(tol), relation)
        self.checks.append(check)
        level = logging.INFO if check.passed is not False else logging.WARNING
        logging.log(level, f"{check_id}: {format_number(check.value)} (target {format_number(check.target)}, tol {format_number(check.tol)})")
        return check

    def note(self, check_id: str, value: float, target: float = math.nan) -> Check:
        return self.add(check_id, value, target, math.nan, "report")

    def add_fit(self, name: str, slope: float, stderr: float, points: int) -> None:
        self.fits[name] = FitSummary(slope, stderr, points)

    def fail_stage(self, stage: str, error: Exception) -> None:
        self.failed_stage = stage
        self.add(f"stage.{stage}", math.nan, math.nan, math.nan, "le")
        logging.error(f"stage {stage} failed: {error}")

    def get(self, check_id: str) -> Check:
        for check in self.checks:
            if check.check_id == check_id:
                return check
        raise KeyError(check_id)

    @property
    def failures(self) -> List[Check]:
        return [c for c in self.checks if c.passed is False]

    @property
    def passed(self) -> bool:
        return self.failed_stage is None and not self.failures

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for check in self.checks:
                writer.writerow(check.row())
        logging.info(f"report written to {path} ({len(self.checks)} checks, {len(self.failures)} failing)")
        return path

    def summary(self) -> Dict[str, object]:
        return {
            "provenance": dict(self.provenance),
            "checks": len(self.checks),
            "failures": [c.check_id for c in self.failures],
            "failed_stage": self.failed_stage,
            "fits": {
                name: {"slope": fit.slope, "stderr": fit.stderr, "points": fit.points, "interval": list(fit.interval)}
                for name, fit in self.fits.items()
            },
        }


def read_csv(path: Union[str, Path]) -> List[Dict[str, str]]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))
