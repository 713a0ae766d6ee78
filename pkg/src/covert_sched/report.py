"""Pass/fail report shared by the structure verifiers."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    witness: str = ""


@dataclass
class StructureReport:
    """Ordered list of named checks; every failure carries a witness string."""

    checks: list = field(default_factory=list)

    def add(self, name: str, passed: bool, witness: str = "") -> None:
        if not passed and not witness:
            raise ValueError(f"failing check {name!r} needs a witness")
        self.checks.append(Check(name, bool(passed), witness))

    def extend(self, other: "StructureReport", prefix: str = "") -> "StructureReport":
        for c in other.checks:
            self.checks.append(Check(prefix + c.name, c.passed, c.witness))
        return self

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def summary(self) -> tuple[int, int]:
        return sum(c.passed for c in self.checks), len(self.checks)

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["check", "pass", "witness"])
        for c in self.checks:
            w.writerow([c.name, int(c.passed), c.witness])
        return buf.getvalue()
