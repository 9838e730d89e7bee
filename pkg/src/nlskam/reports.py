"""Pass/fail report shared by the brute-force and randomized verifiers."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class VerifierReport:
    name: str
    checked: int = 0
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"checked": self.checked, "violations": self.violations}

    def record(self, witness, lhs, rhs):
        self.violations.append({"witness": witness, "lhs": float(lhs), "rhs": float(rhs)})

    def check(self, holds: bool, witness, lhs, rhs):
        self.checked += 1
        if not holds:
            self.record(witness, lhs, rhs)
