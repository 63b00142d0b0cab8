"""Report-only validation results shared by segmentation and polycube checks."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Violation:
    rule: int | str
    message: str
    where: tuple = ()


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, rule, message, where=()):
        self.violations.append(Violation(rule, message, tuple(where)))

    def by_rule(self, rule) -> list[Violation]:
        return [v for v in self.violations if v.rule == rule]

    def __str__(self) -> str:
        if self.ok:
            return "no violations"
        return "\n".join(f"[{v.rule}] {v.message}" for v in self.violations)
