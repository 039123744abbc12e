"""Shared result model: check outcomes, findings, severity scale.

Kept separate from the engine so probe modules can produce results without
importing the scheduler.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

AREA_ORDER = ("NET", "DB", "OAUTH", "JWT", "WEB", "LOG")


class CheckStatus(enum.Enum):
    PASS = "Pass"
    FAIL = "Fail"
    NOT_ASSESSABLE = "NotAssessable"
    SKIPPED = "Skipped"


class Severity(enum.Enum):
    CRITICAL = "Critical"
    HIGH = "High"
    MEDIUM = "Medium"
    LOW = "Low"


def check_sort_key(check_id: str) -> tuple[int, int]:
    """Catalog order: areas as listed, then numeric within the area."""
    area, number = check_id.rsplit("-", 1)
    return (AREA_ORDER.index(area), int(number))


@dataclass
class CheckResult:
    """Outcome of one registry check.

    evidence is an ordered trail: requests sent, responses observed, values
    measured. Volatile values (timings, sequence numbers, token bytes) are
    kept out of evidence so identical target states produce identical trails;
    elapsed time lives in duration_ms only.
    """

    check_id: str
    status: CheckStatus
    evidence: list[str] = field(default_factory=list)
    component_id: Optional[str] = None
    duration_ms: int = 0

    def __post_init__(self) -> None:
        if self.status in (CheckStatus.PASS, CheckStatus.FAIL) and not self.evidence:
            raise ValueError(f"{self.check_id}: {self.status.value} requires evidence")


@dataclass(frozen=True)
class Finding:
    check_id: str
    severity: Severity
    title: str
    remediation: str
    component_id: Optional[str]
    evidence: tuple[str, ...]
