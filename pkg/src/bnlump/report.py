"""Verdict reports returned by every decision procedure."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Optional


class Verdict(str, enum.Enum):
    HOLDS = "holds"
    FAILS = "fails"
    INCONCLUSIVE = "inconclusive"

    @property
    def exit_code(self) -> int:
        return {"holds": 0, "fails": 1, "inconclusive": 2}[self.value]


def jsonable(obj: Any) -> Any:
    """Convert Fractions to ``"p/q"`` strings and containers to JSON types."""
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (set, frozenset)):
        return sorted(jsonable(v) for v in obj)
    return obj


@dataclass
class CheckReport:
    """Outcome of one check.

    ``witness`` is present whenever ``verdict`` is FAILS and carries both sides
    of the violated identity as exact rationals (``lhs``/``rhs``).
    ``details`` holds counts, extracted tables and flags such as full support.
    """

    property: str
    verdict: Verdict
    witness: Optional[dict] = None
    certificate: Optional[str] = None
    details: dict = field(default_factory=dict)
    elapsed: float = 0.0

    @property
    def holds(self) -> bool:
        return self.verdict is Verdict.HOLDS

    @property
    def fails(self) -> bool:
        return self.verdict is Verdict.FAILS

    def to_dict(self) -> dict:
        return {
            "property": self.property,
            "verdict": self.verdict.value,
            "witness": jsonable(self.witness),
            "certificate": self.certificate,
            "details": jsonable(self.details),
            "elapsed_seconds": round(self.elapsed, 6),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def render_text(self) -> str:
        d = self.to_dict()
        out = [f"{d['property']}: {d['verdict'].upper()}"]
        if d["certificate"]:
            out.append(f"  certificate: {d['certificate']}")
        if d["witness"]:
            out.append("  witness:")
            out.extend(_text_lines(d["witness"], 4))
        if d["details"]:
            out.append("  details:")
            out.extend(_text_lines(d["details"], 4))
        return "\n".join(out)


def _text_lines(obj, indent):
    pad = " " * indent
    lines = []
    for k, v in obj.items():
        if isinstance(v, dict) and v:
            lines.append(f"{pad}{k}:")
            lines.extend(_text_lines(v, indent + 2))
        else:
            lines.append(f"{pad}{k}: {json.dumps(v)}")
    return lines
