"""Check records and deterministic report serialization."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any, Iterable

import numpy as np

__all__ = ["Check", "emit_report", "strip_timestamp", "write_csv", "to_jsonable", "dumps_line"]

TOOL = "pharmonic"


@dataclass
class Check:
    """One graded check: ``passed`` iff ``value <= tolerance`` (when enforced)."""

    family: str
    name: str
    value: float | None
    tolerance: float | None
    enforced: bool = True
    note: str = ""

    @property
    def margin(self) -> float | None:
        if self.value is None or self.tolerance is None:
            return None
        return float(self.tolerance - self.value)

    @property
    def passed(self) -> bool:
        if not self.enforced:
            return True
        if self.value is None or self.tolerance is None:
            return False
        return bool(self.value <= self.tolerance)

    def to_dict(self) -> dict:
        out = {
            "enforced": self.enforced,
            "family": self.family,
            "margin": self.margin,
            "name": self.name,
            "passed": self.passed,
            "tolerance": self.tolerance,
            "value": self.value,
        }
        if self.note:
            out["note"] = self.note
        return out


def to_jsonable(obj: Any) -> Any:
    """Convert numpy containers and scalars; non-finite floats become ``None``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return obj


def _dump(obj) -> str:
    """Compact JSON with sorted keys and floats printed as ``%.17g``."""
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        text = "%.17g" % obj
        return text if ("." in text or "e" in text) else text + ".0"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_dump(obj[k])}" for k in sorted(obj)) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_dump(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_line(obj) -> str:
    """Compact single-line JSON (for JSON-lines streams)."""
    return _dump(to_jsonable(obj))


def emit_report(
    command: str,
    config: dict,
    results: dict | None = None,
    checks: Iterable[Check] = (),
    version: str | None = None,
    timestamp: str | None = None,
) -> str:
    """Serialize a run as JSON.

    Top-level keys appear in a fixed order and the timestamp sits alone on
    the second line, so ``diff`` after dropping that line compares runs.
    """
    from . import __version__

    checks = list(checks)
    body = {
        "command": command,
        "config": to_jsonable(config),
        "results": to_jsonable(results or {}),
        "checks": [c.to_dict() for c in checks],
        "passed": all(c.passed for c in checks),
        "tool": TOOL,
        "version": version or __version__,
    }
    ts = timestamp or datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    lines = ["{", f'"timestamp": {json.dumps(ts)},']
    for i, key in enumerate(("tool", "version", "command", "config", "results", "checks", "passed")):
        sep = "," if i < 6 else ""
        lines.append(f"{json.dumps(key)}: {_dump(to_jsonable(body[key]))}{sep}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def strip_timestamp(text: str) -> str:
    return "\n".join(line for line in text.splitlines() if not line.startswith('"timestamp"'))


def write_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow(["" if row.get(c) is None else ("%.17g" % row[c] if isinstance(row[c], float) else row[c]) for c in columns])
    return buf.getvalue()
