"""Collects one pass/fail line per acceptance criterion for the terminal summary."""
from __future__ import annotations

RESULTS: dict[str, tuple[bool, str]] = {}


def report(criterion: str, ok: bool, detail: str) -> bool:
    RESULTS[criterion] = (bool(ok), detail)
    print(f"{criterion} {'PASS' if ok else 'FAIL'}: {detail}")
    return bool(ok)
