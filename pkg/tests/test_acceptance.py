"""Acceptance criteria at full budgets, one PASS/FAIL line per criterion.

Criterion 4 (second clause) and criterion 13 (median trend) are expected
to fail; see the decisions ledger for the analysis.
"""

from __future__ import annotations

import functools

import pytest

from rbwalk import verify

ACCEPTANCE_LINES: list[str] = []

RUNNERS = {1: verify.criterion_1, 2: verify.criterion_2, 3: verify.criterion_3, 4: verify.criterion_4,
           5: verify.criterion_5_6, 6: verify.criterion_5_6, 7: verify.criterion_7, 8: verify.criterion_8,
           9: verify.criterion_9, 10: verify.criterion_10, 11: verify.criterion_11,
           12: verify.criterion_12, 13: verify.criterion_13, 14: verify.criterion_14,
           15: verify.criterion_15}


@functools.lru_cache(maxsize=None)
def _parts(runner):
    return tuple(runner(verify.FULL))


def _criterion_parts(k: int):
    parts = _parts(RUNNERS[k])
    if RUNNERS[k] is verify.criterion_5_6:
        parts = tuple(r for r in parts if r.name.startswith(f"{k} "))
    return parts


@pytest.mark.parametrize("k", range(1, 16))
def test_criterion(k):
    parts = _criterion_parts(k)
    ok = all(r.ok for r in parts)
    line = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'} | " + " | ".join(r.line() for r in parts)
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line
