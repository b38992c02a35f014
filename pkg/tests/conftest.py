import math
import operator

import pytest

_LINES = []

_OPS = {"<=": operator.le, "<": operator.lt, ">": operator.gt, ">=": operator.ge, "==": operator.eq}


class Checks:
    """Named comparisons for one acceptance criterion, printed as one line."""

    def __init__(self, title):
        self.title = title
        self.items = []
        self.notes = []

    def add(self, label, value, op, threshold):
        ok = value is not None and not (isinstance(value, float) and math.isnan(value)) and _OPS[op](value, threshold)
        self.items.append((label, value, op, threshold, bool(ok)))
        return ok

    def note(self, label, value):
        """Reported only, never affects the outcome."""
        self.notes.append((label, value))

    @property
    def passed(self):
        return all(i[-1] for i in self.items)

    def line(self):
        def fmt(v):
            return f"{v:.3g}" if isinstance(v, float) else str(v)

        parts = [f"{lab} {fmt(v)} {op} {fmt(t)}{'' if ok else ' [FAIL]'}" for lab, v, op, t, ok in self.items]
        parts += [f"{lab} {fmt(v)} (reported)" for lab, v in self.notes]
        return f"{'PASS' if self.passed else 'FAIL'}  {self.title}: " + "; ".join(parts)

    def finish(self):
        line = self.line()
        print(line)
        _LINES.append(line)
        failed = [i[0] for i in self.items if not i[-1]]
        assert not failed, f"{self.title}: failed {failed}"


@pytest.fixture
def criterion():
    return Checks


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
