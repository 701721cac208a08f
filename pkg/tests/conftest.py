"""Collects one verdict per acceptance criterion and prints them after the run."""

import pytest

VERDICTS: dict[int, list[tuple[bool, str]]] = {}


class Recorder:
    def __call__(self, criterion: int, ok: bool, detail: str) -> bool:
        VERDICTS.setdefault(criterion, []).append((bool(ok), detail))
        print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} {detail}")
        return bool(ok)


@pytest.fixture
def verdict():
    return Recorder()


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        parts = VERDICTS[n]
        ok = all(p[0] for p in parts)
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} | " + "; ".join(d for _, d in parts))
