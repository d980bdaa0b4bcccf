import pytest

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict = {}


@pytest.fixture
def record():
    def _record(number: int, checks: list) -> None:
        """``checks`` is a list of ``(label, passed, measured)``; asserts they all hold."""
        ok = all(c[1] for c in checks)
        detail = "; ".join(f"{label}={measured}" + ("" if good else " (FAIL)")
                           for label, good, measured in checks)
        ACCEPTANCE[number] = (ok, detail)
        print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        failed = [c[0] for c in checks if not c[1]]
        assert ok, f"criterion {number} failed: {', '.join(failed)}"
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
