import time

ACCEPTANCE: dict[int, tuple[bool, str]] = {}
SUITE_BUDGET_S = 300.0
_start = time.perf_counter()


def record(criterion: int, ok: bool, detail: str) -> None:
    """Remember and print one acceptance outcome."""
    ACCEPTANCE[criterion] = (ok, detail)
    print(f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def elapsed() -> float:
    return time.perf_counter() - _start


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    total = elapsed()
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    verdict = "PASS" if total < SUITE_BUDGET_S else "FAIL"
    terminalreporter.write_line(f"suite wall time: {verdict}  {total:.1f} s (budget {SUITE_BUDGET_S:.0f} s)")
