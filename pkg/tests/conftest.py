"""Collects acceptance verdicts and prints them at the end of the session."""

ACCEPTANCE = {}


def record(n: int, ok: bool, detail: str) -> bool:
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE.setdefault(n, []).append((ok, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        for _, line in ACCEPTANCE[n]:
            terminalreporter.write_line(line)
