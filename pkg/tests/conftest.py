"""Shared pytest plumbing: the acceptance-criteria verdict table.

test_acceptance.py records one verdict per criterion; the hook below prints
the collected lines after the run so they are visible without -s.
"""

VERDICTS = []


def record_verdict(num: int, label: str, passed: bool) -> None:
    VERDICTS.append((num, label, bool(passed)))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for num, label, passed in sorted(VERDICTS):
        word = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[criterion {num:02d}] {word} - {label}")
