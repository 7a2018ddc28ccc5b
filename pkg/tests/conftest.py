import re

# Ensure numba kernels are compiled once up front so individual test timings
# are meaningful.
import esnchaos  # noqa: F401


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one PASS/FAIL line per acceptance criterion."""
    results = {}
    for outcome, passed in (("passed", True), ("failed", False)):
        for report in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py" not in report.nodeid:
                continue
            match = re.search(r"test_criterion_(\d+)", report.nodeid)
            if not match:
                continue
            number = int(match.group(1))
            results[number] = results.get(number, True) and passed
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(results):
        status = "PASS" if results[number] else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {status}")
