import sys
from pathlib import Path

# make the shared brute-force oracles importable as plain modules
sys.path.insert(0, str(Path(__file__).parent))


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import RESULTS
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(RESULTS):
        ok, detail = RESULTS[k]
        terminalreporter.write_line(f"ACCEPTANCE {k:>2} {'PASS' if ok else 'FAIL'}  {detail}")
