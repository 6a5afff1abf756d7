import re
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

CRITERION_TITLES = {
    1: "PER oracle equivalence",
    2: "error-rate table arithmetic",
    3: "CTC brute-force equivalence",
    4: "gradient checks",
    5: "objective weight endpoints",
    6: "state-expansion invariants",
    7: "recognizer toy overfit",
    8: "generator toy overfit",
    9: "end-to-end conversion contract",
    10: "F0 pipeline",
    11: "listening-service protocol",
}


def pytest_terminal_summary(terminalreporter):
    statuses = {}
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            match = re.search(r"test_acceptance\.py::test_criterion_(\d+)", nodeid)
            if match and getattr(report, "when", "call") == "call":
                statuses[int(match.group(1))] = outcome
    if not statuses:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(statuses):
        verdict = "PASS" if statuses[number] == "passed" else "FAIL"
        title = CRITERION_TITLES.get(number, "")
        terminalreporter.write_line(f"criterion {number:2d} ({title}): {verdict}")
