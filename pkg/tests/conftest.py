import re

_RESULTS: dict[int, list] = {}

CRITERIA = {
    1: "domination chain",
    2: "tightness oracle",
    3: "fundamental-data consistency",
    4: "comparison lemma suite",
    5: "dominating-L correctness",
    6: "linearization bound",
    7: "closed-form criterion",
    8: "region subset",
    9: "FTS predicate",
    10: "determinism",
}

_PATTERN = re.compile(r"test_criterion_(\d+)_")


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    m = _PATTERN.search(report.nodeid.split("::")[-1])
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _RESULTS.setdefault(int(m.group(1)), []).append(report.outcome == "passed")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_RESULTS):
        ok = all(_RESULTS[num])
        terminalreporter.write_line(f"criterion {num:2d} {CRITERIA.get(num, '?')}: {'PASS' if ok else 'FAIL'}")
