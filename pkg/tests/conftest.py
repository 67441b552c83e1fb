import re

_verdicts = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    key = (int(m.group(1)), m.group(2).replace("_", " "))
    if report.failed or report.skipped:
        _verdicts[key] = "FAIL"
    elif report.when == "call":
        _verdicts.setdefault(key, "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for (num, name), verdict in sorted(_verdicts.items()):
        terminalreporter.write_line(f"criterion {num:2d}  {name:<34} {verdict}")
