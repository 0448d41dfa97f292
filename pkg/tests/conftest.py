import pytest

CRITERIA = {
    1: "energy inequality and second-order residual",
    2: "monotone decay and Poincare bound",
    3: "monotonicity inequalities on random pairs",
    4: "Gronwall stability of paired runs",
    5: "oracle equivalence",
    6: "operator algebra",
    7: "exact heat limit",
    8: "frequency split",
    9: "K1/K2 split",
}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number n")
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n = marker.args[0]
    entry = item.config._criteria.setdefault(n, {"ok": True, "details": [], "seen": False})
    if report.when == "call" or report.failed:
        entry["seen"] = True
        entry["ok"] &= report.passed
    if report.when == "call":
        entry["details"] += [v for k, v in item.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "_criteria", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        entry = results.get(n)
        if entry is None or not entry["seen"]:
            continue
        status = "PASS" if entry["ok"] else "FAIL"
        detail = "; ".join(entry["details"])
        terminalreporter.write_line(f"criterion {n} [{CRITERIA[n]}]: {status}" + (f"  ({detail})" if detail else ""))


@pytest.fixture
def detail(record_property):
    """Attach a short measured value to the criterion summary line."""

    def add(text):
        record_property("detail", text)

    return add
