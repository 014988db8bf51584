import os

import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, label): acceptance criterion")


def pytest_collection_modifyitems(config, items):
    if os.environ.get("QEVAE_RUN_8Q") == "1":
        return
    skip = pytest.mark.skip(reason="8-qubit run is opt-in: set QEVAE_RUN_8Q=1")
    for item in items:
        if "eight_qubit" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def measured(request):
    """Dict whose contents are echoed in the acceptance summary line."""
    values = {}
    request.node.user_properties.append(("measured", values))
    return values


def pytest_itemcollected(item):
    m = item.get_closest_marker("criterion")
    if m is not None:
        item.user_properties.append(("criterion", m.args))


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _RESULTS[report.nodeid] = (*props["criterion"], report.outcome, props.get("measured", {}))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, label, outcome, values in sorted(_RESULTS.values(), key=lambda r: r[0]):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[outcome]
        detail = ", ".join(f"{k}={_fmt(v)}" for k, v in values.items())
        terminalreporter.write_line(f"{status} [{number:>2}] {label}" + (f" ({detail})" if detail else ""))


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)
