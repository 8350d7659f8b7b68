import pytest

# criterion number -> (title, list of (outcome, detail))
_CRITERIA: dict[int, tuple[str, list]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    number, title = marker.args
    details = [v for k, v in item.user_properties if k == "measured"]
    _CRITERIA.setdefault(number, (title, []))[1].append((report.outcome, "; ".join(details)))


@pytest.fixture
def measured(request):
    """Attach a measured-value note to the acceptance summary line."""

    def note(text: str) -> None:
        request.node.user_properties.append(("measured", text))

    return note


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, results = _CRITERIA[number]
        ok = all(o == "passed" for o, _ in results)
        notes = "; ".join(d for _, d in results if d)
        line = f"C{number} {'PASS' if ok else 'FAIL'}  {title}"
        if notes:
            line += f"  [{notes}]"
        terminalreporter.write_line(line)
