import pytest

ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record one pass/fail line per acceptance criterion."""

    def record(number, passed, detail):
        ACCEPTANCE[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})"
        with request.config.pluginmanager.get_plugin("capturemanager").global_and_fixture_disabled():
            print("\n" + ACCEPTANCE[number], flush=True)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
