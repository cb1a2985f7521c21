import warnings

import pytest

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def taylor_report():
    from robustreg.studies import reproduce_taylor

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return reproduce_taylor()


@pytest.fixture(scope="session")
def shock_report():
    from robustreg.studies import reproduce_shock

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return reproduce_shock()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
