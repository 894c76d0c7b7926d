import numpy as np
import pytest

from localtime import kernels


@pytest.fixture(params=kernels.available_backends())
def backend(request, monkeypatch):
    """Run a test once per kernel backend."""
    monkeypatch.setattr(kernels, "_impl", kernels.get_backend(request.param))
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_criteria = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("detail", "")
        _criteria[report.nodeid.split("::")[-1]] = (report.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criteria):
        outcome, detail = _criteria[name]
        number = int(name.split("_")[2])
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {name[len('test_criterion_NN_'):]}"
                                    + (f"  [{detail}]" if detail else ""))
