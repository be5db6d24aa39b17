import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "repo",
    deadline=None,
    max_examples=25,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def p5():
    from oampump.model import RiceMeleParams

    return RiceMeleParams(5.0, 1.0)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)


_verdicts = []


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        status = "PASS" if report.passed else "FAIL"
        _verdicts.append(f"{status} criterion {props['criterion']}: {props.get('detail', '')}".rstrip())


def pytest_terminal_summary(terminalreporter):
    if _verdicts:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_verdicts, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
