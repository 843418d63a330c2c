import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from thimv.core import ScanGeometry

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    n = props["criterion"]
    ok = report.passed
    prev = _CRITERIA.get(n)
    detail = props.get("detail", "")
    if prev is None:
        _CRITERIA[n] = [ok, props.get("title", ""), [detail] if detail else []]
    else:
        prev[0] = prev[0] and ok
        if detail:
            prev[2].append(detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, title, details = _CRITERIA[n]
        line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}: {title}"
        if details:
            line += " | " + "; ".join(details)
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def ref_geometry():
    return ScanGeometry.reference()


@pytest.fixture(scope="session")
def small_geometry():
    return ScanGeometry.reference(n_elements=24, rx_aperture=8, n_scanlines=8, depth_min=25e-3, depth_max=35e-3)


TINY = {"n_elements": 48, "rx_aperture": 16, "n_scanlines": 32, "depth_decimation": 8}


@pytest.fixture(scope="session")
def tiny_config(tmp_path_factory):
    from thimv.pipeline import RunConfig

    return RunConfig(**TINY, out=str(tmp_path_factory.mktemp("tiny")))


@pytest.fixture(scope="session")
def tiny_sims(tiny_config):
    from thimv.pipeline import simulate_all

    return simulate_all(tiny_config)
