import math

import pytest

from pseudospin import core, semiclassical as sc


@pytest.fixture(scope="session")
def preset_params():
    return core.preset("paper-2016")


@pytest.fixture(scope="session")
def amp_half_pi(preset_params):
    return sc.calibrate_drive(preset_params, math.pi / 2)


@pytest.fixture(scope="session")
def fid_half_pi(preset_params, amp_half_pi):
    return sc.fid_at_angle(preset_params, math.pi / 2, 30e-6, amplitude=amp_half_pi)


@pytest.fixture(scope="session")
def lossless(preset_params):
    return preset_params.replace(kappa_int=0.0, kappa_ext=0.0, gamma=0.0)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(results):
        terminalreporter.write_line(results[k])
