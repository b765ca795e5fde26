import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from trps.config import PRESETS
from trps.model import SystemParams, simulate
from trps.spectrum import integration_horizon_ps, sampling_step_limit_ps

settings.register_profile(
    "default", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

FIG1 = PRESETS["fig1_res5"].params
FIG3 = PRESETS["fig3_fano"].params
TLS = PRESETS["figS4_tls"].params


@pytest.fixture(scope="session")
def fig1():
    return FIG1


@pytest.fixture(scope="session")
def fig3():
    return FIG3


@pytest.fixture(scope="session")
def tls():
    return TLS


def grid_for(params: SystemParams, gamma_s: float, t_max_ps=None):
    """Trajectory grid meeting the sampling rule, up to the horizon or ``t_max_ps``."""
    h = sampling_step_limit_ps(params, gamma_s)
    t_max = integration_horizon_ps(params, gamma_s) if t_max_ps is None else t_max_ps
    return np.arange(int(np.ceil(t_max / h)) + 1) * h


@pytest.fixture(scope="session")
def fig1_run():
    times = grid_for(FIG1, 5.0)
    states, traj = simulate(FIG1, times)
    return states, traj


# -- acceptance summary ---------------------------------------------------

ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
