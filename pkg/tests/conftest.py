import numpy as np
import pytest

from solaruav.radio import CoverageMap, build_coverage_map
from solaruav.scenario import HourlyDemand, Scenario, desk_scenario


@pytest.fixture(scope="session")
def desk():
    return desk_scenario()


@pytest.fixture(scope="session")
def desk_map(desk):
    return build_coverage_map(desk)


def flat_scenario(N, T, start_hour=0.0, n_users=10, p_min=0.85, **kw):
    """Scenario with a constant user count, for hand-built coverage maps."""
    demand = [HourlyDemand(n_users) for _ in range(T)]
    return Scenario(area_width=1000.0, area_height=1000.0, horizon_T=T, fleet_size_N=N,
                    start_hour=start_hour, demand=demand, p_min=p_min, **kw).validate()


def linear_map(scenario, per_uav=None):
    """Each serving UAV adds ``per_uav`` users, capped at the hour's demand."""
    T, N = scenario.horizon_T, scenario.fleet_size_N
    users = np.array([scenario.n_users(t) for t in range(T)])
    per = users / max(N, 1) if per_uav is None else np.full(T, per_uav)
    served = np.minimum(np.floor(np.outer(per, np.arange(N + 1))), users[:, None]).astype(int)
    return CoverageMap(served, users)


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
