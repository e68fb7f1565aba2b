import numpy as np
import pytest

from singflow import RegularizationSpec, StepPolicy, lorenz4d_example, run_ensemble
from singflow.analysis import blowup_time
from singflow.regularize import SamplerSpec

X0 = np.array([0.4, 0.1, 0.2, 0.3])
LORENZ_POLICY = StepPolicy(c=0.02)
DESK_N = 10_000

_acceptance_lines = []


def record_acceptance(line):
    _acceptance_lines.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def lorenz():
    return lorenz4d_example()


@pytest.fixture(scope="session")
def t_b(lorenz):
    return blowup_time(lorenz, X0, LORENZ_POLICY)


@pytest.fixture(scope="session")
def direct_fine(lorenz, t_b):
    """Direct-mode desk ensemble at nu = 1e-6 observed at several times."""
    targets = [t_b + 0.1, t_b + 0.2, t_b + 0.4, 1.6, 2.0]
    spec = RegularizationSpec(mode="direct", nu=1e-6, seed=11)
    return run_ensemble(lorenz, spec, X0, DESK_N, targets, LORENZ_POLICY)


@pytest.fixture(scope="session")
def direct_coarse(lorenz):
    spec = RegularizationSpec(mode="direct", nu=1e-4, seed=12)
    return run_ensemble(lorenz, spec, X0, DESK_N, [1.6, 2.0], LORENZ_POLICY)


@pytest.fixture(scope="session")
def stochastic_pair(lorenz):
    out = []
    for seed, family in ((21, "cap"), (22, "gaussian")):
        spec = RegularizationSpec(mode="map_stochastic", nu=1e-5, seed=seed,
                                  sampler=SamplerSpec(family=family))
        out.append(run_ensemble(lorenz, spec, X0, DESK_N, [1.6, 2.0], LORENZ_POLICY))
    return out
