import time

import numpy as np
import pytest

from causaldecomp.bootstrap import BootstrapConfig
from causaldecomp.dataset import Dataset, RoleSpec
from causaldecomp.simulation import (PUBLISHED_DELTAS, ScenarioConfig, calibrate_scenario,
                                     run_simulation)

# Fixed before any simulation was run; shared by every simulation-scale check.
SIM_SEED = 20240917
SIM_M = 200
SIM_B = 500


def linear_data(n, seed=0, mediator="continuous", c4=0.52, n_cov=1):
    """Draws from a small linear structural model with an exposure-by-mediator term."""
    rng = np.random.default_rng(seed)
    R = (rng.random(n) < 0.5).astype(float)
    cov = {f"C{j + 1}": rng.normal(50.0 - 2.0 * (1 - R), 10.0) for j in range(n_cov)}
    csum = sum(cov.values()) if cov else 0.0
    S = 1.0 - 0.3 * R + 0.02 * csum + rng.standard_normal(n)
    lin = 0.2 + 0.6 * R + 0.01 * csum - 0.2 * S
    if mediator == "continuous":
        M = lin + rng.standard_normal(n)
    else:
        M = (rng.random(n) < 1.0 / (1.0 + np.exp(-lin))).astype(float)
    Y = 8.0 - 1.0 * R + 0.4 * S + (-0.9 + c4 * R) * M - 0.02 * csum + rng.standard_normal(n)
    cols = {"R": R, "S": S, "M": M, "Y": Y, **cov}
    spec = RoleSpec("R", "Y", [("M", mediator)], ["S"], list(cov))
    return Dataset.from_columns(cols), spec


def discrete_data(n, seed=0, n_mediators=1):
    """Binary R, C, S and mediators with cell-dependent probabilities; continuous Y."""
    rng = np.random.default_rng(seed)
    R = (rng.random(n) < 0.5).astype(float)
    C = (rng.random(n) < 0.4 + 0.2 * R).astype(float)
    S = (rng.random(n) < 0.3 + 0.2 * R + 0.2 * C).astype(float)
    cols = {"R": R, "C": C, "S": S}
    meds = []
    prev = S
    for j in range(n_mediators):
        name = f"M{j + 1}" if n_mediators > 1 else "M"
        p = 0.25 + 0.3 * R + 0.15 * C + 0.2 * prev - 0.1 * R * C
        cols[name] = (rng.random(n) < p).astype(float)
        prev = cols[name]
        meds.append(name)
    y = 1.0 + 0.5 * R + 0.8 * S - 0.4 * C + rng.standard_normal(n)
    for j, name in enumerate(meds):
        y = y + (1.0 - 0.3 * j) * cols[name] + 0.7 * R * cols[name] - 0.3 * S * cols[name]
    cols["Y"] = y
    return Dataset.from_columns(cols), meds


@pytest.fixture
def continuous_case():
    return linear_data(400, seed=1)


@pytest.fixture
def binary_case():
    return linear_data(400, seed=2, mediator="binary")


def calibrated(kind, n, ratio):
    """Scenario calibrated to ``ratio`` with the tabulated disparity reduction."""
    base = ScenarioConfig.default(kind, n=n, seed=SIM_SEED)
    return calibrate_scenario(base, target_ratio=ratio, target_delta=PUBLISHED_DELTAS[kind][ratio])


@pytest.fixture(scope="session")
def criterion6_run():
    """Continuous mediator, n = 1000, r = 2: report and wall-clock seconds."""
    start = time.perf_counter()
    cfg = calibrated("continuous", 1000, 2.0)
    report = run_simulation(cfg, [1, (2, "original"), 4, 5], M=SIM_M,
                            boot=BootstrapConfig(SIM_B, seed=SIM_SEED))
    return report, time.perf_counter() - start


@pytest.fixture(scope="session")
def criterion6_report(criterion6_run):
    return criterion6_run[0]


CRITERIA: dict[int, tuple[bool, str]] = {}


def record(number: int, passed: bool, detail: str) -> None:
    """Store one acceptance verdict; printed in the terminal summary."""
    CRITERIA[number] = (bool(passed), detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        passed, detail = CRITERIA[number]
        terminalreporter.write_line(
            f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
