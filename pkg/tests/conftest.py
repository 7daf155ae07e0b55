import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cumppi.dynamics import VehicleParams  # noqa: E402
from cumppi.levelset import LevelSetStack, Resolution, build_level_sets  # noqa: E402
from cumppi.policy import ActionSet, PolicyNetwork, TrainConfig, train  # noqa: E402

# desk-scale setup: 3 s trained horizon, one extra second for extrapolation
DESK_RES = Resolution(0.1, 0.1, np.deg2rad(9.0))
DESK_TRAIN_STEPS = 15
DESK_TEST_STEPS = 20
DESK_TRAIN = TrainConfig(lr=1e-3, epochs=200, k_neighbors=8, beta_assign=5.0, seed=0)

ACCEPTANCE: dict[str, tuple[bool | None, str]] = {}


def record(n, ok, detail: str) -> None:
    ACCEPTANCE[str(n)] = (ok, detail)


@pytest.fixture(scope="session")
def vehicle():
    return VehicleParams()


@pytest.fixture(scope="session")
def desk_actions(vehicle):
    return ActionSet.uniform(vehicle.delta_max, 45)


@pytest.fixture(scope="session")
def desk_stack(vehicle, desk_actions):
    """Level sets 0..20 (4 s); the first 16 cover the trained 3 s horizon."""
    return build_level_sets(np.zeros(3), desk_actions, vehicle, DESK_RES, DESK_TEST_STEPS, expand_from="state")


@pytest.fixture(scope="session")
def desk_model(vehicle, desk_actions, desk_stack):
    train_stack = LevelSetStack(desk_stack.levels[:DESK_TRAIN_STEPS + 1], desk_stack.resolution, desk_stack.origin)
    net = PolicyNetwork((4, 64, 64, 45), batchnorm=False, seed=0)
    t0 = time.perf_counter()
    train(net, train_stack, desk_actions, vehicle, DESK_TRAIN)
    net.train_seconds = time.perf_counter() - t0
    return net


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        status = "INFO" if ok is None else ("PASS" if ok else "FAIL")
        tr.write_line(f"criterion {n}: {status}  {detail}")
