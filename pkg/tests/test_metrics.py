import json

import numpy as np
import pytest

from cumppi.dynamics import VehicleParams, rollout_batch
from cumppi.levelset import EmptyLevelError, LevelSet, LevelSetStack, Resolution, build_level_sets
from cumppi.metrics import (CoverageReport, avg_path_length, coverage_percent, occurrence_ratio, path_length,
                            success_rate, uniformity_percent, write_json)
from cumppi.policy import ActionSet
from oracles import entropy_ratio

P = VehicleParams()


@pytest.fixture(scope="module")
def stack():
    acts = ActionSet.uniform(P.delta_max, 7)
    return build_level_sets([0, 0, 0], acts, P, Resolution(0.1, 0.1, np.deg2rad(9)), 6, expand_from="state")


def test_ratio_examples():
    assert occurrence_ratio([2, 1, 1]) == pytest.approx(0.94639, abs=5e-6)
    assert occurrence_ratio([2, 1, 1]) == pytest.approx(entropy_ratio([2, 1, 1]), rel=1e-12)
    assert occurrence_ratio([5, 0, 0, 0]) == 0.0
    assert occurrence_ratio([3, 3, 3]) == pytest.approx(1.0)
    assert occurrence_ratio([7]) == 1.0
    with pytest.raises(EmptyLevelError):
        occurrence_ratio([])


def _enumerate(stack):
    """One trajectory per cell index, padded with the last cell of shorter levels."""
    n = max(stack.sizes)
    out = np.empty((n, len(stack), 3))
    for t, lv in enumerate(stack.levels):
        out[:, t] = lv.centers[np.minimum(np.arange(n), len(lv) - 1)]
    return out


def test_uniformity_exact_and_concentrated(stack):
    # one visit per cell on the largest level
    t = int(np.argmax(stack.sizes))
    rep = uniformity_percent(stack, _enumerate(stack))
    assert rep.ratios[t] == pytest.approx(1.0)
    assert rep.ratios[0] == 1.0
    same = np.tile(_enumerate(stack)[:1], (50, 1, 1))
    rep = uniformity_percent(stack, same)
    assert np.all(rep.ratios[1:] == 0.0)


def test_uniformity_invariances(stack):
    rng = np.random.default_rng(0)
    trajs = rollout_batch((0, 0, 0), rng.uniform(-P.delta_max, P.delta_max, (500, 6)), P)
    a = uniformity_percent(stack, trajs).ratios
    b = uniformity_percent(stack, trajs[rng.permutation(500)]).ratios
    c = uniformity_percent(stack, np.concatenate([trajs, trajs])).ratios
    np.testing.assert_allclose(a, b, atol=1e-12)
    np.testing.assert_allclose(a, c, atol=1e-12)
    assert np.all((a >= 0) & (a <= 1))


def test_uniform_cell_sampling_approaches_one(stack):
    rng = np.random.default_rng(1)
    m = 100_000
    trajs = np.empty((m, len(stack), 3))
    for t, lv in enumerate(stack.levels):
        trajs[:, t] = lv.centers[rng.integers(0, len(lv), m)]
    assert np.all(uniformity_percent(stack, trajs).ratios >= 0.99)


def test_uniformity_needs_horizon(stack):
    with pytest.raises(ValueError):
        uniformity_percent(stack, np.zeros((3, 2, 3)))


def test_uniformity_csv_json(stack, tmp_path):
    rep = uniformity_percent(stack, _enumerate(stack))
    rep.to_csv(tmp_path / "u.csv")
    lines = (tmp_path / "u.csv").read_text().splitlines()
    assert lines[0] == "level_t,ratio" and len(lines) == len(stack) + 1
    write_json(rep.to_dict(), tmp_path / "u.json")
    assert json.loads((tmp_path / "u.json").read_text())["n_samples"] == rep.n_samples


def test_coverage_zero_and_full(stack):
    assert coverage_percent(stack, np.zeros((0, len(stack), 3))).percent == 0.0
    rep = coverage_percent(stack, _enumerate(stack))
    assert rep.visited == rep.total == sum(stack.sizes)
    assert rep.percent == 100.0 and rep.percent_2d == 100.0


def test_coverage_straight_line():
    acts = ActionSet.uniform(P.delta_max, 5)
    st = build_level_sets([0, 0, 0], acts, P, Resolution(0.05, 0.05, np.deg2rad(4.5)), 15, expand_from="state")
    traj = rollout_batch((0, 0, 0), np.zeros((1, 15)), P)
    rep = coverage_percent(st, traj)
    # brute-force membership: which (level, cell) pairs lie within one diagonal of the state
    radius = st.resolution.diagonal()
    hits = 0
    for t, lv in enumerate(st.levels):
        d = np.hypot(lv.centers[:, 0] - traj[0, t, 0], lv.centers[:, 1] - traj[0, t, 1])
        dpsi = np.abs(np.angle(np.exp(1j * (lv.centers[:, 2] - traj[0, t, 2]))))
        hits += bool((np.sqrt(d**2 + dpsi**2) <= radius).any())
    assert rep.visited == hits == 16
    assert rep.percent == pytest.approx(100 * 16 / rep.total)


def test_coverage_far_states_miss():
    root = LevelSet(0, np.zeros((1, 3), int), np.zeros((1, 3)))
    st = LevelSetStack([root], Resolution(), np.zeros(3))
    assert coverage_percent(st, np.array([[[5.0, 5.0, 0.0]]])).visited == 0


def test_coverage_monotone(stack):
    rng = np.random.default_rng(2)
    trajs = rollout_batch((0, 0, 0), rng.uniform(-P.delta_max, P.delta_max, (2000, 6)), P)
    vals = [coverage_percent(stack, trajs[:n]).visited for n in (10, 100, 500, 2000)]
    assert vals == sorted(vals)
    rep = coverage_percent(stack, trajs)
    assert isinstance(rep, CoverageReport) and rep.visited <= rep.total


def test_success_rate_and_lengths():
    assert success_rate(["success"] * 3) == 1.0
    assert success_rate(["success", "collision"]) == 0.5
    with pytest.raises(ValueError):
        success_rate([])
    straight = rollout_batch((0, 0, 0), np.zeros((1, 15)), P)[0]
    assert path_length(straight) == pytest.approx(3.0)
    assert path_length(straight[:1]) == 0.0
    assert avg_path_length([("success", 2.0), ("collision", 9.0), ("success", straight)]) == pytest.approx(2.5)
    assert avg_path_length([("timeout", 1.0)]) is None
