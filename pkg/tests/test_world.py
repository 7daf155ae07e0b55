import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from cumppi.dynamics import VehicleParams, rollout_batch
from cumppi.world import (GridParseError, Obstacle, OccupancyGrid, SimState, World, WorldConfig,
                          generate_cluttered_world, goal_cost, goal_distance, in_collision, load_grid,
                          local_costmap, obstacle_cost, parse_grid, reset_sim, step_sim,
                          trajectory_cost, write_episode_log, write_grid)
from oracles import trajectory_cost_loop

P = VehicleParams()
C = 1e3


def _line(xs, y=0.0):
    return np.array([[x, y, 0.0] for x in xs])


def _world(obstacles=(), **kw):
    return World(WorldConfig(**kw), [Obstacle(c, r, True) for c, r in obstacles])


# -- cost examples ------------------------------------------------------------

def test_free_world_zero_obstacle_cost():
    assert np.all(obstacle_cost(_line([0, 1, 2]), _world()) == 0)


def test_collision_latch_example():
    # obstacle overlapping only x = 2; later states are clear but stay latched
    w = _world([((2.0, 1.0), 0.9)])
    traj = _line([0, 1, 2, 3.5, 4.5])
    assert obstacle_cost(traj, w).tolist() == [0, 0, C, C, C]


def test_unrevealed_obstacle_costs_nothing():
    w = World(WorldConfig(), [Obstacle((2.0, 0.0), 0.5, revealed=False)])
    assert np.all(obstacle_cost(_line([0, 1, 2, 3]), w) == 0)


def test_goal_freeze_example():
    # goal at (3, 0); collision at t = 1 with distance 2.5
    w = _world([((0.5, 0.6), 0.5)], goal=(3.0, 0.0, 0.0))
    traj = _line([-1.0, 0.5, 1.5, 2.5])
    np.testing.assert_allclose(goal_cost(traj, w), [4.0, 2.5, 2.5, 2.5])


def test_goal_distance_decreasing_and_zero_at_goal():
    w = _world(goal=(3.0, 0.0, 0.0))
    d = goal_cost(_line(np.linspace(0, 3, 7)), w)
    assert np.all(np.diff(d) < 0) and d[-1] == 0.0


def test_two_state_example():
    w = _world(goal=(3.0, 0.0, 0.0), lam_obs=0.0, lam_goal=1.0)
    assert trajectory_cost(_line([1.0, 2.0]), w) == 4.0


def test_sitting_at_goal_costs_zero():
    w = _world(goal=(3.0, 0.0, 0.0))
    assert trajectory_cost(_line([3.0] * 5), w) == 0.0


def test_min_plus_sum_formula():
    w = _world(goal=(3.0, 0.0, 0.0), lam_obs=0.0)
    xs = [0.0, 0.5, 1.0, 1.5]
    d = 3.0 - np.array(xs)
    assert trajectory_cost(_line(xs), w) == pytest.approx(d.min() + d.sum(), abs=1e-12)


def test_truncation_ignores_later_states():
    w = _world(goal=(3.0, 0.0, 0.0))
    head = _line([1.0, 2.0, 2.9])
    a = np.concatenate([head, _line([5.0, 7.0])])
    b = np.concatenate([head, _line([-4.0, 9.0])])
    assert trajectory_cost(a, w) == trajectory_cost(b, w) == trajectory_cost(head, w)


def test_goal_from_step_skips_start():
    w = _world(goal=(0.0, 0.0, 0.0), goal_from_step=1, goal_metric="c2c", lam_obs=0.0, goal_radius=0.1)
    traj = _line([0.0, 0.2, 0.4])
    d = goal_distance(traj, w)
    assert trajectory_cost(traj, w) == pytest.approx(d[1] + d[1] + d[2])
    # inside the radius at t = 1: truncated there
    w = _world(goal=(0.0, 0.0, 0.0), goal_from_step=1, goal_metric="c2c", lam_obs=0.0, goal_radius=0.3)
    assert trajectory_cost(traj, w) == pytest.approx(2 * d[1])


def test_latch_monotone():
    rng = np.random.default_rng(0)
    w = _world([((1.0, 0.3), 0.4), ((2.0, -0.4), 0.3)])
    trajs = rollout_batch((0, 0, 0), rng.uniform(-0.5, 0.5, (300, 15)), P)
    c = obstacle_cost(trajs, w)
    first = np.argmax(c == C, axis=1)
    for row, f in zip(c, first):
        if (row == C).any():
            assert np.all(row[f:] == C)


@pytest.mark.parametrize("metric,goal_from", [("planar", 0), ("c2c", 0), ("c2c", 1)])
def test_cost_matches_per_state_oracle(metric, goal_from):
    rng = np.random.default_rng(42)
    w = World(WorldConfig(goal=(2.0, 0.5, 1.0), goal_metric=metric, goal_from_step=goal_from,
                          lam_terminal=20.0 if metric == "c2c" else 1.0, lam_obs=0.7, lam_goal=1.3),
              [Obstacle((1.2, 0.8), 0.4, True), Obstacle((1.5, -0.7), 0.5, True), Obstacle((0.6, 0.0), 0.2, False)])
    trajs = rollout_batch((0, 0, 0), rng.uniform(-P.delta_max, P.delta_max, (1000, 15)), P)
    got = trajectory_cost(trajs, w)
    want = np.array([trajectory_cost_loop(t, w) for t in trajs])
    assert np.all(np.abs(got - want) <= 1e-12 * np.maximum(1.0, np.abs(want)))
    assert (want >= C).any() and (want < C).any()


# -- costmap ------------------------------------------------------------------

def test_empty_costmap():
    cm = local_costmap(_world(), (0, 0, 0))
    assert not cm.grid.occupancy.any() and not cm.collision.any() and not cm.local.any()
    assert cm.grid.width == cm.grid.height == 60


def test_costmap_disc_matches_point_in_circle():
    w = _world([((0.3, -0.2), 0.7)])
    cm = local_costmap(w, (0.1, 0.05, 0.4))
    pts = cm.grid.cell_centers()
    want = np.hypot(pts[..., 0] - 0.3, pts[..., 1] + 0.2) <= 0.7
    np.testing.assert_array_equal(cm.grid.occupancy, want)
    assert cm.local.max() <= C / 10 + 1e-9


def test_obstacle_outside_window_absent():
    w = _world([((5.0, 5.0), 1.0)])
    assert not local_costmap(w, (0, 0, 0)).grid.occupancy.any()


def test_costmap_collision_agrees_with_exact_test():
    w = _world([((0.5, 0.0), 0.4)])
    cm = local_costmap(w, (0, 0, 0))
    rng = np.random.default_rng(0)
    xy = rng.uniform(-1.4, 1.4, (5000, 2))
    exact = in_collision(xy, w)
    raster, _ = cm.lookup(xy)
    gap = np.abs(np.hypot(xy[:, 0] - 0.5, xy[:, 1]) - 0.65)
    far = gap > 2 * w.config.costmap_resolution
    np.testing.assert_array_equal(raster[far], exact[far])


# -- simulation ---------------------------------------------------------------

def _sim(x=0.0, y=0.0, psi=0.0):
    s = np.array([x, y, psi])
    return SimState(s, s.copy())


def test_step_sim_running_and_terminal_error():
    w = _world(goal=(30.0, 0.0, 0.0))
    rng = np.random.default_rng(0)
    s = step_sim(_sim(), 0.0, w, P, rng)
    assert s.outcome == "running" and s.step == 1
    assert s.path_length == pytest.approx(0.2)
    with pytest.raises(RuntimeError):
        step_sim(SimState(s.true_state, s.believed_state, 1, "collision"), 0.0, w, P, rng)


def test_unrevealed_obstacle_still_collides():
    w = World(WorldConfig(reveal_distance=1e-3), [Obstacle((0.5, 0.0), 0.5, revealed=False)])
    s = step_sim(_sim(), 0.0, w, P, np.random.default_rng(0))
    assert s.outcome == "collision"


def test_reveal_just_inside_distance():
    w = World(WorldConfig(reveal_distance=0.5, goal=(30.0, 0.0, 0.0)), [Obstacle((2.0, 1.0), 0.5)])
    # after one step the vehicle sits at (0.2, 0); place the obstacle edge at 0.5 - eps
    eps = 1e-6
    w.obstacles[0].center = np.array([0.2 + 1.0 - eps, 0.0])
    s = step_sim(_sim(), 0.0, w, P, np.random.default_rng(0))
    assert w.obstacles[0].revealed and s.outcome == "running"
    w2 = World(WorldConfig(reveal_distance=0.5), [Obstacle((0.2 + 1.0 + eps, 0.0), 0.5)])
    step_sim(_sim(), 0.0, w2, P, np.random.default_rng(0))
    assert not w2.obstacles[0].revealed


def test_success_and_timeout():
    w = _world(goal=(0.4, 0.0, 0.0), goal_radius=0.3)
    assert step_sim(_sim(), 0.0, w, P, np.random.default_rng(0)).outcome == "success"
    w = _world(goal=(30.0, 0.0, 0.0), step_budget=2)
    rng = np.random.default_rng(0)
    s = step_sim(step_sim(_sim(), 0.0, w, P, rng), 0.0, w, P, rng)
    assert s.outcome == "timeout"


def test_noise_free_determinism_and_noise_scale():
    w = _world(noise_xy=0.0, noise_psi=0.0, goal=(30.0, 0.0, 0.0))
    s = reset_sim(w, np.random.default_rng(0))
    np.testing.assert_array_equal(s.true_state, s.believed_state)
    w = _world(goal=(30.0, 0.0, 0.0))
    rng = np.random.default_rng(1)
    errs = np.array([reset_sim(w, rng).believed_state for _ in range(4000)])
    np.testing.assert_allclose(errs.std(axis=0), [0.01, 0.01, 0.005], rtol=0.1)


def test_episode_log(tmp_path):
    s0 = _sim()
    s1 = SimState(np.array([0.2, 0, 0]), np.array([0.21, 0, 0]), 1, "success", 0.2)
    write_episode_log([(s0, 0.1), (s1, None)], tmp_path / "log.csv")
    lines = (tmp_path / "log.csv").read_text().splitlines()
    assert lines[0] == "step,x_true,y_true,psi_true,x_bel,y_bel,psi_bel,delta_cmd,outcome"
    assert lines[2].endswith(",,success")


# -- generator ----------------------------------------------------------------

def test_generator_properties():
    assert generate_cluttered_world(0, seed=3).obstacles == []
    a = generate_cluttered_world(30, seed=7)
    b = generate_cluttered_world(30, seed=7)
    ca = np.array([o.center for o in a.obstacles])
    np.testing.assert_array_equal(ca, [o.center for o in b.obstacles])
    d = np.hypot(*(ca[:, None] - ca[None]).transpose(2, 0, 1))
    assert d[np.triu_indices(30, 1)].min() >= 2.0
    for o in a.obstacles:
        assert min(np.hypot(*(o.center - a.start[:2])), np.hypot(*(o.center - a.goal[:2]))) >= 3.0
    assert not any(o.revealed for o in a.obstacles)
    with pytest.raises(RuntimeError):
        generate_cluttered_world(500, seed=0, max_attempts=2000)


def test_bounds_are_walls():
    w = generate_cluttered_world(0, extent=(10, 4))
    assert in_collision(np.array([[5.0, 0.1]]), w)[0]
    assert not in_collision(np.array([[5.0, 2.0]]), w)[0]


# -- grids --------------------------------------------------------------------

def test_parse_small_grid(tmp_path):
    g = parse_grid("# map\n2 2 0.5\n00\n00\n")
    assert g.width == g.height == 2 and not g.occupancy.any()
    g = parse_grid("3 2 1.0\n100\n001  # comment\n")
    # first listed row is the top (largest y)
    assert g.occupancy[1].tolist() == [True, False, False]
    assert g.occupancy[0].tolist() == [False, False, True]


@pytest.mark.parametrize("text,line,msg", [
    ("2 2 1\n00\n000\n", 3, "row has 3"),
    ("2 2 1\n00\n0x\n", 3, "invalid"),
    ("2 2\n00\n00\n", 1, "header"),
    ("2 1 1\n00\n00\n", 3, "more than"),
])
def test_parse_errors_carry_line(text, line, msg):
    with pytest.raises(GridParseError, match=rf"<grid>:{line}:.*{msg}"):
        parse_grid(text)


def test_parse_missing_rows():
    with pytest.raises(GridParseError, match="expected 3 rows"):
        parse_grid("2 3 1\n00\n")
    with pytest.raises(GridParseError, match="missing header"):
        parse_grid("# nothing\n")


@settings(max_examples=40, deadline=None)
@given(arrays(bool, st.tuples(st.integers(1, 12), st.integers(1, 12))), st.floats(0.01, 5.0))
def test_grid_roundtrip(tmp_path_factory, occ, res):
    path = tmp_path_factory.mktemp("g") / "g.txt"
    write_grid(OccupancyGrid(occ, res), path)
    back = load_grid(path)
    np.testing.assert_array_equal(back.occupancy, occ)
    assert back.resolution == res


def test_grid_collision():
    occ = np.zeros((10, 10), bool)
    occ[5, 5] = True
    w = World(WorldConfig(), grid=OccupancyGrid(occ, 0.1))
    assert in_collision(np.array([[0.55, 0.55]]), w)[0]
    assert in_collision(np.array([[0.55, 0.35 - 0.24]]), w)[0] == (0.5 - (0.35 - 0.24) < 0.25)
    assert not in_collision(np.array([[0.1, 0.1]]), w)[0]
    cm = local_costmap(w, (0.5, 0.5, 0))
    assert cm.lookup(np.array([0.55, 0.55]))[0]
