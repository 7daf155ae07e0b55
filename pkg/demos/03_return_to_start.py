"""Drive a full loop back to the start pose.  With small steering noise plain
MPPI rarely finds the tight turn; a policy-sampled nominal does."""
import numpy as np

from _common import ACTIONS, OUT, P, desk_model
from cumppi.control import Controller, MppiConfig, run_episode
from cumppi.render import render_episode
from cumppi.world import World, WorldConfig

net = desk_model()
world = World(WorldConfig(goal=(0.0, 0.0, 0.0), goal_metric="c2c", lam_terminal=20.0, lam_obs=0.0,
                          goal_radius=0.2, goal_from_step=1, step_budget=60))
cfg = MppiConfig(sigma=0.05, n_samples=1000, horizon=23)

for method in ("mppi", "log-mppi", "cu-mppi", "cu-logmppi"):
    ctl = Controller(method, cfg, P, net, ACTIONS)
    eps = [run_episode(world, ctl, np.random.default_rng(seed), P) for seed in range(10)]
    wins = sum(e.outcome == "success" for e in eps)
    print(f"{method:11s} {wins}/10 back at the start")
    render_episode(eps[0].world, eps[0].states, method, OUT / f"return_{method}", px_per_m=60)
