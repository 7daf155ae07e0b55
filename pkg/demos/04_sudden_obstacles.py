"""Cross a 35 m x 10 m field of 20 discs that only appear when the vehicle
gets close.  Prints successes per reveal distance for two controllers."""
import sys

import numpy as np

from _common import ACTIONS, OUT, P, desk_model
from cumppi.control import Controller, MppiConfig, run_episode
from cumppi.render import render_episode
from cumppi.world import WorldConfig, generate_cluttered_world

n_envs = int(sys.argv[1]) if len(sys.argv) > 1 else 5
net = desk_model()
cfg = MppiConfig(sigma=0.05, n_samples=2500)

# reveal distance is measured from the footprint edge here
for reveal in (1.5, 1.0, 0.5):
    wc = WorldConfig(reveal_distance=reveal, reveal_from="footprint")
    line = []
    for method in ("mppi", "cu-logmppi"):
        ctl = Controller(method, cfg, P, net, ACTIONS)
        eps = [run_episode(generate_cluttered_world(20, seed=e, config=wc), ctl, np.random.default_rng(e), P)
               for e in range(n_envs)]
        line.append(f"{method} {sum(e.outcome == 'success' for e in eps)}/{n_envs}")
        render_episode(eps[0].world, eps[0].states, method, OUT / f"clutter_{method}_{reveal}")
    print(f"reveal {reveal:.2f} m: " + ", ".join(line), flush=True)
