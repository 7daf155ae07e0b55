"""Shared setup for the demo scripts: the desk-scale stack and a cached model."""
from pathlib import Path

import numpy as np

from cumppi.dynamics import VehicleParams
from cumppi.levelset import Resolution, build_level_sets
from cumppi.policy import ActionSet, PolicyNetwork, TrainConfig, load_model, save_model, train

OUT = Path(__file__).parent / "out"
P = VehicleParams()
ACTIONS = ActionSet.uniform(P.delta_max, 45)
RES = Resolution(0.1, 0.1, np.deg2rad(9.0))


def desk_stack(n_steps=15):
    return build_level_sets(np.zeros(3), ACTIONS, P, RES, n_steps, expand_from="state")


def desk_model(verbose=True):
    """Train once (about half a minute) and reuse ``out/model.cunn`` afterwards."""
    OUT.mkdir(exist_ok=True)
    path = OUT / "model.cunn"
    if path.exists():
        return load_model(path)
    stack = desk_stack(15)
    net = PolicyNetwork((4, 64, 64, 45), batchnorm=False)
    if verbose:
        print(f"training on {len(stack)} level sets, {sum(stack.sizes)} cells ...")
    train(net, stack, ACTIONS, P, TrainConfig(lr=1e-3, epochs=200, k_neighbors=8, beta_assign=5.0))
    save_model(net, path)
    return net
