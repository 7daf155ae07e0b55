"""Trajectory fans from the learned policy and from Gaussian steering noise,
with the share of reachable cells each one visits."""
import numpy as np

from _common import ACTIONS, OUT, P, desk_model, desk_stack
from cumppi.metrics import coverage_percent
from cumppi.render import render_fan
from cumppi.sampling import GaussianSamplerConfig, sample_cuniform, sample_gaussian

stack = desk_stack(15)
net = desk_model()
n = 10_000
batches = {
    "cuniform": sample_cuniform(net, ACTIONS, np.zeros(3), 15, n, P, np.random.default_rng(1)),
    "gaussian-0.1": sample_gaussian(np.zeros(15), GaussianSamplerConfig(0.1), n, np.random.default_rng(1), p=P),
    "gaussian-0.05": sample_gaussian(np.zeros(15), GaussianSamplerConfig(0.05), n, np.random.default_rng(1), p=P),
}
for name, b in batches.items():
    cov = coverage_percent(stack, b)
    print(f"{name:14s} coverage {cov.percent:6.2f}%   x-y only {cov.percent_2d:6.2f}%")
    render_fan(b.states, b.sources, OUT / f"fan_{name}", max_lines=1000)
print(f"images in {OUT}")
