"""Train the action policy and check how evenly its rollouts spread over the
level sets, including one second past the trained horizon."""
import numpy as np

from _common import ACTIONS, P, desk_model, desk_stack
from cumppi.metrics import uniformity_percent
from cumppi.policy import PolicyNetwork
from cumppi.sampling import sample_cuniform

stack = desk_stack(20)
print("cells per level:", stack.sizes)

net = desk_model()
m = 100_000
batch = sample_cuniform(net, ACTIONS, np.zeros(3), 20, m, P, np.random.default_rng(0))
ratios = uniformity_percent(stack, batch).ratios

# an untrained (zero-output) policy picks steering uniformly at random
flat = sample_cuniform(PolicyNetwork((4, 8, 8, 45), batchnorm=False), ACTIONS, np.zeros(3), 20, m, P,
                       np.random.default_rng(0))
base = uniformity_percent(stack, flat).ratios

print("\n t   trained  uniform-action")
for t in range(1, len(stack)):
    tag = "  (extrapolated)" if t > 15 else ""
    print(f"{t:2d}   {ratios[t]:.4f}   {base[t]:.4f}{tag}")
