"""Independent reference computations used by the tests.

These re-derive quantities with plain loops instead of the vectorized code
paths they check.
"""
import math

import numpy as np


def fd_gradient(f, params: dict, h: float = 1e-6) -> dict:
    """Central finite differences of scalar ``f()`` over every parameter entry."""
    out = {}
    for name, arr in params.items():
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = arr[i]
            arr[i] = old + h
            fp = f()
            arr[i] = old - h
            fm = f()
            arr[i] = old
            g[i] = (fp - fm) / (2 * h)
        out[name] = g
    return out


def rel_error(a: dict, b: dict) -> float:
    num = math.sqrt(sum(float(np.sum((a[k] - b[k]) ** 2)) for k in a))
    den = math.sqrt(sum(float(np.sum(a[k] ** 2)) for k in a)) + math.sqrt(sum(float(np.sum(b[k] ** 2)) for k in a))
    return num / max(den, 1e-300)


def entropy_ratio(counts) -> float:
    counts = [c for c in counts]
    n = sum(counts)
    if len(counts) == 1:
        return 1.0
    h = 0.0
    for c in counts:
        if c:
            p = c / n
            h -= p * math.log(p)
    return h / math.log(len(counts))


def trajectory_cost_loop(states, world) -> float:
    """State-by-state evaluation of the cost rules with exact geometry."""
    cfg = world.config
    g = world.goal
    revealed = [o for o in world.obstacles if o.revealed]

    def collides(s):
        for o in revealed:
            if math.hypot(s[0] - o.center[0], s[1] - o.center[1]) < o.radius + cfg.footprint:
                return True
        return False

    def dist(s):
        if cfg.goal_metric == "planar":
            return math.hypot(s[0] - g[0], s[1] - g[1])
        wx, wy, wp = cfg.c2c_weights
        return math.sqrt(wx * (s[0] - g[0]) ** 2 + wy * (s[1] - g[1]) ** 2
                         + wp * ((math.cos(s[2]) - math.cos(g[2])) ** 2 + (math.sin(s[2]) - math.sin(g[2])) ** 2))

    latched = False
    frozen = None
    total = 0.0
    best = math.inf
    for t, s in enumerate(states):
        if not latched and collides(s):
            latched = True
            frozen = dist(s)
        obs = cfg.c_collision if latched else 0.0
        gc = frozen if latched else dist(s)
        if t < cfg.goal_from_step:
            continue
        total += cfg.lam_obs * obs + cfg.lam_goal * gc
        best = min(best, gc)
        if gc <= cfg.goal_radius:
            break
    return cfg.lam_terminal * (best if math.isfinite(best) else 0.0) + total


def hard_next_distribution(stack, t, pmf, deltas, p):
    """Predicted next-level occupancy with each (cell, action) sent to its nearest cell."""
    from cumppi.dynamics import step
    from cumppi.levelset import brute_nearest

    cur, nxt = stack[t], stack[t + 1]
    q = np.zeros(len(nxt))
    for c in range(len(cur)):
        for a, d in enumerate(deltas):
            s = step(cur.representatives[c], d, p)
            i, _ = brute_nearest(nxt, s, k=1)
            q[i[0]] += pmf[c, a] / len(cur)
    return q
