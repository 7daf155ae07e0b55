"""MPPI weighting and update, plus the CU-MPPI pipeline.

CU-MPPI samples candidate trajectories from the action policy, adds the
shifted previous solution, takes the cheapest candidate as the nominal and
refines it with an ordinary MPPI update (Gaussian noise for CU-MPPI,
normal-log-normal noise for CU-LogMPPI).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import VehicleParams, as_state_array
from .policy import ActionSet, PolicyNetwork
from .sampling import (GaussianSamplerConfig, NlnSamplerConfig, TrajectoryBatch, sample_cuniform,
                       sample_gaussian, sample_nln)
from .world import World, local_costmap, reset_sim, step_sim, trajectory_cost

TIE_TOL = 1e-9
METHODS = ("mppi", "log-mppi", "cu-mppi", "cu-logmppi")


@dataclass(frozen=True)
class MppiConfig:
    lam: float = 0.5
    n_samples: int = 1000
    horizon: int = 15
    sampler: str = "gaussian"  # or "nln"
    sigma: float = 0.1
    sigma_ln: float = 0.5
    gamma: float = 0.0
    # C-Uniform candidates for the CU variants; None splits n_samples evenly
    n_cuniform: int | None = None

    def __post_init__(self):
        if not (self.lam > 0 and np.isfinite(self.lam)):
            raise ValueError("lambda must be positive and finite")
        if self.n_samples < 1 or self.horizon < 1:
            raise ValueError("n_samples and horizon must be at least 1")
        if self.sampler not in ("gaussian", "nln"):
            raise ValueError(f"unknown sampler {self.sampler!r}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")

    def split(self) -> tuple[int, int]:
        """(C-Uniform candidates, MPPI perturbation samples) for the CU variants."""
        n_cu = self.n_samples // 2 if self.n_cuniform is None else self.n_cuniform
        return max(n_cu, 1), max(self.n_samples - n_cu, 1)


@dataclass
class ControlSolution:
    optimal_sequence: np.ndarray
    weights: np.ndarray
    nominal_used: np.ndarray
    min_cost: float
    all_infeasible: bool = False
    candidates: TrajectoryBatch | None = field(default=None, repr=False)
    samples: TrajectoryBatch | None = field(default=None, repr=False)


def mppi_weights(costs, perturbations=None, cfg: MppiConfig = MppiConfig(), nominal=None):
    """Softmax of ``-(S - min S) / lam`` with optional control-cost correction.

    Returns ``(weights, all_infeasible)``; when no cost is finite the weights
    are uniform and the flag is set.
    """
    s = np.asarray(costs, dtype=float).ravel()
    if s.size == 0:
        raise ValueError("mppi_weights needs at least one sample")
    finite = np.isfinite(s)
    if not finite.any():
        return np.full(s.size, 1.0 / s.size), True
    z = np.full(s.size, -np.inf)
    z[finite] = -(s[finite] - s[finite].min()) / cfg.lam
    if cfg.gamma > 0 and perturbations is not None and nominal is not None:
        eps = np.asarray(perturbations, dtype=float)
        u = np.asarray(nominal, dtype=float)
        z[finite] -= cfg.gamma * (eps[finite] * u[None, :] / cfg.sigma**2).sum(axis=-1)
        z[finite] -= z[finite].max()
    w = np.exp(z)
    return w / w.sum(), False


def mppi_update(nominal, batch: TrajectoryBatch, costs, cfg: MppiConfig, p: VehicleParams = VehicleParams()) -> ControlSolution:
    if len(batch) == 0:
        raise ValueError("empty sample batch")
    nominal = np.asarray(nominal, dtype=float)
    eps = batch.controls - nominal[None, :]
    w, infeasible = mppi_weights(costs, eps, cfg, nominal)
    opt = np.clip(w @ batch.controls, -p.delta_max, p.delta_max)
    costs = np.asarray(costs, dtype=float)
    return ControlSolution(opt, w, nominal, float(np.min(costs)), infeasible, samples=batch)


def select_nominal(candidates: TrajectoryBatch, costs, rng: np.random.Generator) -> tuple[int, np.ndarray]:
    """Cheapest candidate; ties within ``TIE_TOL`` are broken uniformly at random."""
    costs = np.asarray(costs, dtype=float)
    if costs.size == 0:
        raise ValueError("no candidates")
    best = np.flatnonzero(costs <= costs.min() + TIE_TOL)
    i = int(best[0] if len(best) == 1 else rng.choice(best))
    return i, candidates.controls[i].copy()


def receding_shift(seq) -> np.ndarray:
    seq = np.asarray(seq, dtype=float)
    if seq.size == 0:
        raise ValueError("cannot shift an empty sequence")
    return np.concatenate([seq[1:], seq[-1:]])


def _perturb(nominal, cfg: MppiConfig, n: int, rng, s0, p) -> TrajectoryBatch:
    if cfg.sampler == "gaussian":
        return sample_gaussian(nominal, GaussianSamplerConfig(cfg.sigma, cfg.horizon), n, rng, s0, p)
    return sample_nln(nominal, NlnSamplerConfig(cfg.sigma, cfg.sigma_ln, cfg.horizon), n, rng, s0, p)


def _costs(batch: TrajectoryBatch, world: World, costmap):
    return trajectory_cost(batch.states, world, costmap)


def mppi_step(state, world: World, nominal, cfg: MppiConfig, rng: np.random.Generator,
              p: VehicleParams = VehicleParams(), costmap=None) -> ControlSolution:
    """One plain MPPI (or log-MPPI) iteration around ``nominal``."""
    state = as_state_array(state)
    if costmap is None:
        costmap = local_costmap(world, state)
    batch = _perturb(nominal, cfg, cfg.n_samples, rng, state, p)
    return mppi_update(nominal, batch, _costs(batch, world, costmap), cfg, p)


def cu_mppi_step(state, world: World, net: PolicyNetwork, actions: ActionSet, cfg: MppiConfig,
                 prev_solution=None, rng: np.random.Generator | None = None,
                 p: VehicleParams = VehicleParams(), costmap=None) -> ControlSolution:
    rng = rng if rng is not None else np.random.default_rng()
    state = as_state_array(state)
    if costmap is None:
        costmap = local_costmap(world, state)
    n_cu, n_mppi = cfg.split()
    cands = sample_cuniform(net, actions, state, cfg.horizon, n_cu, p, rng)
    if prev_solution is not None:
        shifted = receding_shift(prev_solution)
        cands = cands.concat(TrajectoryBatch.from_controls(state, shifted[None, :], p, "injected"))
    cand_costs = _costs(cands, world, costmap)
    _, nominal = select_nominal(cands, cand_costs, rng)
    batch = _perturb(nominal, cfg, n_mppi, rng, state, p)
    sol = mppi_update(nominal, batch, _costs(batch, world, costmap), cfg, p)
    sol.candidates = cands
    return sol


class Controller:
    """Receding-horizon wrapper for the four methods."""

    def __init__(self, method: str, cfg: MppiConfig, p: VehicleParams = VehicleParams(),
                 net: PolicyNetwork | None = None, actions: ActionSet | None = None):
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
        sampler = "nln" if method in ("log-mppi", "cu-logmppi") else "gaussian"
        self.cfg = MppiConfig(**{**cfg.__dict__, "sampler": sampler})
        self.method, self.p = method, p
        self.cu = method.startswith("cu-")
        if self.cu and (net is None or actions is None):
            raise ValueError(f"{method} needs a trained policy network and its action set")
        self.net, self.actions = net, actions
        self.reset()

    def reset(self) -> None:
        self.nominal = np.zeros(self.cfg.horizon)
        self.prev = None

    def __call__(self, believed, world: World, rng: np.random.Generator) -> tuple[float, ControlSolution]:
        if self.cu:
            sol = cu_mppi_step(believed, world, self.net, self.actions, self.cfg, self.prev, rng, self.p)
        else:
            sol = mppi_step(believed, world, self.nominal, self.cfg, rng, self.p)
        self.prev = sol.optimal_sequence
        self.nominal = receding_shift(sol.optimal_sequence)
        return float(sol.optimal_sequence[0]), sol


@dataclass
class Episode:
    outcome: str
    steps: int
    path_length: float
    log: list = field(default_factory=list)  # (SimState, delta_cmd) pairs
    world: World | None = None  # the episode's copy, with final reveal flags

    @property
    def states(self) -> np.ndarray:
        return np.array([s.true_state for s, _ in self.log])


def run_episode(world: World, controller: Controller, rng: np.random.Generator,
                p: VehicleParams = VehicleParams()) -> Episode:
    """Closed-loop rollout until success, collision or the step budget.

    ``world`` is copied so reveal flags do not leak between episodes.
    """
    world = world.copy()
    controller.reset()
    sim = reset_sim(world, rng)
    log = []
    while sim.outcome == "running":
        u, _ = controller(sim.believed_state, world, rng)
        log.append((sim, u))
        sim = step_sim(sim, u, world, p, rng)
    log.append((sim, None))
    return Episode(sim.outcome, sim.step, sim.path_length, log, world)
