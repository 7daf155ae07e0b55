"""Trajectory samplers: Gaussian (MPPI), normal-log-normal (log-MPPI) and
rollouts of the learned C-Uniform action policy."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dynamics import VehicleParams, as_state_array, rollout_batch, step, wrap_angle
from .policy import ActionSet, PolicyNetwork, sample_actions

SOURCES = ("gaussian", "nln", "cuniform", "injected")


@dataclass(frozen=True)
class GaussianSamplerConfig:
    sigma: float = 0.1
    horizon: int = 15

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class NlnSamplerConfig:
    sigma: float = 0.1
    sigma_ln: float = 0.5
    horizon: int = 15

    def __post_init__(self):
        if not (self.sigma > 0 and self.sigma_ln > 0):
            raise ValueError("sigma and sigma_ln must be positive")


@dataclass
class TrajectoryBatch:
    """``N`` steering sequences ``(N, T)`` with their rollouts ``(N, T + 1, 3)``."""

    controls: np.ndarray
    states: np.ndarray
    sources: np.ndarray

    def __post_init__(self):
        if self.controls.shape[0] != self.states.shape[0]:
            raise ValueError("controls and states disagree on batch size")
        if self.states.shape[1] != self.controls.shape[1] + 1:
            raise ValueError("states must have one more step than controls")
        self.sources = np.broadcast_to(np.asarray(self.sources), (len(self.controls),)).copy()

    def __len__(self) -> int:
        return self.controls.shape[0]

    @property
    def horizon(self) -> int:
        return self.controls.shape[1]

    @classmethod
    def from_controls(cls, s0, controls, p: VehicleParams, source: str) -> "TrajectoryBatch":
        controls = np.asarray(controls, dtype=float)
        return cls(controls, rollout_batch(s0, controls, p), source)

    def concat(self, other: "TrajectoryBatch") -> "TrajectoryBatch":
        return TrajectoryBatch(
            np.concatenate([self.controls, other.controls]),
            np.concatenate([self.states, other.states]),
            np.concatenate([self.sources, other.sources]),
        )

    def to_csv(self, path) -> None:
        """One row per state: traj_id, t, x, y, psi, delta (blank on the last state)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["traj_id", "t", "x", "y", "psi", "delta"])
            T = self.horizon
            for i in range(len(self)):
                for t in range(T + 1):
                    x, y, psi = self.states[i, t]
                    delta = repr(float(self.controls[i, t])) if t < T else ""
                    w.writerow([i, t, repr(float(x)), repr(float(y)), repr(float(psi)), delta])


def _perturbed(nominal, eps, p: VehicleParams, s0, source) -> TrajectoryBatch:
    controls = np.clip(np.asarray(nominal, dtype=float)[None, :] + eps, -p.delta_max, p.delta_max)
    return TrajectoryBatch.from_controls(s0, controls, p, source)


def gaussian_noise(cfg: GaussianSamplerConfig, n: int, horizon: int, rng: np.random.Generator) -> np.ndarray:
    return rng.normal(0.0, cfg.sigma, (n, horizon))


def nln_noise(cfg: NlnSamplerConfig, n: int, horizon: int, rng: np.random.Generator) -> np.ndarray:
    """Normal noise scaled by a unit-mean log-normal multiplier."""
    eta = rng.normal(0.0, cfg.sigma, (n, horizon))
    z = rng.normal(-0.5 * cfg.sigma_ln**2, cfg.sigma_ln, (n, horizon))
    return eta * np.exp(z)


def sample_gaussian(nominal, cfg: GaussianSamplerConfig, n: int, rng: np.random.Generator,
                    s0=(0.0, 0.0, 0.0), p: VehicleParams = VehicleParams()) -> TrajectoryBatch:
    if n < 1:
        raise ValueError("n must be at least 1")
    nominal = np.asarray(nominal, dtype=float)
    return _perturbed(nominal, gaussian_noise(cfg, n, nominal.size, rng), p, s0, "gaussian")


def sample_nln(nominal, cfg: NlnSamplerConfig, n: int, rng: np.random.Generator,
               s0=(0.0, 0.0, 0.0), p: VehicleParams = VehicleParams()) -> TrajectoryBatch:
    if n < 1:
        raise ValueError("n must be at least 1")
    nominal = np.asarray(nominal, dtype=float)
    return _perturbed(nominal, nln_noise(cfg, n, nominal.size, rng), p, s0, "nln")


def to_frame(states, s0) -> np.ndarray:
    """Express world-frame states relative to pose ``s0``."""
    states = as_state_array(states)
    s0 = as_state_array(s0)
    c, s = np.cos(s0[2]), np.sin(s0[2])
    dx = states[..., 0] - s0[0]
    dy = states[..., 1] - s0[1]
    out = np.empty(states.shape)
    out[..., 0] = c * dx + s * dy
    out[..., 1] = -s * dx + c * dy
    out[..., 2] = wrap_angle(states[..., 2] - s0[2])
    return out


def from_frame(states, s0) -> np.ndarray:
    """Inverse of :func:`to_frame`."""
    states = as_state_array(states)
    s0 = as_state_array(s0)
    c, s = np.cos(s0[2]), np.sin(s0[2])
    out = np.empty(states.shape)
    out[..., 0] = s0[0] + c * states[..., 0] - s * states[..., 1]
    out[..., 1] = s0[1] + s * states[..., 0] + c * states[..., 1]
    out[..., 2] = wrap_angle(states[..., 2] + s0[2])
    return out


def sample_cuniform(net: PolicyNetwork, actions: ActionSet, s0, horizon: int, n: int,
                    p: VehicleParams, rng: np.random.Generator) -> TrajectoryBatch:
    """Roll out ``n`` trajectories of the action policy from pose ``s0``.

    The policy sees states in the frame of ``s0``, which maps to the origin the
    network was trained from.
    """
    s0 = as_state_array(s0).astype(float)
    deltas = np.asarray(actions.deltas)
    controls = np.empty((n, horizon))
    states = np.empty((n, horizon + 1, 3))
    states[:, 0] = s0
    states[:, 0, 2] = wrap_angle(s0[2])
    for t in range(horizon):
        pmf = net.forward(to_frame(states[:, t], s0), "eval")
        a = sample_actions(pmf, rng)
        controls[:, t] = deltas[a]
        states[:, t + 1] = step(states[:, t], controls[:, t], p)
    return TrajectoryBatch(controls, states, "cuniform")
