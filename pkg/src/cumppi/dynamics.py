"""Kinematic bicycle model with constant forward speed.

States are float arrays whose last axis is ``(x, y, psi)``; steering inputs are
arrays of angles broadcast against the leading axes of the state.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np


class State(NamedTuple):
    x: float
    y: float
    psi: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.psi], dtype=float)


@dataclass(frozen=True)
class VehicleParams:
    v: float = 1.0
    wheelbase: float = 0.33
    dt: float = 0.2
    delta_max: float = 0.524

    def __post_init__(self):
        if not self.v > 0:
            raise ValueError(f"speed must be positive, got {self.v}")
        if not self.wheelbase > 0:
            raise ValueError(f"wheelbase must be positive, got {self.wheelbase}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not 0 < self.delta_max < np.pi / 2:
            raise ValueError(f"delta_max must lie in (0, pi/2), got {self.delta_max}")

    @property
    def max_yaw_step(self) -> float:
        """Largest heading change in one step, at full steering lock."""
        return self.v / self.wheelbase * np.tan(self.delta_max) * self.dt


def wrap_angle(a):
    """Wrap angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2 * np.pi)


def as_state_array(s) -> np.ndarray:
    arr = np.asarray(s, dtype=float)
    if arr.shape[-1] != 3:
        raise ValueError(f"states need a trailing axis of size 3, got shape {arr.shape}")
    return arr


def step(s, delta, p: VehicleParams) -> np.ndarray:
    """One forward-Euler step of the bicycle model.

    ``s`` has shape ``(..., 3)`` and ``delta`` broadcasts against ``s[..., 0]``.
    Steering outside ``[-delta_max, delta_max]`` is a caller error.
    """
    s = as_state_array(s)
    delta = np.asarray(delta, dtype=float)
    assert np.all(np.abs(delta) <= p.delta_max + 1e-12), "steering exceeds delta_max"
    x, y, psi = s[..., 0], s[..., 1], s[..., 2]
    out = np.empty(np.broadcast_shapes(s.shape, delta.shape + (3,)), dtype=float)
    out[..., 0] = x + p.v * np.cos(psi) * p.dt
    out[..., 1] = y + p.v * np.sin(psi) * p.dt
    out[..., 2] = wrap_angle(psi + p.v / p.wheelbase * np.tan(delta) * p.dt)
    return out


def rollout(s0, controls, p: VehicleParams) -> np.ndarray:
    """Propagate ``s0`` through a steering sequence; returns ``(T + 1, 3)``."""
    controls = np.asarray(controls, dtype=float)
    if controls.ndim != 1 or controls.size == 0:
        raise ValueError("rollout needs a non-empty 1-D control sequence")
    return rollout_batch(s0, controls[None, :], p)[0]


def rollout_batch(s0, batch: np.ndarray | Sequence[Sequence[float]], p: VehicleParams) -> np.ndarray:
    """Roll out ``N`` sequences of equal length ``T`` from a shared start.

    ``s0`` may also be ``(N, 3)`` to give each sequence its own start.
    Returns an array of shape ``(N, T + 1, 3)``.
    """
    if not isinstance(batch, np.ndarray):
        lengths = {len(seq) for seq in batch}
        if len(lengths) > 1:
            raise ValueError(f"control sequences have mismatched lengths {sorted(lengths)}")
    controls = np.asarray(batch, dtype=float)
    if controls.ndim != 2:
        raise ValueError(f"expected a (N, T) control batch, got shape {controls.shape}")
    n, horizon = controls.shape
    s0 = as_state_array(s0)
    traj = np.empty((n, horizon + 1, 3), dtype=float)
    traj[:, 0] = np.broadcast_to(s0, (n, 3))
    traj[:, 0, 2] = wrap_angle(traj[:, 0, 2])
    for t in range(horizon):
        traj[:, t + 1] = step(traj[:, t], controls[:, t], p)
    return traj
