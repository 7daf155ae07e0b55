"""Neural action policy trained by level-set entropy maximization.

The network maps a state to a probability mass over a fixed set of steering
angles.  Training pushes the occupancy of every next level set toward uniform:
each cell of level ``t`` is propagated under every action, the resulting mass
``p(u|x) / |L_t|`` is spread over the nearest cells of level ``t + 1`` with an
exponential distance kernel, and the negative entropy of that occupancy is
minimized with Adam.  Forward and backward passes are plain numpy in float64.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import VehicleParams, as_state_array, step
from .levelset import LevelSetStack, nearest_cells

MODEL_MAGIC = b"CUNN"
MODEL_VERSION = 1
BN_EPS = 1e-5


@dataclass(frozen=True)
class ActionSet:
    deltas: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.deltas, dtype=float)
        if d.ndim != 1 or d.size < 1:
            raise ValueError("an action set needs at least one steering angle")
        if d.size > 1 and np.any(np.diff(d) <= 0):
            raise ValueError("steering angles must be strictly increasing")
        object.__setattr__(self, "deltas", d)

    @classmethod
    def uniform(cls, delta_max: float, n: int = 45) -> "ActionSet":
        return cls(np.linspace(-delta_max, delta_max, n))

    def __len__(self) -> int:
        return len(self.deltas)


def features(states) -> np.ndarray:
    """Network input ``(x, y, cos psi, sin psi)``."""
    s = as_state_array(states)
    return np.stack([s[..., 0], s[..., 1], np.cos(s[..., 2]), np.sin(s[..., 2])], axis=-1)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class PolicyNetwork:
    """Two hidden ReLU layers, each followed by batch-norm, then a softmax head.

    ``dims`` is ``(n_in, hidden_1, hidden_2, n_actions)``.  With
    ``batchnorm=False`` the normalization layers are dropped entirely.
    """

    def __init__(self, dims=(4, 256, 256, 45), batchnorm: bool = True, momentum: float = 0.1, seed: int = 0):
        self.dims = tuple(int(d) for d in dims)
        if len(self.dims) != 4 or self.dims[0] != 4:
            raise ValueError(f"expected dims (4, h1, h2, n_actions), got {self.dims}")
        self.batchnorm = batchnorm
        self.momentum = momentum
        self.params: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.reset(np.random.default_rng(seed))

    @property
    def n_actions(self) -> int:
        return self.dims[-1]

    def reset(self, rng: np.random.Generator) -> None:
        n_in, h1, h2, n_out = self.dims
        for name, fan_in, fan_out in (("1", n_in, h1), ("2", h1, h2)):
            bound = np.sqrt(6.0 / fan_in)
            self.params["W" + name] = rng.uniform(-bound, bound, (fan_in, fan_out))
            self.params["b" + name] = np.zeros(fan_out)
            if self.batchnorm:
                self.params["g" + name] = np.ones(fan_out)
                self.params["be" + name] = np.zeros(fan_out)
                self.buffers["mean" + name] = np.zeros(fan_out)
                self.buffers["var" + name] = np.ones(fan_out)
        # zero head: training starts from the uniform action distribution
        self.params["W3"] = np.zeros((h2, n_out))
        self.params["b3"] = np.zeros(n_out)

    def param_names(self) -> list[str]:
        names = ["W1", "b1"]
        if self.batchnorm:
            names += ["g1", "be1"]
        names += ["W2", "b2"]
        if self.batchnorm:
            names += ["g2", "be2"]
        return names + ["W3", "b3"]

    def buffer_names(self) -> list[str]:
        return ["mean1", "var1", "mean2", "var2"] if self.batchnorm else []

    def copy(self) -> "PolicyNetwork":
        other = PolicyNetwork.__new__(PolicyNetwork)
        other.dims, other.batchnorm, other.momentum = self.dims, self.batchnorm, self.momentum
        other.params = {k: v.copy() for k, v in self.params.items()}
        other.buffers = {k: v.copy() for k, v in self.buffers.items()}
        return other

    # -- forward / backward -------------------------------------------------

    def _norm(self, a, name, train, cache):
        if not self.batchnorm:
            return a
        if train:
            mu = a.mean(axis=0)
            var = a.var(axis=0)
            n = a.shape[0]
            m = self.momentum
            unbiased = var * n / (n - 1) if n > 1 else var
            self.buffers["mean" + name] = (1 - m) * self.buffers["mean" + name] + m * mu
            self.buffers["var" + name] = (1 - m) * self.buffers["var" + name] + m * unbiased
        else:
            mu, var = self.buffers["mean" + name], self.buffers["var" + name]
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (a - mu) * inv_std
        cache["xhat" + name] = xhat
        cache["inv_std" + name] = inv_std
        return self.params["g" + name] * xhat + self.params["be" + name]

    def logits(self, states, mode: str = "eval", cache: dict | None = None) -> np.ndarray:
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        train = mode == "train"
        cache = {} if cache is None else cache
        P = self.params
        x = features(states).reshape(-1, 4)
        cache["x"] = x
        z1 = x @ P["W1"] + P["b1"]
        cache["z1"] = z1
        h1 = self._norm(np.maximum(z1, 0.0), "1", train, cache)
        cache["h1"] = h1
        z2 = h1 @ P["W2"] + P["b2"]
        cache["z2"] = z2
        h2 = self._norm(np.maximum(z2, 0.0), "2", train, cache)
        cache["h2"] = h2
        out = h2 @ P["W3"] + P["b3"]
        if not np.all(np.isfinite(out)):
            raise FloatingPointError("non-finite activation in policy network")
        return out.reshape(np.shape(states)[:-1] + (self.n_actions,))

    def forward(self, states, mode: str = "eval", cache: dict | None = None) -> np.ndarray:
        """Action probabilities for each state; shape ``(..., n_actions)``."""
        return softmax(self.logits(states, mode, cache))

    def _norm_backward(self, dout, name, cache, grads):
        if not self.batchnorm:
            return dout
        xhat, inv_std = cache["xhat" + name], cache["inv_std" + name]
        grads["g" + name] = (dout * xhat).sum(axis=0)
        grads["be" + name] = dout.sum(axis=0)
        dxhat = dout * self.params["g" + name]
        n = dout.shape[0]
        return inv_std / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))

    def backward(self, dlogits: np.ndarray, cache: dict) -> dict[str, np.ndarray]:
        """Parameter gradients given ``dL/dlogits`` from a train-mode forward."""
        P = self.params
        g: dict[str, np.ndarray] = {}
        d = dlogits.reshape(-1, self.n_actions)
        g["W3"] = cache["h2"].T @ d
        g["b3"] = d.sum(axis=0)
        dh2 = d @ P["W3"].T
        da2 = self._norm_backward(dh2, "2", cache, g)
        dz2 = da2 * (cache["z2"] > 0)
        g["W2"] = cache["h1"].T @ dz2
        g["b2"] = dz2.sum(axis=0)
        dh1 = dz2 @ P["W2"].T
        da1 = self._norm_backward(dh1, "1", cache, g)
        dz1 = da1 * (cache["z1"] > 0)
        g["W1"] = cache["x"].T @ dz1
        g["b1"] = dz1.sum(axis=0)
        return g


def forward(net: PolicyNetwork, s, mode: str = "eval") -> np.ndarray:
    return net.forward(s, mode)


# -- sampling -----------------------------------------------------------------

def sample_action(pmf, rng: np.random.Generator) -> int:
    """Draw one action index by inverting the cumulative distribution."""
    return int(sample_actions(np.asarray(pmf, dtype=float)[None, :], rng)[0])


def sample_actions(pmfs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Row-wise inverse-CDF draws for a ``(N, A)`` array of pmfs."""
    cdf = np.cumsum(pmfs, axis=-1)
    u = rng.random(pmfs.shape[0]) * cdf[:, -1]
    idx = (cdf <= u[:, None]).sum(axis=-1)
    return np.minimum(idx, pmfs.shape[-1] - 1)


# -- entropy objective -----------------------------------------------------------

@dataclass
class Assignment:
    """Fixed soft-assignment kernel from ``(cell, action)`` pairs to next-level cells."""

    t: int
    idx: np.ndarray  # (C, A, k) candidate rows in level t + 1
    weights: np.ndarray  # (C, A, k), each (c, u) row sums to 1
    n_next: int

    @property
    def n_cells(self) -> int:
        return self.idx.shape[0]


def build_assignment(stack: LevelSetStack, t: int, actions, p: VehicleParams,
                     k_neighbors: int = 8, beta_assign: float | None = None,
                     cells: np.ndarray | None = None) -> Assignment:
    """Kernel weights ``exp(-beta * d)`` over the ``k`` nearest next-level cells.

    Representatives and candidate sets do not depend on the network, so the
    kernel is computed once and treated as a constant during training.
    """
    if t + 1 >= len(stack):
        raise IndexError(f"level {t + 1} is outside a stack of {len(stack)} levels")
    nxt = stack[t + 1]
    if len(nxt) == 0:
        raise ValueError(f"level {t + 1} is empty")
    if beta_assign is None:
        beta_assign = 1.0 / stack.resolution.dx
    deltas = np.asarray(getattr(actions, "deltas", actions), dtype=float)
    src = stack[t].representatives if cells is None else np.asarray(cells, dtype=float)
    succ = step(src[:, None, :], deltas[None, :], p)
    idx, dist = nearest_cells(nxt, succ, k=k_neighbors)
    logits = -beta_assign * (dist - dist[..., :1])
    w = np.exp(logits)
    w /= w.sum(axis=-1, keepdims=True)
    return Assignment(t, idx.astype(np.int64), w, len(nxt))


def occupancy(pmf: np.ndarray, asg: Assignment) -> np.ndarray:
    """Next-level occupancy ``q`` from per-cell action probabilities."""
    mass = pmf[:, :, None] * asg.weights / asg.n_cells
    return np.bincount(asg.idx.ravel(), weights=mass.ravel(), minlength=asg.n_next)


def soft_assign(net: PolicyNetwork, stack: LevelSetStack, t: int, actions, p: VehicleParams,
                k_neighbors: int = 8, beta_assign: float | None = None, mode: str = "eval") -> np.ndarray:
    asg = build_assignment(stack, t, actions, p, k_neighbors, beta_assign)
    return occupancy(net.forward(stack[t].representatives, mode), asg)


def entropy_loss(q) -> float:
    """Negative entropy ``sum q log q`` with ``0 log 0 = 0``."""
    q = np.asarray(q, dtype=float)
    nz = q[q > 0]
    return float(np.sum(nz * np.log(nz)))


def loss_and_grad(net: PolicyNetwork, states: np.ndarray, asg: Assignment, mode: str = "train"):
    """Entropy loss of one level and its gradient with respect to all parameters."""
    cache: dict = {}
    pmf = softmax(net.logits(states, mode, cache))
    q = occupancy(pmf, asg)
    loss = entropy_loss(q)
    dq = np.zeros_like(q)
    pos = q > 0
    dq[pos] = np.log(q[pos]) + 1.0
    dpmf = (asg.weights * dq[asg.idx]).sum(axis=-1) / asg.n_cells
    dlogits = pmf * (dpmf - (pmf * dpmf).sum(axis=-1, keepdims=True))
    return loss, net.backward(dlogits, cache)


# -- training -----------------------------------------------------------------

@dataclass
class TrainConfig:
    lr: float = 1e-4
    epochs: int = 20
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    beta_assign: float | None = None  # defaults to 1 / resolution.dx
    k_neighbors: int = 8
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be at least 1")


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params, self.lr, self.b1, self.b2, self.eps = params, lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            self.params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


@dataclass
class TrainResult:
    net: PolicyNetwork
    trace: list[tuple[int, int, float]] = field(default_factory=list)


def train(net: PolicyNetwork, stack: LevelSetStack, actions, p: VehicleParams,
          cfg: TrainConfig = TrainConfig()) -> TrainResult:
    """Entropy-maximization training; epochs outer, level sets inner.

    Each ``(epoch, t)`` pair is one Adam step on the full batch of cells of
    level ``t``.  The network is modified in place and also returned.
    """
    if len(stack) < 2:
        raise ValueError("training needs a stack of at least two levels")
    if net.n_actions != len(getattr(actions, "deltas", actions)):
        raise ValueError("network head size does not match the action set")
    net.reset(np.random.default_rng(cfg.seed))
    assignments = [build_assignment(stack, t, actions, p, cfg.k_neighbors, cfg.beta_assign)
                   for t in range(len(stack) - 1)]
    opt = Adam(net.params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    result = TrainResult(net)
    for epoch in range(cfg.epochs):
        for t, asg in enumerate(assignments):
            loss, grads = loss_and_grad(net, stack[t].representatives, asg)
            if not np.isfinite(loss):
                raise FloatingPointError(f"loss is {loss} at epoch {epoch}, level {t}")
            opt.step(grads)
            result.trace.append((epoch, t, loss))
    return result


def write_loss_trace(trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "level_t", "loss"])
        for epoch, t, loss in trace:
            w.writerow([epoch, t, repr(float(loss))])


# -- persistence ----------------------------------------------------------------

def save_model(net: PolicyNetwork, path) -> None:
    """Little-endian ``CUNN`` file: header, dims, parameters, batch-norm buffers."""
    chunks = [
        MODEL_MAGIC,
        struct.pack("<I", MODEL_VERSION),
        struct.pack("<I", int(net.batchnorm)),
        struct.pack("<d", net.momentum),
        struct.pack("<I", len(net.dims)),
        struct.pack(f"<{len(net.dims)}I", *net.dims),
    ]
    for name in net.param_names():
        chunks.append(np.ascontiguousarray(net.params[name], dtype="<f8").tobytes())
    for name in net.buffer_names():
        chunks.append(np.ascontiguousarray(net.buffers[name], dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_model(path) -> PolicyNetwork:
    data = Path(path).read_bytes()
    if data[:4] != MODEL_MAGIC:
        raise ValueError(f"{path}: not a policy model file (bad magic {data[:4]!r})")
    try:
        version, bn, momentum, n_dims = struct.unpack_from("<IIdI", data, 4)
    except struct.error:
        raise ValueError(f"{path}: truncated header") from None
    if version != MODEL_VERSION:
        raise ValueError(f"{path}: model format version {version}, expected {MODEL_VERSION}")
    off = 4 + struct.calcsize("<IIdI")
    try:
        dims = struct.unpack_from(f"<{n_dims}I", data, off)
    except struct.error:
        raise ValueError(f"{path}: truncated header") from None
    off += 4 * n_dims
    net = PolicyNetwork(dims, batchnorm=bool(bn), momentum=momentum)
    for store, names in ((net.params, net.param_names()), (net.buffers, net.buffer_names())):
        for name in names:
            shape = store[name].shape
            count = int(np.prod(shape))
            if off + 8 * count > len(data):
                raise ValueError(f"{path}: truncated while reading {name}")
            store[name] = np.frombuffer(data, dtype="<f8", count=count, offset=off).astype(float).reshape(shape)
            off += 8 * count
    if off != len(data):
        raise ValueError(f"{path}: {len(data) - off} trailing bytes")
    return net
