"""Discretized, disjoint reachable level sets.

A level set holds the grid cells first reached at step ``t`` from an initial
state.  Cells are keyed by integer ``(ix, iy, ipsi)`` indices; the heading axis
is a ring of ``round(2*pi / dpsi)`` bins.  The grid origin is placed half a cell
below the initial state so that the initial state is the center of cell
``(0, 0, 0)``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .dynamics import VehicleParams, as_state_array, step, wrap_angle

TWO_PI = 2 * np.pi
HEADING_WEIGHT = 1.0  # meters per radian in the mixed state distance

STACK_MAGIC = b"CULS"
STACK_VERSION = 2  # v2 adds optional representative states; v1 is still readable


class EmptyLevelError(RuntimeError):
    pass


@dataclass(frozen=True)
class Resolution:
    dx: float = 0.05
    dy: float = 0.05
    dpsi: float = np.deg2rad(4.5)

    def __post_init__(self):
        if min(self.dx, self.dy, self.dpsi) <= 0:
            raise ValueError(f"resolution must be positive, got {self}")

    @property
    def n_psi(self) -> int:
        return int(round(TWO_PI / self.dpsi))

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dpsi])

    def diagonal(self, w_psi: float = HEADING_WEIGHT) -> float:
        return float(np.sqrt(self.dx**2 + self.dy**2 + (w_psi * self.dpsi) ** 2))


def discretize(s, r: Resolution, origin=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Integer cell keys of states ``s`` (shape ``(..., 3)``) on the grid at ``origin``."""
    s = as_state_array(s)
    origin = np.asarray(origin, dtype=float)
    keys = np.empty(s.shape, dtype=np.int64)
    keys[..., 0] = np.floor((s[..., 0] - origin[0]) / r.dx)
    keys[..., 1] = np.floor((s[..., 1] - origin[1]) / r.dy)
    dpsi = np.mod(s[..., 2] - origin[2], TWO_PI)
    keys[..., 2] = np.mod(np.floor(dpsi / r.dpsi), r.n_psi)
    return keys


def cell_centers(keys, r: Resolution, origin) -> np.ndarray:
    keys = np.asarray(keys, dtype=float)
    origin = np.asarray(origin, dtype=float)
    centers = origin + (keys + 0.5) * r.as_array()
    centers[..., 2] = wrap_angle(centers[..., 2])
    return centers


def _heading_ring(psi, w_psi):
    period = w_psi * TWO_PI
    ring = np.mod(w_psi * psi, period)
    ring[ring >= period] = 0.0
    return ring


def state_distance(a, b, w_psi: float = HEADING_WEIGHT) -> np.ndarray:
    """Planar distance plus weighted wrapped heading difference."""
    a, b = as_state_array(a), as_state_array(b)
    d = a - b
    d_psi = wrap_angle(d[..., 2])
    return np.sqrt(d[..., 0] ** 2 + d[..., 1] ** 2 + (w_psi * d_psi) ** 2)


@dataclass
class LevelSet:
    t: int
    keys: np.ndarray
    centers: np.ndarray
    # Provenance: for each cell, the parent row in the previous level and the
    # action index that produced it.  Absent for the root and for loaded stacks.
    parents: np.ndarray | None = None
    parent_actions: np.ndarray | None = None
    # Reachable state kept for each cell when expanding from real successors;
    # None means the geometric centers stand in.
    states: np.ndarray | None = None
    _tree: cKDTree | None = field(default=None, repr=False, compare=False)
    _tree_w: float | None = field(default=None, repr=False, compare=False)
    _index: dict | None = field(default=None, repr=False, compare=False)
    _rank: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def representatives(self) -> np.ndarray:
        """States that are propagated out of this level."""
        return self.centers if self.states is None else self.states

    @property
    def index(self) -> dict:
        if self._index is None:
            self._index = {tuple(k): i for i, k in enumerate(self.keys.tolist())}
        return self._index

    @property
    def key_rank(self) -> np.ndarray:
        """Position of each row in lexicographic key order."""
        if self._rank is None:
            order = np.lexsort(self.keys.T[::-1])
            self._rank = np.empty(len(order), dtype=np.int64)
            self._rank[order] = np.arange(len(order))
        return self._rank

    def tree(self, w_psi: float = HEADING_WEIGHT) -> cKDTree:
        if self._tree is None or self._tree_w != w_psi:
            pts = self.centers.copy()
            pts[:, 2] = _heading_ring(pts[:, 2], w_psi)
            self._tree = cKDTree(pts, boxsize=[0.0, 0.0, w_psi * TWO_PI])
            self._tree_w = w_psi
        return self._tree


@dataclass
class LevelSetStack:
    levels: list[LevelSet]
    resolution: Resolution
    origin: np.ndarray
    claimed: set = field(default_factory=set, repr=False)

    @property
    def x0(self) -> np.ndarray:
        return self.levels[0].centers[0]

    @property
    def sizes(self) -> list[int]:
        return [len(lv) for lv in self.levels]

    def __len__(self) -> int:
        return len(self.levels)

    def __getitem__(self, t: int) -> LevelSet:
        return self.levels[t]


def build_level_sets(x0, actions, p: VehicleParams, r: Resolution, n_steps: int,
                     expand_from: str = "center") -> LevelSetStack:
    """Breadth-first expansion of discretized reachable sets.

    Every action is applied to every representative of level ``t``; successor
    cells not claimed by any earlier level form level ``t + 1``.

    ``expand_from="center"`` propagates cell geometric centers.  With
    ``"state"`` each new cell keeps the successor state closest to its center
    (ties by parent row, then action) and that state is propagated instead, so
    every level holds genuinely reachable states.  Both are independent of
    insertion order.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    if expand_from not in ("center", "state"):
        raise ValueError(f"expand_from must be 'center' or 'state', got {expand_from!r}")
    deltas = np.asarray(getattr(actions, "deltas", actions), dtype=float)
    x0 = as_state_array(x0).astype(float).copy()
    x0[2] = wrap_angle(x0[2])
    origin = x0 - 0.5 * r.as_array()

    root_key = discretize(x0, r, origin)[None, :]
    root = LevelSet(0, root_key, cell_centers(root_key, r, origin))
    if expand_from == "state":
        root.states = x0[None, :].copy()
    levels = [root]
    claimed = {tuple(root_key[0])}

    for t in range(n_steps):
        prev = levels[-1]
        succ = step(prev.representatives[:, None, :], deltas[None, :], p).reshape(-1, 3)
        succ_keys = discretize(succ, r, origin)
        if expand_from == "state":
            d = state_distance(succ, cell_centers(succ_keys, r, origin))
        else:
            d = np.zeros(len(succ))
        # sort by key, then distance to the center, then flat (parent, action) index
        order = np.lexsort((np.arange(len(succ)), d, succ_keys[:, 2], succ_keys[:, 1], succ_keys[:, 0]))
        sk = succ_keys[order]
        first = np.ones(len(sk), dtype=bool)
        first[1:] = np.any(sk[1:] != sk[:-1], axis=1)
        uniq, pick = sk[first], order[first]
        fresh = np.array([tuple(k) not in claimed for k in uniq.tolist()], dtype=bool)
        uniq, pick = uniq[fresh], pick[fresh]
        if len(uniq) == 0:
            raise EmptyLevelError(f"level set {t + 1} is empty: every successor was already claimed")
        claimed.update(map(tuple, uniq.tolist()))
        parents, acts = np.divmod(pick, len(deltas))
        levels.append(LevelSet(
            t + 1, uniq.astype(np.int64), cell_centers(uniq, r, origin),
            parents=parents, parent_actions=acts,
            states=succ[pick] if expand_from == "state" else None,
        ))
    return LevelSetStack(levels, r, origin, claimed)


def nearest_cells(level: LevelSet, s, k: int = 1, w_psi: float = HEADING_WEIGHT):
    """The ``k`` cells of ``level`` closest to each state in ``s``.

    Returns ``(indices, distances)`` each of shape ``s.shape[:-1] + (k,)``,
    sorted by distance with ties broken by ascending cell key.  ``k`` is capped
    at the level size.
    """
    if len(level) == 0:
        raise EmptyLevelError(f"level {level.t} has no cells")
    if k < 1:
        raise ValueError("k must be at least 1")
    s = as_state_array(s)
    lead = s.shape[:-1]
    q = s.reshape(-1, 3).copy()
    q[:, 2] = _heading_ring(q[:, 2], w_psi)
    k = min(k, len(level))
    # a few spare candidates so exact ties at the k-th place resolve by key
    k_query = min(k + 2, len(level))
    _, idx = level.tree(w_psi).query(q, k=k_query)
    idx = idx.reshape(len(q), k_query)
    # exact recomputation keeps distances identical to the brute-force metric
    dist = state_distance(s.reshape(-1, 1, 3), level.centers[idx], w_psi)
    rank = np.lexsort((level.key_rank[idx], dist), axis=-1)
    idx = np.take_along_axis(idx, rank, axis=-1)
    dist = np.take_along_axis(dist, rank, axis=-1)
    return idx[:, :k].reshape(lead + (k,)), dist[:, :k].reshape(lead + (k,))


def brute_nearest(level: LevelSet, s, k: int = 1, w_psi: float = HEADING_WEIGHT):
    """Linear-scan reference for :func:`nearest_cells` (one state)."""
    d = state_distance(np.asarray(s, dtype=float)[None, :], level.centers, w_psi)
    order = np.lexsort((level.key_rank, d))[:k]
    return order, d[order]


def uniform_cell_probability(level: LevelSet) -> np.ndarray:
    if len(level) == 0:
        raise EmptyLevelError(f"level {level.t} has no cells")
    return np.full(len(level), 1.0 / len(level))


def propagate_level_probabilities(stack: LevelSetStack, pmf_fn, deltas, p: VehicleParams) -> list[np.ndarray]:
    """Push cell probabilities through the stack with hard successor assignment.

    ``pmf_fn(states)`` gives action probabilities for the representatives of
    a level; mass landing in a claimed or unknown cell is reassigned to the
    nearest cell of the next level.  Returns one probability vector per level.
    """
    deltas = np.asarray(deltas, dtype=float)
    probs = [np.ones(1)]
    for t in range(len(stack) - 1):
        cur, nxt = stack[t], stack[t + 1]
        pmf = np.asarray(pmf_fn(cur.representatives))
        succ = step(cur.representatives[:, None, :], deltas[None, :], p)
        idx, _ = nearest_cells(nxt, succ, k=1)
        mass = (pmf * probs[-1][:, None]).ravel()
        probs.append(np.bincount(idx.ravel(), weights=mass, minlength=len(nxt)))
    return probs


_REC = np.dtype([("key", "<i4", 3), ("center", "<f8", 3)])


def save_stack(stack: LevelSetStack, path) -> None:
    """Write the stack in the little-endian ``CULS`` binary format.

    Layout: magic, u32 version, resolution (3 f64), origin (3 f64), u32 level
    count, u32 has-states flag, then per level a u32 cell count followed by
    ``(ix, iy, ipsi)`` i32 and center f64 records, and the representative
    states as f64 triples when the flag is set.
    """
    r = stack.resolution
    has_states = all(lv.states is not None for lv in stack.levels)
    chunks = [
        STACK_MAGIC,
        struct.pack("<I", STACK_VERSION),
        struct.pack("<3d", r.dx, r.dy, r.dpsi),
        struct.pack("<3d", *map(float, stack.origin)),
        struct.pack("<II", len(stack.levels), int(has_states)),
    ]
    for lv in stack.levels:
        chunks.append(struct.pack("<I", len(lv)))
        arr = np.empty(len(lv), dtype=_REC)
        arr["key"] = lv.keys
        arr["center"] = lv.centers
        chunks.append(arr.tobytes())
        if has_states:
            chunks.append(np.ascontiguousarray(lv.states, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_stack(path) -> LevelSetStack:
    data = Path(path).read_bytes()
    if data[:4] != STACK_MAGIC:
        raise ValueError(f"{path}: not a level-set file (bad magic {data[:4]!r})")
    head = struct.calcsize("<I3d3dI")
    if len(data) < 4 + head:
        raise ValueError(f"{path}: truncated header")
    version, dx, dy, dpsi, ox, oy, opsi, n_levels = struct.unpack_from("<I3d3dI", data, 4)
    if version not in (1, STACK_VERSION):
        raise ValueError(f"{path}: level-set format version {version}, expected {STACK_VERSION}")
    off = 4 + head
    has_states = False
    if version >= 2:
        if off + 4 > len(data):
            raise ValueError(f"{path}: truncated header")
        (flag,) = struct.unpack_from("<I", data, off)
        has_states = bool(flag)
        off += 4
    levels = []
    for t in range(n_levels):
        if off + 4 > len(data):
            raise ValueError(f"{path}: truncated at level {t}")
        (count,) = struct.unpack_from("<I", data, off)
        off += 4
        nbytes = count * _REC.itemsize + (count * 24 if has_states else 0)
        if off + nbytes > len(data):
            raise ValueError(f"{path}: truncated at level {t}")
        arr = np.frombuffer(data, dtype=_REC, count=count, offset=off)
        off += count * _REC.itemsize
        states = None
        if has_states:
            states = np.frombuffer(data, dtype="<f8", count=3 * count, offset=off).reshape(count, 3).astype(float)
            off += 24 * count
        levels.append(LevelSet(t, arr["key"].astype(np.int64), arr["center"].astype(float), states=states))
    if off != len(data):
        raise ValueError(f"{path}: {len(data) - off} trailing bytes")
    claimed = {tuple(k) for lv in levels for k in lv.keys.tolist()}
    return LevelSetStack(levels, Resolution(dx, dy, dpsi), np.array([ox, oy, opsi]), claimed)
