"""Navigation worlds: occupancy grids, circular obstacles that are revealed
when the vehicle gets close, an egocentric costmap, trajectory costs and
episode stepping.

Costs follow three rules.  Obstacle cost latches to ``c_collision`` from the
first colliding state on (that state included).  Goal distance freezes at the
colliding state.  Accumulation stops at the first state inside the goal
radius, which still counts.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .dynamics import VehicleParams, as_state_array, step, wrap_angle

OUTCOMES = ("running", "success", "collision", "timeout")


class GridParseError(ValueError):
    pass


# -- occupancy grids ----------------------------------------------------------

@dataclass
class OccupancyGrid:
    """Binary occupancy; ``occupancy[iy, ix]`` covers the square whose lower-left
    corner is ``origin + (ix, iy) * resolution``."""

    occupancy: np.ndarray
    resolution: float
    origin: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        self.occupancy = np.asarray(self.occupancy, dtype=bool)
        if self.occupancy.ndim != 2:
            raise ValueError("occupancy must be a 2-D array")
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        self.origin = np.asarray(self.origin, dtype=float).reshape(2)

    @property
    def width(self) -> int:
        return self.occupancy.shape[1]

    @property
    def height(self) -> int:
        return self.occupancy.shape[0]

    @classmethod
    def empty(cls, width: int, height: int, resolution: float, origin=(0.0, 0.0)) -> "OccupancyGrid":
        return cls(np.zeros((height, width), dtype=bool), resolution, np.asarray(origin, dtype=float))

    def cell_of(self, xy) -> tuple[np.ndarray, np.ndarray]:
        xy = np.asarray(xy, dtype=float)
        ix = np.floor((xy[..., 0] - self.origin[0]) / self.resolution).astype(np.int64)
        iy = np.floor((xy[..., 1] - self.origin[1]) / self.resolution).astype(np.int64)
        return ix, iy

    def cell_centers(self) -> np.ndarray:
        """``(height, width, 2)`` world coordinates of cell centers."""
        xs = self.origin[0] + (np.arange(self.width) + 0.5) * self.resolution
        ys = self.origin[1] + (np.arange(self.height) + 0.5) * self.resolution
        gx, gy = np.meshgrid(xs, ys)
        return np.stack([gx, gy], axis=-1)

    def occupied(self, xy, outside: bool = False) -> np.ndarray:
        """Occupancy at world points; points off the grid read as ``outside``."""
        ix, iy = self.cell_of(xy)
        inside = (ix >= 0) & (ix < self.width) & (iy >= 0) & (iy < self.height)
        out = np.full(ix.shape, outside, dtype=bool)
        out[inside] = self.occupancy[iy[inside], ix[inside]]
        return out


def write_grid(grid: OccupancyGrid, path) -> None:
    """Text grid: a ``width height resolution`` header, then ``height`` rows of
    0/1 characters listed top row (largest y) first.  The origin is not stored."""
    lines = [f"{grid.width} {grid.height} {grid.resolution!r}"]
    for row in grid.occupancy[::-1]:
        lines.append("".join("1" if v else "0" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def parse_grid(text: str, name: str = "<grid>") -> OccupancyGrid:
    rows: list[str] = []
    header = None
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if header is None:
            parts = line.split()
            if len(parts) != 3:
                raise GridParseError(f"{name}:{lineno}: header must be 'width height resolution'")
            try:
                width, height, res = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                raise GridParseError(f"{name}:{lineno}: malformed header {line!r}") from None
            if width < 1 or height < 1 or not res > 0:
                raise GridParseError(f"{name}:{lineno}: dimensions and resolution must be positive")
            header = (width, height, res)
            continue
        if len(line) != header[0]:
            raise GridParseError(f"{name}:{lineno}: row has {len(line)} cells, header says {header[0]}")
        bad = set(line) - {"0", "1"}
        if bad:
            raise GridParseError(f"{name}:{lineno}: invalid characters {''.join(sorted(bad))!r}")
        if len(rows) == header[1]:
            raise GridParseError(f"{name}:{lineno}: more than {header[1]} rows")
        rows.append(line)
    if header is None:
        raise GridParseError(f"{name}: missing header")
    if len(rows) != header[1]:
        raise GridParseError(f"{name}: expected {header[1]} rows, found {len(rows)}")
    occ = np.array([[c == "1" for c in r] for r in rows], dtype=bool)[::-1]
    return OccupancyGrid(occ, header[2])


def load_grid(path) -> OccupancyGrid:
    return parse_grid(Path(path).read_text(), str(path))


# -- worlds -------------------------------------------------------------------

@dataclass
class Obstacle:
    center: np.ndarray
    radius: float = 1.0
    revealed: bool = False

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).reshape(2)
        if not self.radius > 0:
            raise ValueError("obstacle radius must be positive")


@dataclass(frozen=True)
class WorldConfig:
    goal: tuple = (3.0, 0.0, 0.0)
    goal_radius: float = 0.3
    detection_half_extent: float = 1.5
    reveal_distance: float = float("inf")
    # "center": vehicle position to obstacle edge; "footprint": footprint edge
    # to obstacle edge
    reveal_from: str = "center"
    c_collision: float = 1e3
    lam_obs: float = 1.0
    lam_goal: float = 1.0
    lam_terminal: float = 1.0
    footprint: float = 0.25
    inflation: float = 0.25  # band around the footprint that feeds C_local
    noise_xy: float = 0.01
    noise_psi: float = 0.005
    step_budget: int = 300
    # "planar": Euclidean position error.  "c2c": weighted (x, y, cos, sin) error.
    goal_metric: str = "planar"
    c2c_weights: tuple = (1.5, 1.5, 1.0)
    # First trajectory index allowed to count as reaching the goal and to enter
    # the terminal minimum (1 when the start coincides with the goal).
    goal_from_step: int = 0
    costmap_resolution: float = 0.05

    def __post_init__(self):
        if min(self.goal_radius, self.detection_half_extent, self.reveal_distance,
               self.footprint, self.costmap_resolution) <= 0:
            raise ValueError("extents, radii and resolutions must be positive")
        if self.inflation < 0 or self.noise_xy < 0 or self.noise_psi < 0:
            raise ValueError("inflation and noise must be non-negative")
        if self.step_budget < 1:
            raise ValueError("step_budget must be at least 1")
        if self.goal_metric not in ("planar", "c2c"):
            raise ValueError(f"unknown goal_metric {self.goal_metric!r}")
        if self.reveal_from not in ("footprint", "center"):
            raise ValueError(f"unknown reveal_from {self.reveal_from!r}")
        if self.goal_from_step < 0:
            raise ValueError("goal_from_step must be non-negative")


@dataclass
class World:
    config: WorldConfig = field(default_factory=WorldConfig)
    obstacles: list[Obstacle] = field(default_factory=list)
    grid: OccupancyGrid | None = None
    # (xmin, xmax, ymin, ymax); leaving the box is a collision
    bounds: tuple | None = None
    start: tuple = (0.0, 0.0, 0.0)

    def copy(self) -> "World":
        obs = [Obstacle(o.center.copy(), o.radius, o.revealed) for o in self.obstacles]
        return replace(self, obstacles=obs)

    @property
    def goal(self) -> np.ndarray:
        return np.asarray(self.config.goal, dtype=float)

    def revealed(self) -> list[Obstacle]:
        return [o for o in self.obstacles if o.revealed]


def goal_distance(states, world: World) -> np.ndarray:
    s = as_state_array(states)
    cfg, g = world.config, world.goal
    dx, dy = s[..., 0] - g[0], s[..., 1] - g[1]
    if cfg.goal_metric == "planar":
        return np.hypot(dx, dy)
    wx, wy, wpsi = cfg.c2c_weights
    dc = np.cos(s[..., 2]) - np.cos(g[2])
    ds = np.sin(s[..., 2]) - np.sin(g[2])
    return np.sqrt(wx * dx**2 + wy * dy**2 + wpsi * (dc**2 + ds**2))


def in_collision(xy, world: World, revealed_only: bool = False) -> np.ndarray:
    """Exact footprint test against obstacles, grid cells and bounds."""
    xy = np.asarray(xy, dtype=float)
    r = world.config.footprint
    hit = np.zeros(xy.shape[:-1], dtype=bool)
    for o in world.obstacles:
        if revealed_only and not o.revealed:
            continue
        hit |= np.hypot(xy[..., 0] - o.center[0], xy[..., 1] - o.center[1]) < o.radius + r
    if world.grid is not None:
        hit |= _grid_hit(xy, world.grid, r)
    if world.bounds is not None:
        x0, x1, y0, y1 = world.bounds
        hit |= (xy[..., 0] - r < x0) | (xy[..., 0] + r > x1) | (xy[..., 1] - r < y0) | (xy[..., 1] + r > y1)
    return hit


def _grid_hit(xy, grid: OccupancyGrid, r: float) -> np.ndarray:
    # check every cell within reach of the disc
    span = int(np.ceil(r / grid.resolution)) + 1
    ix, iy = grid.cell_of(xy)
    hit = np.zeros(ix.shape, dtype=bool)
    for ox in range(-span, span + 1):
        for oy in range(-span, span + 1):
            cx, cy = ix + ox, iy + oy
            inside = (cx >= 0) & (cx < grid.width) & (cy >= 0) & (cy < grid.height)
            occ = np.zeros(ix.shape, dtype=bool)
            occ[inside] = grid.occupancy[cy[inside], cx[inside]]
            # closest point of the cell square to the disc center
            lo_x = grid.origin[0] + cx * grid.resolution
            lo_y = grid.origin[1] + cy * grid.resolution
            px = np.clip(xy[..., 0], lo_x, lo_x + grid.resolution)
            py = np.clip(xy[..., 1], lo_y, lo_y + grid.resolution)
            hit |= occ & (np.hypot(xy[..., 0] - px, xy[..., 1] - py) < r)
    return hit


# -- local costmap ------------------------------------------------------------

@dataclass
class LocalCostmap:
    """Egocentric raster of revealed obstacles and static occupancy.

    ``collision`` marks cells whose center puts the footprint in contact with
    an occupied cell; ``local`` is the occupied fraction of the inflated
    footprint disc scaled to ``[0, c_collision / 10]``.
    """

    grid: OccupancyGrid
    collision: np.ndarray
    local: np.ndarray

    def lookup(self, xy) -> tuple[np.ndarray, np.ndarray]:
        ix, iy = self.grid.cell_of(xy)
        inside = (ix >= 0) & (ix < self.grid.width) & (iy >= 0) & (iy < self.grid.height)
        coll = np.zeros(ix.shape, dtype=bool)
        loc = np.zeros(ix.shape)
        coll[inside] = self.collision[iy[inside], ix[inside]]
        loc[inside] = self.local[iy[inside], ix[inside]]
        return coll, loc


def _disc_kernel(radius: float, res: float) -> np.ndarray:
    n = int(np.ceil(radius / res))
    o = np.arange(-n, n + 1) * res
    gx, gy = np.meshgrid(o, o)
    return (np.hypot(gx, gy) <= radius).astype(float)


def local_costmap(world: World, believed) -> LocalCostmap:
    cfg = world.config
    res = cfg.costmap_resolution
    n = int(round(2 * cfg.detection_half_extent / res))
    b = np.asarray(believed, dtype=float)
    origin = b[:2] - cfg.detection_half_extent
    win = OccupancyGrid.empty(n, n, res, origin)
    pts = win.cell_centers()
    occ = np.zeros((n, n), dtype=bool)
    for o in world.revealed():
        occ |= np.hypot(pts[..., 0] - o.center[0], pts[..., 1] - o.center[1]) <= o.radius
    if world.grid is not None:
        occ |= world.grid.occupied(pts)
    if world.bounds is not None:
        x0, x1, y0, y1 = world.bounds
        occ |= (pts[..., 0] < x0) | (pts[..., 0] > x1) | (pts[..., 1] < y0) | (pts[..., 1] > y1)
    win.occupancy = occ
    if not occ.any():
        z = np.zeros((n, n))
        return LocalCostmap(win, z.astype(bool), z)
    # distance from each cell center to the nearest occupied cell center
    dist = ndimage.distance_transform_edt(~occ) * res
    collision = dist < cfg.footprint + 0.5 * res
    kern = _disc_kernel(cfg.footprint + cfg.inflation, res)
    frac = ndimage.convolve(occ.astype(float), kern / kern.sum(), mode="constant", cval=0.0)
    return LocalCostmap(win, collision, np.clip(frac, 0.0, 1.0) * cfg.c_collision / 10.0)


# -- costs --------------------------------------------------------------------

def obstacle_cost(traj, world: World, costmap: LocalCostmap | None = None) -> np.ndarray:
    """Per-state obstacle cost with the collision latch; shape ``traj.shape[:-1]``.

    Without a costmap, collisions are tested exactly against revealed
    obstacles, grid and bounds, and C_local is zero.
    """
    traj = as_state_array(traj)
    if costmap is None:
        coll = in_collision(traj[..., :2], world, revealed_only=True)
        local = np.zeros(coll.shape)
    else:
        coll, local = costmap.lookup(traj[..., :2])
    latched = np.logical_or.accumulate(coll, axis=-1)
    return np.where(latched, world.config.c_collision, local)


def _collision_flags(traj, world, costmap):
    if costmap is None:
        return in_collision(traj[..., :2], world, revealed_only=True)
    return costmap.lookup(traj[..., :2])[0]


def goal_cost(traj, world: World, costmap: LocalCostmap | None = None) -> np.ndarray:
    """Per-state goal distance, frozen at the first colliding state."""
    traj = as_state_array(traj)
    d = goal_distance(traj, world)
    coll = _collision_flags(traj, world, costmap)
    return _freeze(d, coll)


def _freeze(d, coll):
    T1 = d.shape[-1]
    t = np.arange(T1)
    first = np.where(coll.any(axis=-1), np.argmax(coll, axis=-1), T1)
    idx = np.minimum(t, first[..., None])
    idx = np.minimum(idx, T1 - 1)
    return np.take_along_axis(d, idx, axis=-1)


def trajectory_cost(traj, world: World, costmap: LocalCostmap | None = None) -> np.ndarray:
    """Scalar cost per trajectory.

    ``J = lam_terminal * min goal + sum(lam_obs * obstacle + lam_goal * goal)``
    over states ``goal_from_step <= t < T_stop``, where ``T_stop`` is one past
    the first state inside the goal radius, or the trajectory length.
    """
    traj = as_state_array(traj)
    cfg = world.config
    obs = obstacle_cost(traj, world, costmap)
    gc = goal_cost(traj, world, costmap)
    T1 = traj.shape[-2]
    t = np.arange(T1)
    active = t >= cfg.goal_from_step
    reached = (gc <= cfg.goal_radius) & active
    t_stop = np.where(reached.any(axis=-1), np.argmax(reached, axis=-1) + 1, T1)
    keep = active & (t < t_stop[..., None])
    running = np.where(keep, cfg.lam_obs * obs + cfg.lam_goal * gc, 0.0).sum(axis=-1)
    terminal = np.where(keep, gc, np.inf).min(axis=-1)
    terminal = np.where(np.isfinite(terminal), terminal, 0.0)
    return cfg.lam_terminal * terminal + running


# -- simulation ---------------------------------------------------------------

@dataclass
class SimState:
    true_state: np.ndarray
    believed_state: np.ndarray
    step: int = 0
    outcome: str = "running"
    path_length: float = 0.0


def reveal_gap(world: World, xy, o: Obstacle) -> float:
    gap = float(np.hypot(*(np.asarray(xy, dtype=float) - o.center))) - o.radius
    return gap - world.config.footprint if world.config.reveal_from == "footprint" else gap


def reveal(world: World, xy) -> None:
    """Reveal (permanently) every obstacle within the reveal distance."""
    for o in world.obstacles:
        if not o.revealed and reveal_gap(world, xy, o) <= world.config.reveal_distance:
            o.revealed = True


def _noisy(s, cfg: WorldConfig, rng) -> np.ndarray:
    noise = np.array([cfg.noise_xy, cfg.noise_xy, cfg.noise_psi])
    b = s + (rng.normal(0.0, 1.0, 3) * noise if noise.any() else 0.0)
    b[2] = wrap_angle(b[2])
    return b


def reset_sim(world: World, rng: np.random.Generator) -> SimState:
    s = as_state_array(world.start).astype(float).copy()
    s[2] = wrap_angle(s[2])
    reveal(world, s[:2])
    return SimState(s, _noisy(s, world.config, rng))


def step_sim(sim: SimState, u: float, world: World, p: VehicleParams, rng: np.random.Generator) -> SimState:
    """Advance the true state; reveal, then classify the outcome.

    Collisions use every obstacle whether or not it is revealed.  Mutates
    ``world`` (reveal flags) and returns a new state.
    """
    if sim.outcome != "running":
        raise RuntimeError(f"cannot step a finished episode (outcome {sim.outcome})")
    u = float(np.clip(u, -p.delta_max, p.delta_max))
    nxt = step(sim.true_state, u, p)
    reveal(world, nxt[:2])
    cfg = world.config
    k = sim.step + 1
    outcome = "running"
    if in_collision(nxt[:2], world):
        outcome = "collision"
    elif k >= cfg.goal_from_step and goal_distance(nxt, world) <= cfg.goal_radius:
        outcome = "success"
    elif k >= cfg.step_budget:
        outcome = "timeout"
    length = sim.path_length + float(np.hypot(*(nxt[:2] - sim.true_state[:2])))
    return SimState(nxt, _noisy(nxt, cfg, rng), k, outcome, length)


def generate_cluttered_world(n_obstacles: int, extent=(35.0, 10.0), min_clearance: float = 2.0,
                             seed: int = 0, radius: float = 1.0, config: WorldConfig | None = None,
                             max_attempts: int = 100_000) -> World:
    """Rejection-sample non-overlapping discs in a ``extent`` box.

    Start sits at ``(1, h/2)`` heading +x and the goal at ``(w - 1, h/2)``;
    no disc comes within ``min_clearance`` of either.
    """
    w, h = map(float, extent)
    start = (1.0, h / 2, 0.0)
    goal = (w - 1.0, h / 2, 0.0)
    cfg = replace(config or WorldConfig(), goal=goal)
    rng = np.random.default_rng(seed)
    centers: list[np.ndarray] = []
    attempts = 0
    while len(centers) < n_obstacles:
        attempts += 1
        if attempts > max_attempts:
            raise RuntimeError(f"could not place {n_obstacles} obstacles after {max_attempts} attempts "
                               f"(placed {len(centers)})")
        c = rng.uniform([radius, radius], [w - radius, h - radius])
        if min(np.hypot(*(c - start[:2])), np.hypot(*(c - goal[:2]))) < radius + min_clearance:
            continue
        if any(np.hypot(*(c - o)) < 2 * radius for o in centers):
            continue
        centers.append(c)
    return World(cfg, [Obstacle(c, radius) for c in centers], None, (0.0, w, 0.0, h), start)


# -- episode log --------------------------------------------------------------

LOG_COLUMNS = ["step", "x_true", "y_true", "psi_true", "x_bel", "y_bel", "psi_bel", "delta_cmd", "outcome"]


def write_episode_log(rows, path) -> None:
    """``rows`` are ``(SimState, delta_cmd)`` pairs; delta is blank for the last state."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_COLUMNS)
        for sim, delta in rows:
            w.writerow([sim.step, *(repr(float(v)) for v in sim.true_state),
                        *(repr(float(v)) for v in sim.believed_state),
                        "" if delta is None else repr(float(delta)), sim.outcome])
