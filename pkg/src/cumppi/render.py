"""Static images: binary PPM rasters and SVG.  Output only; nothing here feeds
back into numeric results."""
from __future__ import annotations

from pathlib import Path

import numpy as np

COLORS = {
    "free": (255, 255, 255),
    "obstacle": (0, 0, 0),
    "hidden": (190, 190, 190),
    "mppi": (220, 30, 30),
    "cu-mppi": (30, 160, 60),
    "log-mppi": (235, 120, 190),
    "cu-logmppi": (0, 190, 210),
    "cuniform": (30, 160, 60),
    "gaussian": (220, 30, 30),
    "nln": (235, 120, 190),
    "injected": (250, 160, 0),
    "goal": (40, 60, 220),
    "path": (20, 20, 120),
}


class Canvas:
    """World-coordinate raster with ``ppm`` meters-per-pixel scaling."""

    def __init__(self, xlim, ylim, px_per_m: float = 50.0):
        self.x0, self.x1 = map(float, xlim)
        self.y0, self.y1 = map(float, ylim)
        self.s = float(px_per_m)
        self.w = max(int(np.ceil((self.x1 - self.x0) * self.s)), 1)
        self.h = max(int(np.ceil((self.y1 - self.y0) * self.s)), 1)
        self.img = np.full((self.h, self.w, 3), 255, dtype=np.uint8)

    def _px(self, xy):
        xy = np.asarray(xy, dtype=float)
        c = np.floor((xy[..., 0] - self.x0) * self.s).astype(int)
        r = np.floor((self.y1 - xy[..., 1]) * self.s).astype(int)
        return r, c

    def _put(self, r, c, color):
        ok = (r >= 0) & (r < self.h) & (c >= 0) & (c < self.w)
        self.img[r[ok], c[ok]] = color

    def disc(self, center, radius, color) -> None:
        rows = (np.arange(self.h) + 0.5) / self.s
        cols = (np.arange(self.w) + 0.5) / self.s
        gy = self.y1 - rows[:, None]
        gx = self.x0 + cols[None, :]
        self.img[np.hypot(gx - center[0], gy - center[1]) <= radius] = color

    def polyline(self, xy, color) -> None:
        xy = np.asarray(xy, dtype=float)[:, :2]
        if len(xy) == 1:
            self._put(*self._px(xy), color)
            return
        for a, b in zip(xy[:-1], xy[1:]):
            n = max(int(np.ceil(np.hypot(*(b - a)) * self.s * 2)), 1)
            pts = a + (b - a) * np.linspace(0.0, 1.0, n + 1)[:, None]
            self._put(*self._px(pts), color)

    def grid(self, grid) -> None:
        centers = grid.cell_centers()[grid.occupancy]
        r, c = self._px(centers)
        half = max(int(round(grid.resolution * self.s / 2)), 0)
        for dr in range(-half, half + 1):
            for dc in range(-half, half + 1):
                self._put(r + dr, c + dc, COLORS["obstacle"])

    def save_ppm(self, path) -> None:
        header = f"P6\n{self.w} {self.h}\n255\n".encode()
        Path(path).write_bytes(header + self.img.tobytes())


def _svg_color(c) -> str:
    return "#%02x%02x%02x" % tuple(c)


def write_svg(path, xlim, ylim, polylines=(), discs=(), px_per_m: float = 50.0) -> None:
    """``polylines`` are ``(xy, color_name)``; ``discs`` are ``(center, radius, color_name)``."""
    x0, x1 = xlim
    y0, y1 = ylim
    w, h = (x1 - x0) * px_per_m, (y1 - y0) * px_per_m

    def tx(p):
        return f"{(p[0] - x0) * px_per_m:.2f},{(y1 - p[1]) * px_per_m:.2f}"

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" '
           f'viewBox="0 0 {w:.2f} {h:.2f}">', '<rect width="100%" height="100%" fill="#ffffff"/>']
    for center, radius, color in discs:
        cx, cy = tx(center).split(",")
        out.append(f'<circle cx="{cx}" cy="{cy}" r="{radius * px_per_m:.2f}" fill="{_svg_color(COLORS[color])}"/>')
    for xy, color in polylines:
        pts = " ".join(tx(p) for p in np.asarray(xy)[:, :2])
        out.append(f'<polyline points="{pts}" fill="none" stroke="{_svg_color(COLORS[color])}" '
                   f'stroke-width="1" stroke-opacity="0.6"/>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")


def bounds_of(points, pad: float = 0.5):
    pts = np.asarray(points, dtype=float).reshape(-1, np.shape(points)[-1])[:, :2]
    lo, hi = pts.min(axis=0) - pad, pts.max(axis=0) + pad
    return (lo[0], hi[0]), (lo[1], hi[1])


def render_fan(states, sources, path_stem, px_per_m: float = 80.0, max_lines: int = 2000) -> None:
    """Trajectory fan as ``<stem>.ppm`` and ``<stem>.svg``."""
    states = np.asarray(states)
    sel = np.arange(len(states))[:max_lines]
    xlim, ylim = bounds_of(states[sel])
    cv = Canvas(xlim, ylim, px_per_m)
    lines = [(states[i], str(sources[i])) for i in sel]
    for xy, c in lines:
        cv.polyline(xy, COLORS.get(c, COLORS["path"]))
    cv.save_ppm(f"{path_stem}.ppm")
    write_svg(f"{path_stem}.svg", xlim, ylim, lines, px_per_m=px_per_m)


def render_episode(world, path_xy, method: str, path_stem, px_per_m: float = 20.0) -> None:
    """Overhead view: obstacles (grey if never revealed), grid, goal and path."""
    path_xy = np.asarray(path_xy, dtype=float)
    if world.bounds is not None:
        xlim, ylim = world.bounds[:2], world.bounds[2:]
    else:
        pts = [path_xy[:, :2], np.asarray(world.config.goal)[None, :2]]
        pts += [o.center[None, :] for o in world.obstacles]
        xlim, ylim = bounds_of(np.concatenate(pts), pad=1.0)
    if world.grid is not None:
        g = world.grid
        xlim = (min(xlim[0], g.origin[0]), max(xlim[1], g.origin[0] + g.width * g.resolution))
        ylim = (min(ylim[0], g.origin[1]), max(ylim[1], g.origin[1] + g.height * g.resolution))
    cv = Canvas(xlim, ylim, px_per_m)
    discs = []
    for o in world.obstacles:
        name = "obstacle" if o.revealed else "hidden"
        cv.disc(o.center, o.radius, COLORS[name])
        discs.append((o.center, o.radius, name))
    if world.grid is not None:
        cv.grid(world.grid)
    goal = np.asarray(world.config.goal)[:2]
    cv.disc(goal, world.config.goal_radius, COLORS["goal"])
    discs.append((goal, world.config.goal_radius, "goal"))
    color = method if method in COLORS else "path"
    cv.polyline(path_xy, COLORS[color])
    cv.save_ppm(f"{path_stem}.ppm")
    write_svg(f"{path_stem}.svg", xlim, ylim, [(path_xy, color)], discs, px_per_m)
