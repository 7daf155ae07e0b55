"""Uniformity, coverage, success rate and path length."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .levelset import EmptyLevelError, LevelSetStack, nearest_cells


@dataclass
class UniformityReport:
    ratios: np.ndarray  # index t is level t
    n_samples: int

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["level_t", "ratio"])
            for t, r in enumerate(self.ratios):
                w.writerow([t, repr(float(r))])

    def to_dict(self) -> dict:
        return {"n_samples": self.n_samples, "ratios": [float(r) for r in self.ratios]}


@dataclass
class CoverageReport:
    visited: int
    total: int
    visited_2d: int
    total_2d: int
    per_level: list = field(default_factory=list)  # (visited, size) per level

    @property
    def percent(self) -> float:
        return 100.0 * self.visited / self.total if self.total else 0.0

    @property
    def percent_2d(self) -> float:
        return 100.0 * self.visited_2d / self.total_2d if self.total_2d else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(percent=self.percent, percent_2d=self.percent_2d)
        return d

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["level_t", "visited", "cells"])
            for t, (v, n) in enumerate(self.per_level):
                w.writerow([t, v, n])


def _states(trajectories) -> np.ndarray:
    return np.asarray(getattr(trajectories, "states", trajectories), dtype=float)


def occurrence_ratio(counts) -> float:
    """Entropy of the normalized counts over ``ln(len(counts))``; 1 for one cell."""
    counts = np.asarray(counts, dtype=float)
    if counts.size == 0:
        raise EmptyLevelError("empty level")
    if counts.size == 1:
        return 1.0
    total = counts.sum()
    if total <= 0:
        return 0.0
    o = counts[counts > 0] / total
    return float(-(o * np.log(o)).sum() / np.log(counts.size))


def uniformity_percent(levels: LevelSetStack, trajectories, w_psi: float = 1.0) -> UniformityReport:
    """Per-level entropy ratio of nearest-cell occurrences (natural log).

    Trajectories must start at the stack's initial state, in its frame, and
    be at least as long as the stack.
    """
    states = _states(trajectories)
    if states.ndim != 3 or states.shape[1] < len(levels):
        raise ValueError(f"trajectories need at least {len(levels)} states each")
    ratios = []
    for t, lv in enumerate(levels.levels):
        if len(lv) == 0:
            raise EmptyLevelError(f"level {t} is empty")
        if len(states) == 0:
            ratios.append(0.0 if len(lv) > 1 else 1.0)
            continue
        idx, _ = nearest_cells(lv, states[:, t], k=1, w_psi=w_psi)
        ratios.append(occurrence_ratio(np.bincount(idx[:, 0], minlength=len(lv))))
    return UniformityReport(np.array(ratios), len(states))


def coverage_percent(levels: LevelSetStack, trajectories, w_psi: float = 1.0) -> CoverageReport:
    """Share of all (level, cell) pairs hit within one cell diagonal."""
    states = _states(trajectories)
    radius = levels.resolution.diagonal(w_psi)
    total = sum(len(lv) for lv in levels.levels)
    cells_2d = {(int(k[0]), int(k[1])) for lv in levels.levels for k in lv.keys}
    per_level, seen_2d = [], set()
    n = min(len(levels), states.shape[1]) if states.ndim == 3 and len(states) else 0
    for t, lv in enumerate(levels.levels):
        if t >= n:
            per_level.append((0, len(lv)))
            continue
        idx, dist = nearest_cells(lv, states[:, t], k=1, w_psi=w_psi)
        hit = np.unique(idx[dist[:, 0] <= radius, 0])
        per_level.append((len(hit), len(lv)))
        seen_2d.update(map(tuple, lv.keys[hit, :2].tolist()))
    visited = sum(v for v, _ in per_level)
    return CoverageReport(visited, total, len(seen_2d), len(cells_2d), per_level)


def success_rate(outcomes) -> float:
    outcomes = list(outcomes)
    if not outcomes:
        raise ValueError("no outcomes")
    return sum(o == "success" for o in outcomes) / len(outcomes)


def path_length(xy) -> float:
    xy = np.asarray(xy, dtype=float)[:, :2]
    return float(np.hypot(*np.diff(xy, axis=0).T).sum()) if len(xy) > 1 else 0.0


def avg_path_length(episodes) -> float | None:
    """Mean path length over successful episodes; ``None`` when there are none.

    ``episodes`` yields ``(outcome, path)`` pairs where ``path`` is either a
    length or an array of visited positions.
    """
    lengths = []
    for outcome, path in episodes:
        if outcome != "success":
            continue
        lengths.append(float(path) if np.ndim(path) == 0 else path_length(path))
    return float(np.mean(lengths)) if lengths else None


def write_json(report: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
