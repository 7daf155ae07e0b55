"""INI run configuration.

Every key has a default (below, with a one-line description).  Unknown
sections or keys are errors.  The config holds no file paths; inputs and
outputs come from command-line flags.  The defaults describe the desk-scale
setup: a 3 s horizon at 0.1 m / 0.1 m / 9 degree cells and a 64-wide policy
network.
"""
from __future__ import annotations

import configparser
import json
import math
from pathlib import Path


class ConfigError(ValueError):
    pass


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.replace(",", " ").split()]


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_float(text: str):
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


def _optional_int(text: str):
    return None if text.strip().lower() in ("", "none", "auto") else int(text)


def _states(text: str) -> list[tuple[float, float, float]]:
    out = []
    for chunk in text.split(";"):
        if chunk.strip():
            v = _floats(chunk)
            if len(v) != 3:
                raise ValueError(f"expected x,y,psi triples, got {chunk.strip()!r}")
            out.append(tuple(v))
    return out


# section -> key -> (default text, parser, description)
SCHEMA: dict[str, dict[str, tuple]] = {
    "vehicle": {
        "v": ("1.0", float, "forward speed, m/s"),
        "wheelbase": ("0.33", float, "wheelbase, m"),
        "dt": ("0.2", float, "control period, s"),
        "delta_max": ("0.524", float, "steering limit, rad"),
    },
    "levelset": {
        "dx": ("0.1", float, "cell size along x, m"),
        "dy": ("0.1", float, "cell size along y, m"),
        "dpsi_deg": ("9.0", float, "heading cell size, degrees"),
        "n_steps": ("15", int, "number of level sets after the root (3 s at dt 0.2)"),
        "n_actions": ("45", int, "evenly spaced steering angles in [-delta_max, delta_max]"),
        "expand_from": ("state", str, "expand from 'state' (reachable representatives) or 'center'"),
    },
    "train": {
        "lr": ("1e-3", float, "Adam learning rate"),
        "epochs": ("200", int, "passes over all level sets"),
        "hidden": ("64", int, "width of both hidden layers"),
        "batchnorm": ("false", _bool, "batch-norm after each hidden layer"),
        "k_neighbors": ("8", int, "candidate cells per soft assignment"),
        "beta_assign": ("5.0", _optional_float, "kernel sharpness, 1/m ('auto' = 1/dx)"),
        "seed": ("0", int, "weight-initialization seed"),
    },
    "sampler": {
        "method": ("cuniform", str, "sample/analyze sampler: cuniform, gaussian or nln"),
        "n_traj": ("10000", int, "trajectories for sample and analyze"),
        "sigma": ("0.1", float, "steering noise std for gaussian/nln, rad"),
        "sigma_ln": ("0.5", float, "log-normal shape for nln"),
        "horizon": ("15", int, "steps per sampled trajectory"),
    },
    "mppi": {
        "method": ("cu-mppi", str, "controller: mppi, log-mppi, cu-mppi or cu-logmppi"),
        "lam": ("0.5", float, "temperature"),
        "n_samples": ("1000", int, "trajectories per control step"),
        "horizon": ("15", int, "planning steps"),
        "sigma": ("0.1", float, "perturbation std, rad"),
        "sigma_ln": ("0.5", float, "log-normal shape for the nln variants"),
        "gamma": ("0.0", float, "control-cost correction weight in [0, 1]"),
        "n_cuniform": ("auto", _optional_int, "C-Uniform candidates ('auto' = half of n_samples)"),
    },
    "world": {
        "task": ("goal", str, "goal, return, c2c or cluttered"),
        "start": ("0,0,0", _floats, "start pose x,y,psi"),
        "goal": ("3,0,0", _floats, "goal pose x,y,psi"),
        "goal_radius": ("0.3", float, "success radius (weighted metric for return/c2c)"),
        "detection_half_extent": ("1.5", float, "half side of the egocentric costmap, m"),
        "reveal_distance": ("inf", float, "obstacle reveal distance, m"),
        "reveal_from": ("center", str, "measure reveal from vehicle 'center' or 'footprint' edge"),
        "c_collision": ("1000", float, "collision cost"),
        "lam_obs": ("1.0", float, "obstacle cost weight"),
        "lam_goal": ("1.0", float, "running goal cost weight"),
        "lam_terminal": ("1.0", float, "terminal (min goal distance) weight"),
        "footprint": ("0.25", float, "vehicle disc radius, m"),
        "inflation": ("0.25", float, "band around the footprint feeding the proximity cost, m"),
        "noise_xy": ("0.01", float, "localization noise std, m"),
        "noise_psi": ("0.005", float, "localization noise std, rad"),
        "step_budget": ("300", int, "control steps before timeout"),
        "n_obstacles": ("20", int, "obstacles for the cluttered task"),
        "extent": ("35,10", _floats, "cluttered world size, m"),
        "min_clearance": ("2.0", float, "obstacle-free margin around start and goal, m"),
        "env_seed": ("0", int, "layout seed for the cluttered task"),
    },
    "experiment": {
        "suite": ("c2c", str, "benchmark suite: c2c or dynamic"),
        "methods": ("mppi,log-mppi,cu-mppi,cu-logmppi", str, "controllers to compare"),
        "sigmas": ("0.05,0.1", _floats, "perturbation stds to sweep"),
        "n_trajs": ("1000", _ints, "sample counts to sweep"),
        "n_seeds": ("10", int, "trials per setting (c2c) or environments per obstacle count (dynamic)"),
        "c2c_goals": ("0,0,0; 0,1.2,3.14159265; -1,1,1.5707963", _states,
                      "C2C goal poses; the start (0,0,0) itself means return-to-start"),
        "c2c_horizon": ("23", int, "planning steps for C2C tasks (4.6 s)"),
        "c2c_goal_radius": ("0.2", float, "success radius for C2C tasks, weighted metric"),
        "c2c_step_budget": ("60", int, "control steps for C2C tasks"),
        "n_obstacles": ("10,15,20,25,30", _ints, "obstacle counts for the dynamic suite"),
        "reveal_distances": ("1.5,1.25,1.0,0.5", _floats, "reveal distances for the dynamic suite"),
    },
}


class RunConfig:
    def __init__(self, values: dict[str, dict], source: Path | None = None):
        self.values = values
        self.source = source

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, float) and math.isinf(v):
                return "inf"
            if isinstance(v, (list, tuple)):
                return [clean(x) for x in v]
            return v
        return {s: {k: clean(v) for k, v in kv.items()} for s, kv in self.values.items()}

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def defaults() -> RunConfig:
    return load_config(None)


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    source = None
    if path is not None:
        source = Path(path)
        if not source.is_file():
            raise ConfigError(f"config file not found: {source}")
        try:
            cp.read_string(source.read_text(), str(source))
        except configparser.Error as exc:
            raise ConfigError(f"{source}: {exc}".splitlines()[0]) from None
    values: dict[str, dict] = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key in cp[section]:
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key '{key}' in section [{section}]")
    for section, keys in SCHEMA.items():
        values[section] = {}
        for key, (default, parse, _) in keys.items():
            text = cp.get(section, key, fallback=default)
            if overrides and (section, key) in overrides and overrides[(section, key)] is not None:
                text = str(overrides[(section, key)])
            try:
                val = parse(text)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key} = {text!r}: {exc}") from None
            values[section][key] = val
    _validate(values)
    return RunConfig(values, source)


def _validate(v: dict) -> None:
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(v["levelset"]["expand_from"] in ("state", "center"), "[levelset] expand_from must be state or center")
    need(v["sampler"]["method"] in ("cuniform", "gaussian", "nln"), "[sampler] method must be cuniform, gaussian or nln")
    need(v["mppi"]["method"] in ("mppi", "log-mppi", "cu-mppi", "cu-logmppi"),
         "[mppi] method must be mppi, log-mppi, cu-mppi or cu-logmppi")
    need(v["world"]["task"] in ("goal", "return", "c2c", "cluttered"), "[world] task must be goal, return, c2c or cluttered")
    need(v["world"]["reveal_from"] in ("center", "footprint"), "[world] reveal_from must be center or footprint")
    need(len(v["world"]["start"]) == 3 and len(v["world"]["goal"]) == 3, "[world] start and goal need x,y,psi")
    need(len(v["world"]["extent"]) == 2, "[world] extent needs width,height")
    need(v["experiment"]["suite"] in ("c2c", "dynamic"), "[experiment] suite must be c2c or dynamic")
    need(v["experiment"]["n_seeds"] >= 0, "[experiment] n_seeds must be non-negative")
    for m in v["experiment"]["methods"].replace(",", " ").split():
        need(m in ("mppi", "log-mppi", "cu-mppi", "cu-logmppi"), f"[experiment] unknown method {m!r}")
    need(v["levelset"]["n_steps"] >= 1, "[levelset] n_steps must be at least 1")
    need(v["sampler"]["n_traj"] >= 0, "[sampler] n_traj must be non-negative")


def describe() -> str:
    """Every key with its default and description, as INI text."""
    lines = []
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (default, _, doc) in keys.items():
            lines.append(f"# {doc}")
            lines.append(f"{key} = {default}")
        lines.append("")
    return "\n".join(lines)
