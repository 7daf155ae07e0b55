"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 configuration error, 3 runtime error.
Every run writes ``resolved_config.json`` next to its outputs.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, describe, load_config
from .control import METHODS, Controller, MppiConfig, run_episode
from .dynamics import VehicleParams
from .levelset import LevelSetStack, Resolution, build_level_sets, load_stack, save_stack
from .metrics import coverage_percent, uniformity_percent, write_json
from .policy import ActionSet, PolicyNetwork, TrainConfig, load_model, save_model, train, write_loss_trace
from .render import render_episode, render_fan
from .sampling import (GaussianSamplerConfig, NlnSamplerConfig, TrajectoryBatch, sample_cuniform,
                       sample_gaussian, sample_nln)
from .world import World, WorldConfig, generate_cluttered_world, load_grid, write_episode_log

BENCH_COLUMNS = ["method", "sigma", "n_traj", "env_id", "reveal_dist", "outcome", "path_length"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# -- config helpers -----------------------------------------------------------

def vehicle(cfg: RunConfig) -> VehicleParams:
    v = cfg["vehicle"]
    return VehicleParams(v["v"], v["wheelbase"], v["dt"], v["delta_max"])


def action_set(cfg: RunConfig) -> ActionSet:
    return ActionSet.uniform(cfg["vehicle"]["delta_max"], cfg["levelset"]["n_actions"])


def resolution(cfg: RunConfig) -> Resolution:
    ls = cfg["levelset"]
    return Resolution(ls["dx"], ls["dy"], np.deg2rad(ls["dpsi_deg"]))


def make_stack(cfg: RunConfig, n_steps: int | None = None) -> LevelSetStack:
    ls = cfg["levelset"]
    return build_level_sets(np.zeros(3), action_set(cfg), vehicle(cfg), resolution(cfg),
                            n_steps or ls["n_steps"], expand_from=ls["expand_from"])


def train_config(cfg: RunConfig, seed: int | None) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(lr=t["lr"], epochs=t["epochs"], beta_assign=t["beta_assign"],
                       k_neighbors=t["k_neighbors"], seed=t["seed"] if seed is None else seed)


def new_network(cfg: RunConfig) -> PolicyNetwork:
    t = cfg["train"]
    h = t["hidden"]
    return PolicyNetwork((4, h, h, cfg["levelset"]["n_actions"]), batchnorm=t["batchnorm"], seed=t["seed"])


def world_config(cfg: RunConfig) -> WorldConfig:
    w = cfg["world"]
    keys = ("goal_radius", "detection_half_extent", "reveal_distance", "reveal_from", "c_collision",
            "lam_obs", "lam_goal", "lam_terminal", "footprint", "inflation", "noise_xy", "noise_psi",
            "step_budget")
    return WorldConfig(goal=tuple(w["goal"]), **{k: w[k] for k in keys})


def c2c_config(base: WorldConfig, start, goal, exp: dict) -> WorldConfig:
    """Configuration-to-configuration task: weighted pose error, heavy terminal term."""
    returning = np.allclose(np.asarray(goal[:2]) - np.asarray(start[:2]), 0.0)
    return replace(base, goal=tuple(goal), goal_metric="c2c", lam_terminal=20.0, lam_obs=0.0,
                   goal_radius=exp["c2c_goal_radius"], step_budget=exp["c2c_step_budget"],
                   goal_from_step=1 if returning else 0)


def make_world(cfg: RunConfig, map_path=None) -> World:
    w = cfg["world"]
    base = world_config(cfg)
    if map_path is not None:
        return World(base, [], load_grid(map_path), None, tuple(w["start"]))
    if w["task"] == "cluttered":
        return generate_cluttered_world(w["n_obstacles"], tuple(w["extent"]), w["min_clearance"],
                                        w["env_seed"], config=base)
    if w["task"] in ("return", "c2c"):
        goal = w["start"] if w["task"] == "return" else w["goal"]
        exp = {"c2c_goal_radius": w["goal_radius"], "c2c_step_budget": w["step_budget"]}
        return World(c2c_config(base, w["start"], goal, exp), start=tuple(w["start"]))
    return World(base, start=tuple(w["start"]))


def mppi_config(cfg: RunConfig, sigma=None, n_traj=None, horizon=None) -> MppiConfig:
    m = cfg["mppi"]
    return MppiConfig(lam=m["lam"], n_samples=n_traj or m["n_samples"], horizon=horizon or m["horizon"],
                      sigma=m["sigma"] if sigma is None else sigma, sigma_ln=m["sigma_ln"],
                      gamma=m["gamma"], n_cuniform=m["n_cuniform"])


def episode_rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


def _load_net(args, cfg, required: bool) -> PolicyNetwork | None:
    if args.model is None:
        if required:
            raise UsageError("this command needs --model (train one with 'cumppi train')")
        return None
    net = load_model(args.model)
    if net.n_actions != cfg["levelset"]["n_actions"]:
        raise ConfigError(f"model has {net.n_actions} actions, config [levelset] n_actions = "
                          f"{cfg['levelset']['n_actions']}")
    return net


def _stack(args, cfg) -> LevelSetStack:
    return load_stack(args.levelsets) if getattr(args, "levelsets", None) else make_stack(cfg)


def _fmt(x) -> str:
    return repr(float(x))


# -- commands -----------------------------------------------------------------

def cmd_build_levelsets(args, cfg, out: Path) -> None:
    stack = make_stack(cfg)
    save_stack(stack, out / "levelsets.culs")
    with open(out / "level_sizes.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["level_t", "cells"])
        for t, n in enumerate(stack.sizes):
            w.writerow([t, n])
    print(f"built {len(stack)} level sets ({sum(stack.sizes)} cells) -> {out / 'levelsets.culs'}")


def cmd_train(args, cfg, out: Path) -> None:
    stack = _stack(args, cfg)
    net = new_network(cfg)
    result = train(net, stack, action_set(cfg), vehicle(cfg), train_config(cfg, args.seed))
    save_model(net, out / "model.cunn")
    write_loss_trace(result.trace, out / "loss_trace.csv")
    last = [loss for e, _, loss in result.trace if e == cfg["train"]["epochs"] - 1]
    print(f"trained {cfg['train']['epochs']} epochs, final mean level loss {np.mean(last):.6f} "
          f"-> {out / 'model.cunn'}")


def _sample(args, cfg, n: int, horizon: int, rng) -> TrajectoryBatch:
    s = cfg["sampler"]
    method = args.method or s["method"]
    sigma = s["sigma"] if args.sigma is None else args.sigma
    p = vehicle(cfg)
    if method == "cuniform":
        net = _load_net(args, cfg, required=True)
        return sample_cuniform(net, action_set(cfg), np.zeros(3), horizon, n, p, rng)
    if method == "gaussian":
        return sample_gaussian(np.zeros(horizon), GaussianSamplerConfig(sigma, horizon), n, rng, p=p)
    if method == "nln":
        return sample_nln(np.zeros(horizon), NlnSamplerConfig(sigma, s["sigma_ln"], horizon), n, rng, p=p)
    raise UsageError(f"unknown sampler {method!r}; choose cuniform, gaussian or nln")


def cmd_sample(args, cfg, out: Path) -> None:
    n = args.n_traj if args.n_traj is not None else cfg["sampler"]["n_traj"]
    if n < 1:
        raise UsageError("--n-traj must be at least 1 for sample")
    batch = _sample(args, cfg, n, cfg["sampler"]["horizon"], episode_rng(args.seed or 0))
    batch.to_csv(out / "trajectories.csv")
    render_fan(batch.states, batch.sources, out / "fan")
    print(f"sampled {n} trajectories -> {out / 'trajectories.csv'}")


def cmd_analyze(args, cfg, out: Path) -> None:
    stack = _stack(args, cfg)
    n = args.n_traj if args.n_traj is not None else cfg["sampler"]["n_traj"]
    batch = _sample(args, cfg, n, len(stack) - 1, episode_rng(args.seed or 0))
    uni = uniformity_percent(stack, batch)
    cov = coverage_percent(stack, batch)
    uni.to_csv(out / "uniformity.csv")
    cov.to_csv(out / "coverage.csv")
    write_json({"uniformity": uni.to_dict(), "coverage": cov.to_dict(),
                "sampler": args.method or cfg["sampler"]["method"]}, out / "report.json")
    print(f"uniformity min {uni.ratios[1:].min():.4f} mean {uni.ratios[1:].mean():.4f}; "
          f"coverage {cov.percent:.2f}% (2-D {cov.percent_2d:.2f}%)")


def cmd_simulate(args, cfg, out: Path) -> None:
    method = args.method or cfg["mppi"]["method"]
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    net = _load_net(args, cfg, required=method.startswith("cu-"))
    world = make_world(cfg, args.map)
    horizon = None
    if world.config.goal_metric == "c2c":
        horizon = cfg["experiment"]["c2c_horizon"]
    ctl = Controller(method, mppi_config(cfg, args.sigma, args.n_traj, horizon), vehicle(cfg), net, action_set(cfg))
    ep = run_episode(world, ctl, episode_rng(args.seed or 0), vehicle(cfg))
    write_episode_log(ep.log, out / "episode.csv")
    final = ep.log[-1][0]
    render_episode(ep.world, ep.states, method, out / "episode")
    write_json({"method": method, "outcome": ep.outcome, "steps": ep.steps,
                "path_length": ep.path_length, "final_state": [float(v) for v in final.true_state]},
               out / "summary.json")
    print(f"{method}: {ep.outcome} after {ep.steps} steps, path {ep.path_length:.2f} m")


def _methods(args, cfg) -> list[str]:
    if args.method:
        return [args.method]
    return cfg["experiment"]["methods"].replace(",", " ").split()


def cmd_benchmark(args, cfg, out: Path) -> None:
    exp = cfg["experiment"]
    suite = args.suite or exp["suite"]
    methods = _methods(args, cfg)
    for m in methods:
        if m not in METHODS:
            raise UsageError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    net = _load_net(args, cfg, required=any(m.startswith("cu-") for m in methods) and exp["n_seeds"] > 0)
    sigmas = [args.sigma] if args.sigma is not None else exp["sigmas"]
    n_trajs = [args.n_traj] if args.n_traj is not None else exp["n_trajs"]
    p, acts, seed = vehicle(cfg), action_set(cfg), args.seed or 0
    base = world_config(cfg)
    rows = []

    def run(world, env_key, env_id, reveal, horizon):
        for method in methods:
            for sigma in sigmas:
                for n in n_trajs:
                    ctl = Controller(method, mppi_config(cfg, sigma, n, horizon), p, net, acts)
                    ep = run_episode(world, ctl, episode_rng(seed, *env_key), p)
                    rows.append([method, _fmt(sigma), n, env_id, reveal, ep.outcome,
                                 _fmt(ep.path_length) if ep.outcome == "success" else ""])
                    print(f"{method} sigma={sigma} n={n} env={env_id} reveal={reveal}: {ep.outcome}", flush=True)

    if suite == "c2c":
        start = (0.0, 0.0, 0.0)
        for g, goal in enumerate(exp["c2c_goals"]):
            wc = c2c_config(base, start, goal, exp)
            for trial in range(exp["n_seeds"]):
                run(World(wc, start=start), (0, g, trial), f"c2c{g}-t{trial}", "", exp["c2c_horizon"])
    elif suite == "dynamic":
        w = cfg["world"]
        for n_obs in exp["n_obstacles"]:
            for env in range(exp["n_seeds"]):
                layout = generate_cluttered_world(n_obs, tuple(w["extent"]), w["min_clearance"],
                                                  seed=int(np.random.SeedSequence([seed, 1, n_obs, env]).generate_state(1)[0]),
                                                  config=base)
                for r, reveal in enumerate(exp["reveal_distances"]):
                    world = replace(layout.copy(), config=replace(layout.config, reveal_distance=reveal))
                    run(world, (1, n_obs, env, r), f"obs{n_obs}-e{env}", _fmt(reveal), None)
    else:
        raise UsageError(f"unknown suite {suite!r}; choose c2c or dynamic")
    with open(out / "results.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(BENCH_COLUMNS)
        wr.writerows(rows)
    print(f"{len(rows)} episodes -> {out / 'results.csv'}")


COMMANDS = {
    "build-levelsets": (cmd_build_levelsets, "generate and save the discretized level sets"),
    "train": (cmd_train, "train the action-policy network"),
    "sample": (cmd_sample, "sample a trajectory fan (CSV + image)"),
    "analyze": (cmd_analyze, "uniformity and coverage reports"),
    "simulate": (cmd_simulate, "run one closed-loop episode"),
    "benchmark": (cmd_benchmark, "run an experiment suite and write results.csv"),
}


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="cumppi", description="C-Uniform trajectory sampling and MPPI control.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("--print-config", action="store_true", help="print every config key with its default and exit")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.add_argument("--config", help="INI config file (defaults apply to missing keys)")
        sp.add_argument("--seed", type=int, default=None, help="master seed (default 0; train: [train] seed)")
        sp.add_argument("--out-dir", default=".", help="output directory (created if missing)")
        if name in ("train", "analyze"):
            sp.add_argument("--levelsets", help="level-set file from build-levelsets (built from config if omitted)")
        if name in ("sample", "analyze", "simulate", "benchmark"):
            sp.add_argument("--model", help="trained model file")
            sp.add_argument("--n-traj", type=int, default=None, help="trajectory count override")
            sp.add_argument("--sigma", type=float, default=None, help="perturbation std override")
            sp.add_argument("--method", default=None, help="sampler (sample/analyze) or controller override")
        if name == "simulate":
            sp.add_argument("--map", help="occupancy grid text file")
        if name == "benchmark":
            sp.add_argument("--suite", choices=("c2c", "dynamic"), default=None, help="suite override")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.print_config:
        print(describe())
        return 0
    if args.command is None:
        ap.print_usage(sys.stderr)
        print("cumppi: error: a command is required", file=sys.stderr)
        return 1
    try:
        cfg = load_config(args.config)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        run_info = {k: v for k, v in sorted(vars(args).items()) if k not in ("out_dir", "print_config")}
        resolved = {"config": cfg.to_dict(), "run": run_info}
        (out / "resolved_config.json").write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")
        COMMANDS[args.command][0](args, cfg, out)
    except UsageError as exc:
        print(f"cumppi: error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"cumppi: config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError, FloatingPointError, IndexError) as exc:
        print(f"cumppi: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
