"""Command line entry point: ``train``, ``evaluate``, ``simulate`` and ``road-gen``.

Exit codes: 0 ok, 2 usage/config error, 3 runtime failure, 4 corrupt artifact.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import logging
import os
import subprocess
import sys

import numpy as np

from . import __version__
from . import road_excitation as roads
from ._io import atomic_open, write_json
from .config import ConfigError, build_params, build_road_spec, build_train_run, load_config, set_path
from .ddpg_agent import DdpgAgent
from .environment import EpisodeConfig, rollout, train
from .errors import ShapeMismatch, SpecError
from .evaluation import EvalConfig, PolicyController, format_report, report

log = logging.getLogger("suspension_ddpg")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_CORRUPT = 0, 2, 3, 4

SCENARIOS = ["single-bump", "multi-hump"] + [f"iso-{c}" for c in "abcde"]

SIMULATION_HEADER = "t,x_r,x_b,v_b,a_b,x_w,v_w,k_a,c_a"


class UsageError(Exception):
    pass


def _version():
    try:
        rev = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True, text=True,
                             timeout=5, cwd=os.path.dirname(os.path.abspath(__file__)))
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def write_manifest(out_dir, command, config, seed, started, artifacts):
    missing = [p for p in artifacts if not os.path.exists(p)]
    if missing:
        raise RuntimeError(f"manifest lists missing artifacts: {missing}")
    path = os.path.join(out_dir, "manifest.json")
    write_json(path, {
        "command": command,
        "config": config,
        "seed": seed,
        "started": started,
        "finished": _now(),
        "artifacts": [os.path.abspath(p) for p in artifacts],
        "version": _version(),
    }, indent=2, sort_keys=True)
    return path


# -- argument parsing -----------------------------------------------------------

def _common(p):
    p.add_argument("--config", metavar="PATH", help="JSON run configuration; flags override its values")
    p.add_argument("--seed", type=int, help="master RNG seed (unsigned 64-bit integer)")
    p.add_argument("--out", metavar="DIR", default=".", help="output directory (default: current directory)")
    p.add_argument("--force-mode", choices=["paper-literal", "augmented"],
                   help="active force law: absolute-coordinate as printed, or relative restoring (default)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _road_flags(p, default_kind):
    p.add_argument("--kind", choices=["single-bump", "multi-hump", "iso"], default=default_kind,
                   help="road family")
    p.add_argument("--height", type=float, help="bump/hump height [m] (default 0.1)")
    p.add_argument("--length", type=float, help="bump/hump length along the road [m] (default 5)")
    p.add_argument("--start", type=float, help="distance to the first bump [m] (default 25)")
    p.add_argument("--count", type=int, help="number of humps [-] (default 3)")
    p.add_argument("--spacing", type=float, help="start-to-start hump spacing [m] (default 15)")
    p.add_argument("--class", dest="road_class", choices=list("ABCDEabcde"),
                   help="ISO 8608 roughness class (default E)")
    p.add_argument("--components", type=int, help="number of ISO sinusoids [-] (default 400)")
    p.add_argument("--freq-low", type=float, help="lowest spatial frequency [cycles/m] (default 0.011)")
    p.add_argument("--freq-high", type=float, help="highest spatial frequency [cycles/m] (default 2.83)")
    p.add_argument("--speed", type=float, help="vehicle speed [m/s] (default 20)")
    p.add_argument("--duration", type=float, help="trace duration [s] (default 10)")
    p.add_argument("--dt", type=float, help="sample interval [s] (default 0.001)")


def build_parser():
    parser = argparse.ArgumentParser(prog="suspension-ddpg",
                                     description="Quarter-car active suspension with a DDPG controller.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a DDPG agent on stochastic roads")
    _common(p)
    p.add_argument("--episodes", type=int, help="number of training episodes [-] (default 700)")
    p.add_argument("--steps", type=int, help="control steps per episode [-] (default 2000)")
    p.add_argument("--control-interval", type=int, help="physics steps per control step [-] (default 1)")
    p.add_argument("--dt", type=float, help="physics time step [s] (default 0.001)")
    p.add_argument("--road-class", choices=list("ABCDEabcde"), help="ISO 8608 training road class (default E)")
    p.add_argument("--batch-size", type=int, help="replay minibatch size [-] (default 512)")
    p.add_argument("--buffer-size", type=int, help="replay buffer capacity [transitions] (default 100000)")
    p.add_argument("--lr-q", type=float, help="critic Adam learning rate [-] (default 1e-3)")
    p.add_argument("--lr-policy", type=float, help="policy Adam learning rate [-] (default 1e-4)")
    p.add_argument("--gamma", type=float, help="discount factor [-] (default 0.95)")
    p.add_argument("--tau", type=float, help="soft update retention of target weights [-] (default 0.99)")
    p.add_argument("--checkpoint-every", type=int, help="checkpoint cadence [episodes]; 0 = end only")

    p = sub.add_parser("evaluate", help="compare a trained policy with the passive suspension")
    _common(p)
    p.add_argument("--checkpoint", required=True, metavar="PATH", help="agent checkpoint JSON")
    p.add_argument("--scenario", required=True, choices=SCENARIOS, help="road scenario")
    p.add_argument("--experiments", "-K", type=int, default=50, help="number of experiments K [-] (default 50)")
    p.add_argument("--steps", "-T", type=int, default=10000, help="time steps per simulation T [-] (default 10000)")
    p.add_argument("--dt", type=float, default=1e-3, help="time step [s] (default 0.001)")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes [-] (default 1)")
    p.add_argument("--max-trajectory-csvs", type=int, default=None,
                   help="cap on per-pair trajectory CSV files [-] (default: all)")

    p = sub.add_parser("simulate", help="single rollout, passive unless a checkpoint is given")
    _common(p)
    p.add_argument("--checkpoint", metavar="PATH", help="agent checkpoint JSON (omit for passive)")
    p.add_argument("--road-csv", metavar="PATH", help="road trace CSV with header t,x_r,v_r")
    _road_flags(p, "single-bump")

    p = sub.add_parser("road-gen", help="write a road excitation trace as CSV")
    _common(p)
    _road_flags(p, "iso")
    return parser


def _road_from_args(args):
    road = {}
    for flag, key in (("height", "height"), ("length", "length"), ("start", "start_position"),
                      ("count", "count"), ("spacing", "spacing"), ("components", "n_components"),
                      ("speed", "vehicle_speed")):
        value = getattr(args, flag, None)
        if value is not None:
            road[key] = value
    if getattr(args, "road_class", None):
        road["road_class"] = args.road_class.upper()
    if args.freq_low is not None or args.freq_high is not None:
        low, high = 0.011, 2.83
        road["spatial_freq_range"] = [args.freq_low if args.freq_low is not None else low,
                                      args.freq_high if args.freq_high is not None else high]
    road["kind"] = args.kind
    return road


def _load_agent(path):
    if not os.path.exists(path):
        raise UsageError(f"checkpoint not found: {path}")
    return DdpgAgent.load(path)


# -- commands ---------------------------------------------------------------------

def cmd_train(args):
    started = _now()
    cfg = load_config(args.config)
    overrides = {
        "seed": args.seed, "n_episodes": args.episodes, "checkpoint_every": args.checkpoint_every,
        "episode.steps_per_episode": args.steps, "episode.control_interval": args.control_interval,
        "episode.dt": args.dt, "agent.batch_size": args.batch_size, "agent.buffer_capacity": args.buffer_size,
        "agent.lr_q": args.lr_q, "agent.lr_policy": args.lr_policy, "agent.gamma": args.gamma,
        "agent.tau": args.tau, "vehicle.force_mode": args.force_mode,
        "episode.road.road_class": args.road_class.upper() if args.road_class else None,
    }
    for key, value in overrides.items():
        if value is not None:
            set_path(cfg, key, value)
    os.makedirs(args.out, exist_ok=True)
    checkpoint = os.path.join(args.out, "checkpoint.json")
    curve = os.path.join(args.out, "reward_curve.csv")
    run = build_train_run(cfg, checkpoint, curve)
    result = train(run)
    print(f"trained {run.n_episodes} episodes; final cumulative reward {result.reward_curve[-1]:.4f}")
    write_manifest(args.out, "train", cfg, run.seed, started, [checkpoint, curve])
    return EXIT_OK


def cmd_evaluate(args):
    started = _now()
    cfg = load_config(args.config)
    if args.force_mode:
        cfg["vehicle"]["force_mode"] = args.force_mode
    seed = cfg["seed"] if args.seed is None else args.seed
    params = build_params(cfg["vehicle"])
    agent = _load_agent(args.checkpoint)
    road = dict(cfg["episode"]["road"])
    if args.scenario.startswith("iso-"):
        road.update(kind="iso", road_class=args.scenario[-1].upper())
    else:
        road["kind"] = args.scenario
    spec = build_road_spec(road, duration=args.steps * args.dt, dt=args.dt)
    config = EvalConfig(K=args.experiments, T=args.steps, dt=args.dt, road_spec=spec, seed=seed,
                        params=params, workers=args.workers)
    os.makedirs(args.out, exist_ok=True)
    results = report(agent.policy, {args.scenario: config}, out_dir=args.out,
                     max_trajectory_csvs=args.max_trajectory_csvs, scaler=agent.scaler)
    print(format_report(results[args.scenario]))
    artifacts = [os.path.join(args.out, "metrics.json")] + sorted(
        os.path.join(args.out, f) for f in os.listdir(args.out)
        if f.startswith(f"trajectory_{args.scenario}_") and f.endswith(".csv"))
    cfg["seed"] = seed
    write_manifest(args.out, "evaluate", {"run": cfg, "scenario": args.scenario,
                                          "checkpoint": os.path.abspath(args.checkpoint),
                                          "K": args.experiments, "T": args.steps, "dt": args.dt},
                   seed, started, artifacts)
    return EXIT_OK


def cmd_simulate(args):
    started = _now()
    cfg = load_config(args.config)
    if args.force_mode:
        cfg["vehicle"]["force_mode"] = args.force_mode
    seed = cfg["seed"] if args.seed is None else args.seed
    params = build_params(cfg["vehicle"])
    if args.road_csv:
        trace = roads.read_csv(args.road_csv)
        dt = trace.dt
        duration = args.duration if args.duration is not None else trace.duration
    else:
        dt = args.dt or 1e-3
        duration = args.duration if args.duration is not None else 10.0
        road = {**cfg["episode"]["road"], **_road_from_args(args), "seed": seed}
        trace = roads.generate(build_road_spec(road, duration=duration, dt=dt))
    steps = int(round(duration / dt))
    if steps < 1 or steps + 1 > len(trace):
        raise UsageError(f"duration {duration} s needs {steps + 1} road samples, trace has {len(trace)}")
    controller = None
    if args.checkpoint:
        agent = _load_agent(args.checkpoint)
        controller = PolicyController(agent.policy, agent.scaler)
    traj = rollout(trace, controller, EpisodeConfig(steps_per_episode=steps, dt=dt, params=params))
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "trajectory.csv")
    table = np.column_stack([traj.t, traj.x_r, traj.x_b, traj.v_b, traj.a_b, traj.x_w, traj.v_w,
                             traj.k_a, traj.c_a])
    with atomic_open(path) as fh:
        fh.write(SIMULATION_HEADER + "\n")
        np.savetxt(fh, table, delimiter=",", fmt="%.17g")
    if traj.diverged:
        print(f"warning: simulation diverged after {len(traj)} steps", file=sys.stderr)
    print(f"wrote {len(traj)} steps to {path}")
    write_manifest(args.out, "simulate", {"run": cfg, "road_csv": args.road_csv, "duration": duration,
                                          "checkpoint": args.checkpoint}, seed, started, [path])
    return EXIT_OK


def cmd_road_gen(args):
    started = _now()
    cfg = load_config(args.config)
    seed = cfg["seed"] if args.seed is None else args.seed
    road = {**cfg["episode"]["road"], **_road_from_args(args), "seed": seed}
    dt = args.dt or 1e-3
    duration = args.duration if args.duration is not None else 10.0
    spec = build_road_spec(road, duration=duration, dt=dt)
    trace = roads.generate(spec)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "road.csv")
    roads.write_csv(trace, path)
    print(f"wrote {len(trace)} samples to {path}")
    write_manifest(args.out, "road-gen", {"road": road, "duration": duration, "dt": dt}, seed, started, [path])
    return EXIT_OK


COMMANDS = {"train": cmd_train, "evaluate": cmd_evaluate, "simulate": cmd_simulate, "road-gen": cmd_road_gen}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, SpecError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ShapeMismatch as exc:
        print(f"error: corrupt artifact: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except Exception as exc:  # noqa: BLE001 - top-level runtime failure
        log.debug("runtime failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
