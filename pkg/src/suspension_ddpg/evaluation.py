"""Passive vs. DRL comparison on identical road traces and the reduction metrics.

Reductions follow the sign convention ``(DRL - passive) / passive * 100``, so
an improvement is negative.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import road_excitation as roads
from ._io import atomic_open, write_json
from .ddpg_agent import DEFAULT_SCALER, ActionScaler, select_action
from .environment import EpisodeConfig, Trajectory, episode_seed, rollout
from .errors import EmptyInput
from .neural import Mlp
from .road_excitation import Iso8608, RoadSpec, RoadTrace
from .vehicle_dynamics import QuarterCarParams

log = logging.getLogger(__name__)

EVAL_STREAM = 1  # keeps evaluation roads disjoint from training roads
STABILIZATION_THRESHOLD = 1e-4  # [m]

TRAJECTORY_HEADER = "t,x_r,x_b_passive,v_b_passive,a_b_passive,x_b_drl,v_b_drl,a_b_drl,k_a,c_a"


@dataclass(frozen=True)
class EvalConfig:
    K: int = 50
    T: int = 10000
    dt: float = 1e-3
    road_spec: RoadSpec = field(default_factory=lambda: RoadSpec(Iso8608("E")))
    seed: int = 0
    params: QuarterCarParams = field(default_factory=QuarterCarParams)
    workers: int = 1

    def __post_init__(self):
        if self.K < 1 or self.T < 1:
            raise ValueError("K and T must be at least 1")

    def episode_config(self):
        spec = RoadSpec(self.road_spec.kind, self.road_spec.vehicle_speed, self.T * self.dt, self.dt)
        return EpisodeConfig(steps_per_episode=self.T, dt=self.dt, road_spec=spec, params=self.params)

    def road_for(self, experiment_index) -> RoadTrace:
        spec = self.episode_config().road_spec
        return roads.generate(spec.with_seed(episode_seed(self.seed, experiment_index, EVAL_STREAM)))


@dataclass
class TrajectoryPair:
    road: RoadTrace
    passive: Trajectory
    drl: Trajectory
    experiment_index: int = 0

    @property
    def road_checksum(self):
        return self.road.checksum()


class PolicyController:
    """Noise-free policy as an ``obs -> action`` callable (picklable for workers)."""

    def __init__(self, policy: Mlp, scaler: ActionScaler = DEFAULT_SCALER):
        self.policy = policy
        self.scaler = scaler

    def __call__(self, obs):
        return select_action(self.policy, obs, 0.0, None, self.scaler)


def run_pair(policy: Mlp, config: EvalConfig, experiment_index: int, scaler=DEFAULT_SCALER) -> Optional[TrajectoryPair]:
    """Passive and DRL rollouts over one seeded road; ``None`` if either diverges."""
    trace = config.road_for(experiment_index)
    ep = config.episode_config()
    passive = rollout(trace, None, ep)
    drl = rollout(trace, PolicyController(policy, scaler), ep)
    if passive.diverged or drl.diverged:
        log.warning("experiment %d diverged (passive=%s, drl=%s); excluded",
                    experiment_index, passive.diverged, drl.diverged)
        return None
    return TrajectoryPair(trace, passive, drl, experiment_index)


# -- metrics ------------------------------------------------------------------

def _as_2d(signal):
    a = np.asarray(signal, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.size == 0:
        raise EmptyInput("metric over an empty signal")
    return a


def mean_abs(signal) -> float:
    """``(1/K)(1/T) sum_k sum_t |value|`` over a K x T array."""
    return float(np.mean(np.abs(_as_2d(signal))))


def overall_reduction(mu_drl, mu_passive) -> float:
    if mu_passive == 0:
        raise ZeroDivisionError("passive mean is zero; reduction undefined")
    return (mu_drl - mu_passive) / mu_passive * 100.0


def q3_means(drl_signal, passive_signal, percentile=75.0):
    """Mean |value| of each signal over the passive run's top-quartile samples.

    The threshold is the passive |value| percentile of each experiment
    (linear interpolation); the same time indices are used for both signals.
    Per-experiment means are averaged over experiments.
    """
    drl = np.abs(_as_2d(drl_signal))
    passive = np.abs(_as_2d(passive_signal))
    if drl.shape != passive.shape:
        raise ValueError(f"signal shapes differ: {drl.shape} vs {passive.shape}")
    threshold = np.percentile(passive, percentile, axis=1, keepdims=True)
    mask = passive >= threshold
    counts = mask.sum(axis=1)
    mu_drl = float(np.mean((drl * mask).sum(axis=1) / counts))
    mu_passive = float(np.mean((passive * mask).sum(axis=1) / counts))
    return mu_drl, mu_passive


def q3_reduction(drl_signal, passive_signal, percentile=75.0) -> float:
    return overall_reduction(*q3_means(drl_signal, passive_signal, percentile))


def stabilization_time(t, x_b, feature_end, threshold=STABILIZATION_THRESHOLD):
    """Seconds from ``feature_end`` until |x_b| stays below ``threshold``; None if never."""
    above = np.nonzero(np.abs(x_b) >= threshold)[0]
    if above.size == 0:
        return 0.0
    last = above[-1]
    if last == len(x_b) - 1:
        return None
    settled_at = t[last + 1]
    return max(0.0, float(settled_at - feature_end))


# -- reporting ----------------------------------------------------------------

@dataclass
class MetricsReport:
    scenario: str
    v_overall: float
    v_q3: float
    a_overall: float
    a_q3: float
    mu_v_passive: float
    mu_v_drl: float
    mu_a_passive: float
    mu_a_drl: float
    requested_K: int
    effective_K: int
    excluded_experiments: List[int]
    per_experiment: List[Dict[str, float]]
    stabilization_time_passive: Optional[float] = None
    stabilization_time_drl: Optional[float] = None
    road_checksums: List[str] = field(default_factory=list)
    config: Dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _pair_task(args):
    policy, config, k, scaler = args
    return run_pair(policy, config, k, scaler)


def run_pairs(policy: Mlp, config: EvalConfig, scaler=DEFAULT_SCALER):
    """All K pairs in experiment-index order (``None`` marks excluded pairs)."""
    deterministic_road = not isinstance(config.road_spec.kind, Iso8608)
    if deterministic_road:
        # the trace does not depend on the seed, so every experiment is identical
        pair = run_pair(policy, config, 0, scaler)
        return [pair if pair is None else TrajectoryPair(pair.road, pair.passive, pair.drl, k)
                for k in range(config.K)]
    tasks = [(policy, config, k, scaler) for k in range(config.K)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(_pair_task, tasks))
    return [_pair_task(t) for t in tasks]


def summarize(pairs, config: EvalConfig, scenario: str) -> MetricsReport:
    kept = [p for p in pairs if p is not None]
    excluded = [k for k, p in enumerate(pairs) if p is None]
    if not kept:
        raise EmptyInput("every experiment diverged; nothing to report")
    v_p = np.array([p.passive.v_b for p in kept])
    v_d = np.array([p.drl.v_b for p in kept])
    a_p = np.array([p.passive.a_b for p in kept])
    a_d = np.array([p.drl.a_b for p in kept])
    mu_v_p, mu_v_d = mean_abs(v_p), mean_abs(v_d)
    mu_a_p, mu_a_d = mean_abs(a_p), mean_abs(a_d)
    per = [
        {
            "experiment": p.experiment_index,
            "mu_v_passive": mean_abs(p.passive.v_b),
            "mu_v_drl": mean_abs(p.drl.v_b),
            "mu_a_passive": mean_abs(p.passive.a_b),
            "mu_a_drl": mean_abs(p.drl.a_b),
        }
        for p in kept
    ]
    stab_p = stab_d = None
    end = roads.feature_end_time(config.episode_config().road_spec)
    if end is not None:
        sp = [stabilization_time(p.passive.t, p.passive.x_b, end) for p in kept]
        sd = [stabilization_time(p.drl.t, p.drl.x_b, end) for p in kept]
        stab_p = None if any(s is None for s in sp) else float(np.mean(sp))
        stab_d = None if any(s is None for s in sd) else float(np.mean(sd))
    return MetricsReport(
        scenario=scenario,
        v_overall=overall_reduction(mu_v_d, mu_v_p),
        v_q3=q3_reduction(v_d, v_p),
        a_overall=overall_reduction(mu_a_d, mu_a_p),
        a_q3=q3_reduction(a_d, a_p),
        mu_v_passive=mu_v_p,
        mu_v_drl=mu_v_d,
        mu_a_passive=mu_a_p,
        mu_a_drl=mu_a_d,
        requested_K=config.K,
        effective_K=len(kept),
        excluded_experiments=excluded,
        per_experiment=per,
        stabilization_time_passive=stab_p,
        stabilization_time_drl=stab_d,
        road_checksums=[p.road_checksum for p in kept],
        config=eval_config_to_dict(config),
    )


def eval_config_to_dict(config: EvalConfig):
    spec = config.road_spec
    kind = asdict(spec.kind)
    kind["type"] = type(spec.kind).__name__
    return {
        "K": config.K,
        "T": config.T,
        "dt": config.dt,
        "seed": config.seed,
        "road": {"kind": kind, "vehicle_speed": spec.vehicle_speed},
        "vehicle": {**asdict(config.params), "force_mode": config.params.force_mode.value},
    }


def write_trajectory_csv(pair: TrajectoryPair, path):
    p, d = pair.passive, pair.drl
    table = np.column_stack([p.t, p.x_r, p.x_b, p.v_b, p.a_b, d.x_b, d.v_b, d.a_b, d.k_a, d.c_a])
    with atomic_open(path) as fh:
        fh.write(TRAJECTORY_HEADER + "\n")
        np.savetxt(fh, table, delimiter=",", fmt="%.17g")


def report(policy: Mlp, configs: Dict[str, EvalConfig], out_dir=None, max_trajectory_csvs=None,
           scaler=DEFAULT_SCALER) -> Dict[str, MetricsReport]:
    """Run every scenario; optionally write ``metrics.json`` and per-pair CSVs to ``out_dir``."""
    results = {}
    for name, config in configs.items():
        pairs = run_pairs(policy, config, scaler)
        results[name] = summarize(pairs, config, name)
        if out_dir is not None:
            kept = [p for p in pairs if p is not None]
            limit = len(kept) if max_trajectory_csvs is None else min(max_trajectory_csvs, len(kept))
            for pair in kept[:limit]:
                path = os.path.join(out_dir, f"trajectory_{name}_{pair.experiment_index:03d}.csv")
                write_trajectory_csv(pair, path)
    if out_dir is not None:
        write_json(os.path.join(out_dir, "metrics.json"),
                   {name: r.to_dict() for name, r in results.items()}, indent=2, sort_keys=True)
    return results


def format_report(r: MetricsReport) -> str:
    def pct(x):
        return "n/a" if x is None or not math.isfinite(x) else f"{x:+.2f}%"

    lines = [
        f"scenario {r.scenario}: K={r.effective_K}/{r.requested_K}",
        f"  velocity reduction overall {pct(r.v_overall)}  Q3 {pct(r.v_q3)}",
        f"  acceleration reduction overall {pct(r.a_overall)}  Q3 {pct(r.a_q3)}",
    ]
    if r.stabilization_time_passive is not None or r.stabilization_time_drl is not None:
        lines.append(f"  stabilization time passive {r.stabilization_time_passive} s, "
                     f"drl {r.stabilization_time_drl} s")
    return "\n".join(lines)
