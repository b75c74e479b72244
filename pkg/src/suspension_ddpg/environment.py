"""Episodic quarter-car environment and the DDPG training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from . import road_excitation as roads
from ._io import atomic_open
from .ddpg_agent import AgentConfig, DdpgAgent, Transition, noise_sigma
from .errors import NumericalDivergence
from .road_excitation import Iso8608, RoadSpec, RoadTrace
from .vehicle_dynamics import (
    PASSIVE,
    ActiveAction,
    QuarterCarParams,
    action_in_bounds,
    active_force,
    derivative,
    step_rk4,
    vehicle_state,
)

log = logging.getLogger(__name__)

REWARD_SCALE = 0.1


def reward(v_b):
    """Immediate reward, ``-0.1 |v_b|``."""
    return -REWARD_SCALE * abs(v_b)


@dataclass(frozen=True)
class EpisodeConfig:
    steps_per_episode: int = 2000
    dt: float = 1e-3
    road_spec: RoadSpec = field(default_factory=lambda: RoadSpec(Iso8608("E"), duration=2.0))
    control_interval: int = 1
    params: QuarterCarParams = field(default_factory=QuarterCarParams)

    def __post_init__(self):
        if self.steps_per_episode < 1:
            raise ValueError("steps_per_episode must be positive")
        if self.control_interval < 1:
            raise ValueError("control_interval must be at least 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    @property
    def duration(self):
        return self.steps_per_episode * self.control_interval * self.dt

    def episode_road_spec(self, seed):
        spec = self.road_spec
        spec = RoadSpec(spec.kind, spec.vehicle_speed, self.duration, self.dt)
        return spec.with_seed(seed)


def episode_seed(run_seed, episode, stream=0):
    """Derive a 64-bit road seed for (run, stream, episode) via SeedSequence hashing."""
    ss = np.random.SeedSequence([int(run_seed), int(stream), int(episode)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class SuspensionEnv:
    """Reset/step interface over one road trace per episode.

    Observation: ``(v_b, v_w, v_r)`` now and at the previous control step.
    """

    def __init__(self, config: EpisodeConfig = EpisodeConfig()):
        self.config = config
        self.params = config.params
        self.trace: Optional[RoadTrace] = None
        self.state = vehicle_state()
        self.t = 0.0
        self.steps = 0
        self.sample_index = 0
        self._prev = (0.0, 0.0, 0.0)
        self.last_accel = 0.0
        self.diverged = False

    def reset(self, seed=None, trace: Optional[RoadTrace] = None):
        """Vehicle at rest at the origin on a fresh road (or the supplied ``trace``)."""
        cfg = self.config
        if trace is None:
            trace = roads.generate(cfg.episode_road_spec(0 if seed is None else seed))
        needed = cfg.steps_per_episode * cfg.control_interval + 1
        if len(trace) < needed:
            raise ValueError(f"road trace has {len(trace)} samples, episode needs {needed}")
        self.trace = trace
        self.state = vehicle_state()
        self.t = 0.0
        self.steps = 0
        self.sample_index = 0
        self.last_accel = 0.0
        self.diverged = False
        self._prev = (0.0, 0.0, 0.0)
        return self._observe()

    def _observe(self):
        v_r = float(self.trace.v_r[self.sample_index])
        now = (float(self.state[1]), float(self.state[3]), v_r)
        obs = np.array(now + self._prev)
        self._prev = now
        return obs

    def step(self, action):
        """Hold ``action`` for ``control_interval`` RK4 substeps.

        Returns ``(observation, reward, done, info)``.
        """
        cfg = self.config
        if self.trace is None:
            raise RuntimeError("reset() must be called before step()")
        if self.steps >= cfg.steps_per_episode:
            raise RuntimeError("episode is over; call reset()")
        action = ActiveAction(*action)
        if not action_in_bounds(action):
            raise ValueError(f"action {action} outside the physical bounds")
        road_fn = self.trace.at
        try:
            for _ in range(cfg.control_interval):
                self.state = step_rk4(self.state, road_fn, action, self.params, self.t, cfg.dt)
                self.sample_index += 1
                self.t = self.sample_index * cfg.dt
        except NumericalDivergence:
            self.diverged = True
            self.steps += 1
            obs = np.array(self._prev + self._prev)
            return obs, reward(self._prev[0]), True, {"diverged": True}
        self.steps += 1
        road = self.trace.sample(self.sample_index)
        self.last_accel = float(derivative(self.state, road, active_force(self.state, action, self.params),
                                           self.params)[1])
        r = reward(self.state[1])
        obs = self._observe()
        done = self.steps >= cfg.steps_per_episode
        return obs, r, done, {"diverged": False}


@dataclass
class Trajectory:
    """Per-control-step record of one rollout (the initial rest state is excluded)."""

    t: np.ndarray
    x_r: np.ndarray
    x_b: np.ndarray
    v_b: np.ndarray
    a_b: np.ndarray
    x_w: np.ndarray
    v_w: np.ndarray
    k_a: np.ndarray
    c_a: np.ndarray
    rewards: np.ndarray
    diverged: bool = False

    def __len__(self):
        return self.t.size


def rollout(trace: RoadTrace, controller: Optional[Callable], config: EpisodeConfig) -> Trajectory:
    """Run one episode on ``trace``; ``controller(obs) -> action``, passive if ``None``."""
    env = SuspensionEnv(config)
    obs = env.reset(trace=trace)
    n = config.steps_per_episode
    cols = {k: np.zeros(n) for k in ("t", "x_r", "x_b", "v_b", "a_b", "x_w", "v_w", "k_a", "c_a", "rewards")}
    count = 0
    for i in range(n):
        action = PASSIVE if controller is None else controller(obs)
        obs, r, done, info = env.step(action)
        if info["diverged"]:
            break
        cols["t"][i] = env.t
        cols["x_r"][i] = trace.x_r[env.sample_index]
        cols["x_b"][i], cols["v_b"][i], cols["x_w"][i], cols["v_w"][i] = env.state
        cols["a_b"][i] = env.last_accel
        cols["k_a"][i], cols["c_a"][i] = action
        cols["rewards"][i] = r
        count += 1
    if count < n:
        cols = {k: v[:count] for k, v in cols.items()}
    return Trajectory(**cols, diverged=env.diverged)


@dataclass(frozen=True)
class TrainRunConfig:
    n_episodes: int = 700
    agent: AgentConfig = field(default_factory=AgentConfig)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    seed: int = 0
    checkpoint_path: Optional[str] = None
    curve_path: Optional[str] = None
    checkpoint_every: int = 0  # episodes; 0 writes only at the end

    def __post_init__(self):
        if self.n_episodes < 1:
            raise ValueError("n_episodes must be at least 1")


@dataclass
class TrainResult:
    agent: DdpgAgent
    reward_curve: List[float]
    diverged_episodes: List[int]


def write_reward_curve(curve, path):
    with atomic_open(path) as fh:
        fh.write("episode,cumulative_reward\n")
        for i, r in enumerate(curve, start=1):
            fh.write(f"{i},{float(r)!r}\n")


def run_episode(env: SuspensionEnv, agent: DdpgAgent, sigma, seed, learn=True):
    obs = env.reset(seed)
    total = 0.0
    done = False
    while not done:
        action = agent.act(obs, sigma)
        next_obs, r, done, info = env.step(action)
        total += r
        if info["diverged"]:
            break
        if learn:
            agent.remember(Transition(obs, np.array(action), r, next_obs))
            agent.update()
        obs = next_obs
    return total


def train(run: TrainRunConfig, progress: Optional[Callable[[int, float, float], None]] = None) -> TrainResult:
    """Train a fresh agent; returns it with the per-episode cumulative reward curve."""
    agent = DdpgAgent(run.agent, seed=run.seed)
    env = SuspensionEnv(run.episode)
    curve: List[float] = []
    diverged = []
    for episode in range(1, run.n_episodes + 1):
        sigma = noise_sigma(run.agent, episode)
        total = run_episode(env, agent, sigma, episode_seed(run.seed, episode))
        if env.diverged:
            diverged.append(episode)
        curve.append(total)
        agent.episode = episode
        log.info("episode %d sigma=%.2f reward=%.4f", episode, sigma, total)
        if progress is not None:
            progress(episode, sigma, total)
        if run.checkpoint_every and episode % run.checkpoint_every == 0:
            _write_artifacts(run, agent, curve)
    _write_artifacts(run, agent, curve)
    return TrainResult(agent, curve, diverged)


def _write_artifacts(run, agent, curve):
    if run.checkpoint_path:
        agent.save(run.checkpoint_path)
    if run.curve_path:
        write_reward_curve(curve, run.curve_path)

