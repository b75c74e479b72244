"""Four-network DDPG learner for bounded active stiffness/damping control.

Actions are produced by a tanh policy in ``[-1, 1]^2`` and mapped affinely to
physical ``(k_a, c_a)``. The critic is queried with physical actions; it maps
them back to ``[-1, 1]`` internally before the first dense layer, so the
network never sees inputs in the thousands.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence, Tuple

import numpy as np

from . import neural
from ._io import write_json
from .errors import InsufficientData, ShapeMismatch
from .neural import Activation, AdamState, Mlp
from .vehicle_dynamics import C_A_BOUNDS, K_A_BOUNDS, ActiveAction

OBS_DIM = 6
ACT_DIM = 2

DEFAULT_NOISE_SCHEDULE = ((1, 100, 0.5), (101, 200, 0.3), (201, 500, 0.15), (501, 700, 0.05))
UPDATE_ORDER = ("actor", "critic", "target_policy", "target_q")


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.95
    tau: float = 0.99
    batch_size: int = 512
    buffer_capacity: int = 100_000
    lr_q: float = 1e-3
    lr_policy: float = 1e-4
    # (first episode, last episode, sigma), 1-based and inclusive
    noise_schedule: Tuple[Tuple[int, int, float], ...] = DEFAULT_NOISE_SCHEDULE
    action_bounds: Tuple[Tuple[float, float], ...] = (K_A_BOUNDS, C_A_BOUNDS)
    warmup_transitions: int = 512
    policy_hidden: Tuple[int, ...] = (16, 16)
    q_hidden: Tuple[int, ...] = (32, 32)
    update_order: Tuple[str, ...] = UPDATE_ORDER

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        if self.batch_size < 1 or self.buffer_capacity < 1:
            raise ValueError("batch_size and buffer_capacity must be positive")
        sched = tuple((int(a), int(b), float(s)) for a, b, s in self.noise_schedule)
        sigmas = [s for _, _, s in sched]
        if any(not 0.0 <= s <= 1.0 for s in sigmas):
            raise ValueError("noise sigma values must lie in [0, 1]")
        if any(b > a for a, b in zip(sigmas, sigmas[1:])):
            raise ValueError("noise schedule must be non-increasing")
        object.__setattr__(self, "noise_schedule", sched)
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.action_bounds)
        if len(bounds) != ACT_DIM or any(lo >= hi for lo, hi in bounds):
            raise ValueError("action_bounds must be two (low, high) pairs with low < high")
        object.__setattr__(self, "action_bounds", bounds)
        object.__setattr__(self, "policy_hidden", tuple(int(n) for n in self.policy_hidden))
        object.__setattr__(self, "q_hidden", tuple(int(n) for n in self.q_hidden))
        if sorted(self.update_order) != sorted(UPDATE_ORDER):
            raise ValueError(f"update_order must be a permutation of {UPDATE_ORDER}")
        object.__setattr__(self, "update_order", tuple(self.update_order))

    def to_dict(self):
        d = asdict(self)
        d["noise_schedule"] = [list(x) for x in self.noise_schedule]
        d["action_bounds"] = [list(x) for x in self.action_bounds]
        for key in ("policy_hidden", "q_hidden", "update_order"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def noise_sigma(config: AgentConfig, episode: int) -> float:
    """Exploration sigma for a 1-based episode index; the last entry persists."""
    for first, last, sigma in config.noise_schedule:
        if first <= episode <= last:
            return sigma
    if config.noise_schedule and episode > config.noise_schedule[-1][1]:
        return config.noise_schedule[-1][2]
    return config.noise_schedule[0][2] if config.noise_schedule else 0.0


class ActionScaler:
    """Affine map between tanh outputs in [-1, 1] and physical bounds."""

    def __init__(self, bounds=(K_A_BOUNDS, C_A_BOUNDS)):
        self.low = np.array([lo for lo, _ in bounds], dtype=np.float64)
        self.high = np.array([hi for _, hi in bounds], dtype=np.float64)
        if np.any(self.low >= self.high):
            raise ValueError("each bound needs low < high")
        self.span = self.high - self.low

    def scale(self, raw):
        return self.low + (np.asarray(raw, dtype=np.float64) + 1.0) / 2.0 * self.span

    def normalize(self, physical):
        return 2.0 * (np.asarray(physical, dtype=np.float64) - self.low) / self.span - 1.0

    @property
    def half_span(self):
        return self.span / 2.0


DEFAULT_SCALER = ActionScaler()


def scale_action(raw, scaler: ActionScaler = DEFAULT_SCALER) -> ActiveAction:
    k_a, c_a = scaler.scale(raw)
    return ActiveAction(float(k_a), float(c_a))


def noisy_raw_action(policy: Mlp, state, sigma, rng):
    """Policy output plus N(0, sigma^2) per dimension, before clipping."""
    raw = neural.forward(policy, state)[0]
    if sigma > 0.0:
        raw = raw + rng.normal(0.0, sigma, size=raw.shape)
    return raw


def select_action(policy: Mlp, state, sigma, rng=None, scaler: ActionScaler = DEFAULT_SCALER) -> ActiveAction:
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    raw = noisy_raw_action(policy, state, sigma, rng)
    if sigma > 0.0:
        raw = np.clip(raw, -1.0, 1.0)
    return scale_action(raw, scaler)


class Transition(NamedTuple):
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray

    def __len__(self):
        return self.rewards.shape[0]

    def __getitem__(self, i):
        return Transition(self.states[i], self.actions[i], float(self.rewards[i]), self.next_states[i])

    @classmethod
    def from_transitions(cls, transitions: Sequence[Transition]):
        return cls(
            np.array([t.state for t in transitions], dtype=np.float64),
            np.array([t.action for t in transitions], dtype=np.float64),
            np.array([t.reward for t in transitions], dtype=np.float64),
            np.array([t.next_state for t in transitions], dtype=np.float64),
        )


class ReplayBuffer:
    """Fixed-capacity ring of transitions; the oldest entry is overwritten first."""

    def __init__(self, capacity=100_000, obs_dim=OBS_DIM, act_dim=ACT_DIM):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.states = np.zeros((self.capacity, obs_dim))
        self.actions = np.zeros((self.capacity, act_dim))
        self.rewards = np.zeros(self.capacity)
        self.next_states = np.zeros((self.capacity, obs_dim))
        self.cursor = 0
        self.occupancy = 0

    def __len__(self):
        return self.occupancy

    def store(self, transition: Transition):
        i = self.cursor
        self.states[i] = transition.state
        self.actions[i] = transition.action
        self.rewards[i] = transition.reward
        self.next_states[i] = transition.next_state
        self.cursor = (i + 1) % self.capacity
        self.occupancy = min(self.occupancy + 1, self.capacity)

    def ordered_indices(self):
        """Slot indices from oldest to newest."""
        if self.occupancy < self.capacity:
            return np.arange(self.occupancy)
        return (np.arange(self.capacity) + self.cursor) % self.capacity

    def sample_batch(self, batch_size, rng) -> Batch:
        """Uniform sampling with replacement over the current occupancy."""
        if self.occupancy < batch_size or self.occupancy == 0:
            raise InsufficientData(f"buffer holds {self.occupancy} transitions, batch needs {batch_size}")
        idx = rng.integers(0, self.occupancy, size=batch_size)
        return Batch(self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx])


def store(buffer: ReplayBuffer, transition: Transition):
    buffer.store(transition)


def sample_batch(buffer: ReplayBuffer, batch_size, rng) -> Batch:
    return buffer.sample_batch(batch_size, rng)


# -- critic -------------------------------------------------------------------

def critic_input(states, actions, scaler: ActionScaler = DEFAULT_SCALER):
    return np.concatenate([np.atleast_2d(states), np.atleast_2d(scaler.normalize(actions))], axis=1)


class MlpCritic:
    """Q(s, a) with ``a`` in physical units, backed by an Mlp."""

    def __init__(self, net: Mlp, scaler: ActionScaler = DEFAULT_SCALER):
        self.net = net
        self.scaler = scaler

    def __call__(self, states, actions):
        return neural.forward(self.net, critic_input(states, actions, self.scaler))[0][:, 0]

    def value_and_action_grad(self, states, actions):
        x = critic_input(states, actions, self.scaler)
        out, cache = neural.forward(self.net, x)
        grads = neural.backward(self.net, cache, np.ones_like(out))
        # chain through the internal normalization
        dq_da = grads.input_gradient[:, -ACT_DIM:] * (2.0 / self.scaler.span)
        return out[:, 0], dq_da


def _as_critic(critic, scaler):
    return MlpCritic(critic, scaler) if isinstance(critic, Mlp) else critic


def td_targets(target_q: Mlp, target_policy: Mlp, batch: Batch, gamma, scaler=DEFAULT_SCALER):
    """``r + gamma * Q'(s', scale(mu'(s')))``, no terminal masking."""
    next_raw = neural.forward(target_policy, batch.next_states)[0]
    next_actions = scaler.scale(next_raw)
    q_next = neural.forward(target_q, critic_input(batch.next_states, next_actions, scaler))[0][:, 0]
    return batch.rewards + gamma * q_next


def critic_loss_and_grads(main_q: Mlp, target_q: Mlp, target_policy: Mlp, batch: Batch, gamma,
                          scaler=DEFAULT_SCALER):
    """Mean squared TD error and its gradient w.r.t. the main critic only."""
    y = td_targets(target_q, target_policy, batch, gamma, scaler)
    q, cache = neural.forward(main_q, critic_input(batch.states, batch.actions, scaler))
    err = q[:, 0] - y
    loss = float(np.mean(err * err))
    upstream = (2.0 / err.size) * err[:, None]
    return loss, neural.backward(main_q, cache, upstream, input_gradient=False)


def critic_update(main_q: Mlp, target_q: Mlp, target_policy: Mlp, batch: Batch, config: AgentConfig,
                  opt: AdamState, scaler=DEFAULT_SCALER) -> float:
    if len(batch) == 0:
        raise InsufficientData("empty batch")
    loss, grads = critic_loss_and_grads(main_q, target_q, target_policy, batch, config.gamma, scaler)
    neural.adam_step(main_q, grads, opt)
    return loss


# -- actor --------------------------------------------------------------------

def policy_objective(policy: Mlp, critic, states, scaler=DEFAULT_SCALER) -> float:
    """J = mean over states of Q(s, scale(mu(s)))."""
    critic = _as_critic(critic, scaler)
    raw = neural.forward(policy, states)[0]
    return float(np.mean(critic(states, scaler.scale(raw))))


def policy_gradient(policy: Mlp, critic, states, scaler=DEFAULT_SCALER):
    """Gradient of ``-J`` w.r.t. policy parameters (descent direction for Adam), and J."""
    critic = _as_critic(critic, scaler)
    states = np.atleast_2d(states)
    raw, cache = neural.forward(policy, states)
    q, dq_da = critic.value_and_action_grad(states, scaler.scale(raw))
    upstream = -(dq_da * scaler.half_span) / states.shape[0]
    return neural.backward(policy, cache, upstream, input_gradient=False), float(np.mean(q))


def actor_update(main_policy: Mlp, critic, batch: Batch, config: AgentConfig, opt: AdamState,
                 scaler=DEFAULT_SCALER) -> float:
    """One Adam ascent step on J; returns J before the step. The critic is untouched."""
    if len(batch) == 0:
        raise InsufficientData("empty batch")
    grads, mean_q = policy_gradient(main_policy, critic, batch.states, scaler)
    neural.adam_step(main_policy, grads, opt)
    return mean_q


def update_targets(target_policy: Mlp, main_policy: Mlp, target_q: Mlp, main_q: Mlp, tau):
    neural.soft_update(target_policy, main_policy, tau)
    neural.soft_update(target_q, main_q, tau)


# -- agent --------------------------------------------------------------------

def _hidden_acts(n_hidden, last):
    return [Activation.RELU] * n_hidden + [last]


def build_policy(config: AgentConfig, seed) -> Mlp:
    sizes = [OBS_DIM, *config.policy_hidden, ACT_DIM]
    return neural.init_mlp(sizes, _hidden_acts(len(config.policy_hidden), Activation.TANH), seed)


def build_critic(config: AgentConfig, seed) -> Mlp:
    sizes = [OBS_DIM + ACT_DIM, *config.q_hidden, 1]
    return neural.init_mlp(sizes, _hidden_acts(len(config.q_hidden), Activation.LINEAR), seed)


class DdpgAgent:
    """Main/target policy and Q networks with their optimizers, buffer and RNG."""

    def __init__(self, config: AgentConfig = AgentConfig(), seed=0):
        self.config = config
        self.scaler = ActionScaler(config.action_bounds)
        self.seed = int(seed)
        self.policy = build_policy(config, np.random.SeedSequence([self.seed, 1]))
        self.q = build_critic(config, np.random.SeedSequence([self.seed, 2]))
        self.target_policy = self.policy.copy()
        self.target_q = self.q.copy()
        self.policy_opt = AdamState.for_network(self.policy, lr=config.lr_policy)
        self.q_opt = AdamState.for_network(self.q, lr=config.lr_q)
        self.buffer = ReplayBuffer(config.buffer_capacity)
        self.rng = np.random.default_rng(np.random.SeedSequence([self.seed, 3]))
        self.episode = 0
        self.last_loss = math.nan
        self.last_mean_q = math.nan

    def act(self, observation, sigma=0.0) -> ActiveAction:
        return select_action(self.policy, observation, sigma, self.rng, self.scaler)

    def remember(self, transition: Transition):
        self.buffer.store(transition)

    @property
    def warmed_up(self):
        need = max(self.config.warmup_transitions, self.config.batch_size)
        return self.buffer.occupancy >= need

    def update(self):
        """One gradient step per network in the configured order; no-op before warmup."""
        if not self.warmed_up:
            return False
        batch = self.buffer.sample_batch(self.config.batch_size, self.rng)
        c = self.config
        for stage in c.update_order:
            if stage == "actor":
                self.last_mean_q = actor_update(self.policy, self.q, batch, c, self.policy_opt, self.scaler)
            elif stage == "critic":
                self.last_loss = critic_update(self.q, self.target_q, self.target_policy, batch, c,
                                               self.q_opt, self.scaler)
            elif stage == "target_policy":
                neural.soft_update(self.target_policy, self.policy, c.tau)
            else:
                neural.soft_update(self.target_q, self.q, c.tau)
        return True

    def to_dict(self):
        return {
            "config": self.config.to_dict(),
            "episode": self.episode,
            "seed": self.seed,
            "networks": {
                "policy": neural.mlp_to_dict(self.policy),
                "target_policy": neural.mlp_to_dict(self.target_policy),
                "q": neural.mlp_to_dict(self.q),
                "target_q": neural.mlp_to_dict(self.target_q),
            },
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            config = AgentConfig.from_dict(doc["config"])
            nets = doc["networks"]
            agent = cls(config, seed=doc.get("seed", 0))
            loaded = {name: neural.mlp_from_dict(nets[name])
                      for name in ("policy", "target_policy", "q", "target_q")}
            agent.episode = int(doc.get("episode", 0))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ShapeMismatch):
                raise
            raise ShapeMismatch(f"malformed checkpoint: {exc}") from None
        for name, net in loaded.items():
            expected = getattr(agent, name)
            if net.layer_sizes != expected.layer_sizes or net.activations != expected.activations:
                raise ShapeMismatch(f"{name}: architecture {net.layer_sizes} does not match config "
                                    f"{expected.layer_sizes}")
            setattr(agent, name, net)
        agent.policy_opt = AdamState.for_network(agent.policy, lr=config.lr_policy)
        agent.q_opt = AdamState.for_network(agent.q, lr=config.lr_q)
        return agent

    def save(self, path):
        write_json(path, self.to_dict())

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ShapeMismatch(f"{path}: not valid JSON: {exc}") from None
        return cls.from_dict(doc)


def _exact_tanh_preimage(target, scaler_low, scaler_span, want):
    """Bias value whose tanh, after scaling, lands exactly on ``want`` if reachable."""
    if target <= -1.0:
        return -30.0
    if target >= 1.0:
        return 30.0
    b0 = math.atanh(target)
    best, best_err = b0, math.inf
    lo = hi = b0
    for _ in range(256):
        for b in (lo, hi):
            got = scaler_low + (math.tanh(b) + 1.0) / 2.0 * scaler_span
            err = abs(got - want)
            if err < best_err:
                best, best_err = b, err
            if err == 0.0:
                return b
        lo = math.nextafter(lo, -math.inf)
        hi = math.nextafter(hi, math.inf)
    return best


def constant_policy(action, config: AgentConfig = AgentConfig()) -> Mlp:
    """A policy of the standard shape whose output is ``action`` for every state.

    The output bias is chosen so the scaled action is bit-exact where the
    floating-point map allows it (e.g. ``(0, 0)`` and the bounds).
    """
    scaler = ActionScaler(config.action_bounds)
    net = build_policy(config, 0)
    for layer in net.layers:
        layer.w[...] = 0.0
        layer.b[...] = 0.0
    target = scaler.normalize(action)
    net.layers[-1].b[:] = [
        _exact_tanh_preimage(float(target[i]), float(scaler.low[i]), float(scaler.span[i]), float(action[i]))
        for i in range(ACT_DIM)
    ]
    return net


def agent_with_policy(policy: Mlp, config: AgentConfig = AgentConfig(), seed=0) -> DdpgAgent:
    agent = DdpgAgent(config, seed)
    agent.policy = policy.copy()
    agent.target_policy = policy.copy()
    agent.policy_opt = AdamState.for_network(agent.policy, lr=config.lr_policy)
    return agent
