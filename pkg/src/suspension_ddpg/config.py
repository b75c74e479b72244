"""JSON run configuration: defaults, file loading with diagnostics, and object builders."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict

from .ddpg_agent import AgentConfig
from .environment import EpisodeConfig, TrainRunConfig
from .errors import SpecError
from .road_excitation import Iso8608, MultiHump, RoadSpec, SingleBump
from .vehicle_dynamics import ForceMode, QuarterCarParams


class ConfigError(ValueError):
    """A configuration file or flag set is unusable; message names the field or line."""


ROAD_KINDS = {"single-bump": SingleBump, "multi-hump": MultiHump, "iso": Iso8608}


def _road_defaults():
    return {
        "kind": "iso",
        "road_class": "E",
        "n_components": 400,
        "spatial_freq_range": [0.011, 2.83],
        "height": 0.1,
        "length": 5.0,
        "start_position": 25.0,
        "count": 3,
        "spacing": 15.0,
        "vehicle_speed": 20.0,
    }


def default_config():
    vehicle = asdict(QuarterCarParams())
    vehicle["force_mode"] = ForceMode.AUGMENTED.value
    return {
        "seed": 0,
        "n_episodes": 700,
        "checkpoint_every": 0,
        "vehicle": vehicle,
        "agent": AgentConfig().to_dict(),
        "episode": {
            "steps_per_episode": 2000,
            "dt": 1e-3,
            "control_interval": 1,
            "road": _road_defaults(),
        },
    }


def _merge(base, override, path=""):
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"field '{where}': unknown setting")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"field '{where}': expected an object")
            _merge(base[key], value, where)
        else:
            base[key] = value
    return base


def load_config(path=None, base=None):
    """Defaults overlaid with the JSON file at ``path`` (if any)."""
    cfg = copy.deepcopy(base) if base is not None else default_config()
    if path is None:
        return cfg
    try:
        with open(path) as fh:
            text = fh.read()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return _merge(cfg, doc)


def set_path(cfg, dotted, value):
    node = cfg
    *parents, leaf = dotted.split(".")
    for p in parents:
        node = node[p]
    node[leaf] = value


def build_params(vehicle) -> QuarterCarParams:
    try:
        return QuarterCarParams(**vehicle)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field 'vehicle': {exc}") from None


def build_road_spec(road, duration=10.0, dt=1e-3) -> RoadSpec:
    kind_name = road.get("kind", "iso")
    if kind_name not in ROAD_KINDS:
        raise ConfigError(f"field 'road.kind': must be one of {sorted(ROAD_KINDS)}, got {kind_name!r}")
    try:
        if kind_name == "single-bump":
            kind = SingleBump(float(road["height"]), float(road["length"]), float(road["start_position"]))
        elif kind_name == "multi-hump":
            kind = MultiHump(int(road["count"]), float(road["height"]), float(road["length"]),
                             float(road["spacing"]), float(road["start_position"]))
        else:
            low, high = road["spatial_freq_range"]
            kind = Iso8608(str(road["road_class"]).upper(), int(road["n_components"]),
                           (float(low), float(high)), int(road.get("seed", 0)))
        return RoadSpec(kind, float(road["vehicle_speed"]), float(duration), float(dt))
    except KeyError as exc:
        raise ConfigError(f"field 'road.{exc.args[0]}': missing") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, SpecError):
            raise
        raise ConfigError(f"field 'road': {exc}") from None


def build_agent_config(agent) -> AgentConfig:
    try:
        return AgentConfig.from_dict(agent)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field 'agent': {exc}") from None


def build_train_run(cfg, checkpoint_path=None, curve_path=None) -> TrainRunConfig:
    ep = cfg["episode"]
    params = build_params(cfg["vehicle"])
    try:
        steps = int(ep["steps_per_episode"])
        interval = int(ep["control_interval"])
        dt = float(ep["dt"])
        spec = build_road_spec(ep["road"], duration=steps * interval * dt, dt=dt)
        episode = EpisodeConfig(steps, dt, spec, interval, params)
        return TrainRunConfig(
            n_episodes=int(cfg["n_episodes"]),
            agent=build_agent_config(cfg["agent"]),
            episode=episode,
            seed=int(cfg["seed"]),
            checkpoint_path=checkpoint_path,
            curve_path=curve_path,
            checkpoint_every=int(cfg["checkpoint_every"]),
        )
    except SpecError as exc:
        raise ConfigError(f"field 'episode.road': {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"field 'episode': {exc}") from None
