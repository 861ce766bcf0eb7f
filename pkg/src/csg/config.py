"""Run configuration: defaults, flat key=value files, normalization.

Every field has a default, so an empty config file is valid. Parsing an
unknown key is an error that names the key. normalize() -> parse() is a
fixed point.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .learner import TrainConfig

# View size and step budget by grid size (budgets are overridable).
VIEW_BY_SIZE = {5: 5, 6: 5, 8: 5, 10: 9}
STEPS_BY_SIZE = {5: 5_000_000, 6: 30_000_000, 8: 60_000_000, 10: 90_000_000}

ALGOS = ("csg", "vanilla", "rnd")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    algo: str = "csg"
    size: int = 5
    view: int = 0              # 0 = defaulted from size
    steps: int = 0             # 0 = defaulted from size
    seed: int = 1
    actors: int = 4
    t_roll: int = 80
    hidden: int = 128
    emb: int = 8
    lr: float = 1e-3
    gan_lr: float = 1e-3
    gamma: float = 0.99
    rho_bar: float = 1.0
    c_bar: float = 1.0
    entropy_weight: float = 0.01
    baseline_weight: float = 0.5
    alpha: float = 0.1
    z_dim: int = 8
    k_samples: int = 16
    goal_r: float = 1.0
    beta: float = 0.5
    abandon_limit: int = 25
    gan_batch: int = 32
    gan_updates: int = 1
    gan_buffer: int = 50_000
    rnd_scale: float = 0.1
    deterministic: bool = False
    queue_size: int = 4
    checkpoint_interval: int = 200_000
    metrics_interval: int = 10
    eval_episodes: int = 100
    out_dir: str = ""

    def normalized(self):
        """Fill size-dependent defaults and validate."""
        cfg = dataclasses.replace(self)
        if cfg.algo not in ALGOS:
            raise ConfigError(f"invalid value for key 'algo': {cfg.algo!r} "
                              f"(expected one of {ALGOS})")
        if cfg.size < 5:
            raise ConfigError(f"invalid value for key 'size': {cfg.size} (min 5)")
        if cfg.view == 0:
            cfg.view = VIEW_BY_SIZE.get(cfg.size, 5 if cfg.size < 10 else 9)
        if cfg.view % 2 == 0 or cfg.view < 3:
            raise ConfigError(f"invalid value for key 'view': {cfg.view} "
                              "(must be odd, >= 3)")
        if cfg.steps == 0:
            cfg.steps = STEPS_BY_SIZE.get(cfg.size, 5_000_000)
        for key in ("steps", "seed", "actors", "t_roll", "hidden", "emb",
                    "z_dim", "k_samples", "abandon_limit", "gan_batch",
                    "gan_updates", "queue_size", "eval_episodes"):
            if getattr(cfg, key) <= 0:
                raise ConfigError(f"invalid value for key '{key}': "
                                  f"{getattr(cfg, key)} (must be positive)")
        if cfg.gan_buffer < 0:
            raise ConfigError(f"invalid value for key 'gan_buffer': "
                              f"{cfg.gan_buffer} (must be >= 0)")
        if not (0 <= cfg.gamma < 1):
            raise ConfigError(f"invalid value for key 'gamma': {cfg.gamma}")
        return cfg

    def to_train_config(self):
        cfg = self.normalized()
        return TrainConfig(
            algo=cfg.algo, n=cfg.size, m=cfg.view, total_steps=cfg.steps,
            seed=cfg.seed, actors=cfg.actors, t_roll=cfg.t_roll,
            hidden=cfg.hidden, emb=cfg.emb, lr=cfg.lr, gan_lr=cfg.gan_lr,
            gamma=cfg.gamma, rho_bar=cfg.rho_bar, c_bar=cfg.c_bar,
            entropy_weight=cfg.entropy_weight,
            baseline_weight=cfg.baseline_weight, alpha=cfg.alpha,
            z_dim=cfg.z_dim, k_samples=cfg.k_samples, goal_r=cfg.goal_r,
            beta=cfg.beta, abandon_limit=cfg.abandon_limit,
            gan_batch=cfg.gan_batch, gan_updates=cfg.gan_updates,
            gan_buffer=cfg.gan_buffer, rnd_scale=cfg.rnd_scale,
            deterministic=cfg.deterministic,
            queue_size=cfg.queue_size,
            checkpoint_interval=cfg.checkpoint_interval,
            metrics_interval=cfg.metrics_interval,
            out_dir=cfg.out_dir or None)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _parse_value(key, text):
    f = _FIELDS[key]
    text = text.strip()
    if f.type in ("bool", bool):
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"invalid value for key '{key}': {text!r} (bool)")
    try:
        if f.type in ("int", int):
            return int(text)
        if f.type in ("float", float):
            return float(text)
    except ValueError:
        raise ConfigError(f"invalid value for key '{key}': {text!r}")
    return text


def parse_config(text, base=None):
    """Parse flat 'key = value' lines onto `base` (or defaults)."""
    cfg = dataclasses.replace(base) if base else RunConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', "
                              f"got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key '{key}' (line {lineno})")
        setattr(cfg, key, _parse_value(key, value))
    return cfg


def load_config(path, base=None):
    with open(path) as f:
        return parse_config(f.read(), base)


def format_config(cfg):
    lines = []
    for f in dataclasses.fields(RunConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def save_config(cfg, path):
    with open(path, "w") as f:
        f.write(format_config(cfg))
