"""Run configuration and the flat ``key = value`` config file format.

Keys are dotted: the first component names a section (``run``, ``ppo``,
``env``, ``reward``, ``workspace``, ``arm``), the rest a field. Lists are
comma separated. ``#`` starts a comment. Example::

    run.task = obstacles
    run.seeds = 0, 1, 2
    ppo.eta = 0.9
    arm.dh.2 = 0.0, -0.425, 0.0, 0.0
    arm.lower = -3.14, -3.14, -3.14, -3.14, -3.14, -3.14
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from ..env import EnvConfig, RewardParams
from ..kinematics import ArmModel, Workspace
from ..ppo import VARIANTS, PpoConfig

TASKS = {"obstacle-free": 0, "obstacles": 3}
MODES = ("train", "eval", "compare")
THRESHOLDS = tuple(round(0.01 * k, 2) for k in range(1, 11))
OUT_ENV_VAR = "REACHPPO_OUT"


class ConfigError(ValueError):
    """Invalid configuration key or value."""


@dataclass(frozen=True)
class RunConfig:
    mode: str = "train"
    task: str = "obstacle-free"
    variant: str = "improved"
    seeds: tuple = (0,)
    total_timesteps: int = 300_000
    eval_episodes: int = 100
    checkpoint_every: int = 50
    workers: int = 1
    out_dir: str = "runs"
    ppo: PpoConfig = field(default_factory=PpoConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    workspace: Workspace = field(default_factory=Workspace)
    arm: ArmModel = field(default_factory=ArmModel)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {tuple(TASKS)}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.total_timesteps <= 0:
            raise ConfigError("total_timesteps must be positive")
        if self.eval_episodes <= 0 or self.workers <= 0:
            raise ConfigError("eval_episodes and workers must be positive")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        # the task decides how many obstacles the environment carries
        if self.env.obstacle_count != TASKS[self.task]:
            object.__setattr__(self, "env", replace(self.env, obstacle_count=TASKS[self.task]))
        object.__setattr__(self, "ppo", self.ppo.with_variant(self.variant))

    @property
    def obs_dim(self) -> int:
        return self.env.obs_dim

    @property
    def output_path(self) -> Path:
        return Path(os.environ.get(OUT_ENV_VAR) or self.out_dir)


def _coerce(value: str, kind):
    kind = str(kind)
    v = value.strip()
    if "bool" in kind:
        if v.lower() in ("1", "true", "yes", "on"):
            return True
        if v.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {value!r}")
    if "tuple" in kind:
        return tuple(int(x) for x in v.split(",") if x.strip())
    if "int" in kind and "float" not in kind:
        return int(float(v)) if "e" in v.lower() else int(v)
    if "float" in kind:
        return float(v)
    return v


def _floats(value: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in value.split(",")])
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {value!r}") from exc


def _set_fields(obj, updates: dict):
    kinds = {f.name: f.type for f in fields(obj)}
    clean = {}
    for k, v in updates.items():
        if k not in kinds:
            raise ConfigError(f"unknown key {k!r} for {type(obj).__name__}")
        try:
            clean[k] = _coerce(v, kinds[k])
        except ValueError as exc:
            raise ConfigError(f"bad value for {k!r}: {exc}") from exc
    try:
        return replace(obj, **clean)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines into a dict of strings."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {n}: empty key")
        out[key] = value
    return out


def apply_overrides(cfg: RunConfig, pairs: dict) -> RunConfig:
    """Return ``cfg`` with dotted-key string overrides applied."""
    sections = {"run": {}, "ppo": {}, "env": {}, "reward": {}, "workspace": {}, "arm": {}}
    for key, value in pairs.items():
        head, _, rest = key.partition(".")
        if head not in sections or not rest:
            raise ConfigError(f"unknown key {key!r}")
        sections[head][rest] = value

    run = dict(sections["run"])
    ppo = _set_fields(cfg.ppo, sections["ppo"])
    reward = _set_fields(cfg.env.reward, sections["reward"])
    env = _set_fields(replace(cfg.env, reward=reward), sections["env"])
    ws = _set_fields(cfg.workspace, sections["workspace"])

    arm = cfg.arm
    if sections["arm"]:
        dh, lower, upper = arm.dh.copy(), arm.lower.copy(), arm.upper.copy()
        for k, v in sections["arm"].items():
            vals = _floats(v)
            if k.startswith("dh."):
                row = int(k[3:]) - 1
                if not 0 <= row < 6 or len(vals) != 4:
                    raise ConfigError(f"{k}: need joint index 1-6 and 4 numbers (d, a, alpha, offset)")
                dh[row] = vals
            elif k in ("lower", "upper"):
                if len(vals) != 6:
                    raise ConfigError(f"arm.{k} needs 6 numbers")
                (lower if k == "lower" else upper)[:] = vals
            else:
                raise ConfigError(f"unknown key 'arm.{k}'")
        try:
            arm = ArmModel(dh, lower, upper)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    base = replace(cfg, ppo=ppo, env=env, workspace=ws, arm=arm)
    return _set_fields(base, run) if run else base


def load_config(path=None, overrides: dict | None = None, base: RunConfig | None = None) -> RunConfig:
    """Build a :class:`RunConfig` from an optional file plus overrides."""
    cfg = base or RunConfig()
    pairs = {}
    if path is not None:
        pairs.update(parse_config_text(Path(path).read_text(encoding="utf-8")))
    pairs.update(overrides or {})
    return apply_overrides(cfg, pairs)


def dump_config(cfg: RunConfig) -> str:
    """Serialize ``cfg`` back into the flat text format."""
    def fmt(v):
        if isinstance(v, (tuple, list, np.ndarray)):
            return ", ".join(repr(float(x)) if isinstance(x, (float, np.floating)) else str(x) for x in v)
        return repr(v) if isinstance(v, float) else str(v).lower() if isinstance(v, bool) else str(v)

    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if not dataclasses.is_dataclass(v):
            lines.append(f"run.{f.name} = {fmt(v)}")
    lines += [f"ppo.{k} = {fmt(v)}" for k, v in dataclasses.asdict(cfg.ppo).items()]
    lines += [f"env.{f.name} = {fmt(getattr(cfg.env, f.name))}" for f in fields(cfg.env) if f.name != "reward"]
    lines += [f"reward.{k} = {fmt(v)}" for k, v in dataclasses.asdict(cfg.env.reward).items()]
    lines += [f"workspace.{k} = {fmt(v)}" for k, v in dataclasses.asdict(cfg.workspace).items()]
    lines += [f"arm.dh.{i + 1} = {fmt(row)}" for i, row in enumerate(cfg.arm.dh)]
    lines += [f"arm.lower = {fmt(cfg.arm.lower)}", f"arm.upper = {fmt(cfg.arm.upper)}"]
    return "\n".join(lines) + "\n"
