"""Kinematic reaching environment.

An action is a vector of absolute joint angles; the arm is placed there
instantly. Observations concatenate joint angles, end-effector and target
positions, the error (norm then x/y/z components) and, with obstacles, the
surface clearance of each obstacle to the arm links.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import obstacle_link_distances
from .kinematics import (
    HOME_Q,
    ArmModel,
    Workspace,
    forward_kinematics,
    sample_obstacles,
    sample_target,
)


class LifecycleError(RuntimeError):
    """``step`` called on an environment that has no live episode."""


@dataclass(frozen=True)
class RewardParams:
    w_error: float = 1e-3
    w_obstacle: float = 0.1
    d_max: float = 0.05
    tau_e: float = 1e-4

    def __post_init__(self):
        if min(self.w_error, self.w_obstacle, self.d_max, self.tau_e) <= 0:
            raise ValueError("reward parameters must be positive")


@dataclass(frozen=True)
class EnvConfig:
    max_steps: int = 100
    obstacle_count: int = 0
    obstacle_radius: float = 0.05
    obstacle_clearance: float = 0.05
    success_threshold: float = 0.05
    reward: RewardParams = field(default_factory=RewardParams)

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.obstacle_count < 0:
            raise ValueError("obstacle_count must be >= 0")

    @property
    def obs_dim(self) -> int:
        return 16 + self.obstacle_count


def obstacle_penalty(d_obs, d_max: float) -> np.ndarray:
    """Per-obstacle penalty, linear from 1 at contact to 0 at ``d_max``."""
    return np.maximum(0.0, 1.0 - np.abs(np.asarray(d_obs, dtype=np.float64)) / d_max)


def reward(e: float, d_obs=(), params: RewardParams = RewardParams()) -> float:
    """Shaped reaching reward for error norm ``e`` and obstacle clearances ``d_obs``."""
    e2 = e * e
    return -(
        params.w_error * e2
        + math.log(e2 + params.tau_e)
        + params.w_obstacle * float(np.sum(obstacle_penalty(d_obs, params.d_max)))
    )


def build_observation(q, ee, target, d_obs=()) -> np.ndarray:
    err = np.asarray(target) - np.asarray(ee)
    return np.concatenate([q, ee, target, [np.linalg.norm(err)], err, d_obs])


class ReachEnv:
    """Reaching task for a kinematically simulated 6-axis arm.

    Episodes run for exactly ``config.max_steps`` steps; success and
    collisions are reported in ``info`` but never end an episode early.
    """

    def __init__(self, config: EnvConfig = EnvConfig(), model: ArmModel | None = None,
                 workspace: Workspace | None = None, home_q: np.ndarray = HOME_Q):
        self.config = config
        self.model = model or ArmModel()
        self.workspace = workspace or Workspace()
        self.home_q = np.asarray(home_q, dtype=np.float64)
        self.q = None
        self.target = None
        self.obstacles = []
        self.t = 0
        self.done = True
        self._obs = None

    @property
    def obs_dim(self) -> int:
        return self.config.obs_dim

    def _observe(self):
        geom = forward_kinematics(self.model, self.q)
        d_obs = obstacle_link_distances(geom, self.obstacles)
        self._ee = geom.ee_position
        self._d_obs = d_obs
        self._obs = build_observation(self.q, self._ee, self.target, d_obs)
        return self._obs

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        """Start an episode at the home pose with a fresh target (and obstacles)."""
        cfg = self.config
        self.target = sample_target(self.workspace, rng)
        self.obstacles = sample_obstacles(
            self.workspace, cfg.obstacle_count, cfg.obstacle_radius, self.target, rng,
            clearance=cfg.obstacle_clearance, model=self.model, home_q=self.home_q,
        )
        self.q = self.model.clip(self.home_q.copy())
        self.t = 0
        self.done = False
        return self._observe().copy()

    def step(self, action):
        """Set the joints to ``action`` (clipped to the limits) and score the result."""
        if self.done:
            raise LifecycleError("step() without an active episode; call reset()")
        action = np.asarray(action, dtype=np.float64)
        if action.shape != (6,):
            raise ValueError(f"action must have 6 entries, got {action.shape}")
        self.q = self.model.clip(action)
        obs = self._observe().copy()
        e = float(obs[12])
        r = reward(e, self._d_obs, self.config.reward)
        self.t += 1
        self.done = self.t >= self.config.max_steps
        min_d = float(self._d_obs.min()) if len(self._d_obs) else math.inf
        info = {
            "error": e,
            "min_obstacle_distance": min_d,
            "collision": bool(len(self._d_obs) and min_d <= 0.0),
            "success": e <= self.config.success_threshold,
        }
        return obs, r, self.done, info


TRACE_COLUMNS_BASE = (
    ["step"] + [f"q{i}" for i in range(1, 7)]
    + ["pe_x", "pe_y", "pe_z", "pt_x", "pt_y", "pt_z", "e"]
)


def trace_row(step: int, obs: np.ndarray, r: float) -> list:
    """One CSV trace row from an observation produced by :class:`ReachEnv`."""
    return [step, *obs[0:12], obs[12], *obs[16:], r]


def write_trace_csv(path, rows, obstacle_count: int) -> None:
    """Write episode trace rows (see :func:`trace_row`) with a header."""
    header = TRACE_COLUMNS_BASE + [f"d_obs{i}" for i in range(1, obstacle_count + 1)] + ["reward"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([row[0]] + [repr(float(x)) for x in row[1:]])


def run_episode(env: ReachEnv, act, rng: np.random.Generator):
    """Roll one episode with ``act(obs) -> action``; returns trace rows and infos."""
    obs = env.reset(rng)
    rows, infos = [trace_row(0, obs, float("nan"))], []
    done = False
    while not done:
        obs, r, done, info = env.step(act(obs))
        rows.append(trace_row(env.t, obs, r))
        infos.append(info)
    return rows, infos
