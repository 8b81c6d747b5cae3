"""Training, evaluation and variant comparison runs.

Every seed gets its own :class:`numpy.random.SeedSequence`, split into
independent streams for network init, environment targets, action noise,
minibatch shuffling and evaluation. The environment stream depends only on
the seed, so all variants trained with one seed see the same targets.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..env import ReachEnv
from ..netcore import NonFiniteError
from ..ppo import EpisodeCounter, PpoAgent, collect_rollout, update
from .checkpoint import (
    Checkpoint,
    agent_from_checkpoint,
    checkpoint_from_agent,
    checkpoint_load,
    checkpoint_save,
)
from .config import THRESHOLDS, RunConfig, dump_config

log = logging.getLogger(__name__)

METRIC_COLUMNS = ["update", "steps", "ep_reward_mean", "ep_reward_std", "actor_loss", "critic_loss",
                  "gamma_pf_mean", "ensemble_i_mean", "clip_frac"]
EVAL_COLUMNS = ["threshold_m", "success_rate", "n_episodes", "n_seeds", "final_err_mean", "final_err_std",
                "collision_rate", "ever_within_rate"]
_STREAMS = ("init", "env", "action", "update", "eval")


def seed_streams(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(_STREAMS))
    return {name: np.random.default_rng(s) for name, s in zip(_STREAMS, children)}


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def make_env(cfg: RunConfig) -> ReachEnv:
    return ReachEnv(cfg.env, cfg.arm, cfg.workspace)


def make_agent(cfg: RunConfig, rng: np.random.Generator) -> PpoAgent:
    return PpoAgent(cfg.obs_dim, 6, cfg.ppo, rng=rng, low=cfg.arm.lower, high=cfg.arm.upper)


def run_dir(cfg: RunConfig, seed: int, variant: str | None = None) -> Path:
    return cfg.output_path / cfg.task / (variant or cfg.variant) / f"seed_{seed}"


@dataclass
class TrainResult:
    seed: int
    variant: str
    agent: PpoAgent
    metrics: list = field(default_factory=list)
    episode_returns: list = field(default_factory=list)
    out_dir: Path | None = None

    def final_reward(self, n_episodes: int = 100) -> float:
        """Mean return of the last ``n_episodes`` training episodes."""
        return float(np.mean(self.episode_returns[-n_episodes:]))


def _meta(cfg: RunConfig, seed: int, steps: int) -> dict:
    return {"task": cfg.task, "variant": cfg.variant, "seed": seed, "steps": steps}


def train_seed(cfg: RunConfig, seed: int, write: bool = True) -> TrainResult:
    """Train one agent; writes metrics, episode returns, manifest and checkpoints."""
    rngs = seed_streams(seed)
    env = make_env(cfg)
    agent = make_agent(cfg, rngs["init"])
    counter = EpisodeCounter(0, max(1, cfg.total_timesteps // cfg.env.max_steps))
    out = run_dir(cfg, seed) if write else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        manifest = {"seed": seed, "task": cfg.task, "variant": cfg.variant, "obs_dim": cfg.obs_dim,
                    "act_dim": 6, "total_timesteps": cfg.total_timesteps, "total_episodes": counter.total}
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        (out / "config.txt").write_text(dump_config(cfg))
    res = TrainResult(seed, cfg.variant, agent, out_dir=out)
    steps, n_update = 0, 0
    while steps < cfg.total_timesteps:
        buf = collect_rollout(env, agent, rngs["env"], rngs["action"], counter)
        try:
            m = update(agent, buf, rngs["update"])
        except NonFiniteError:
            if out is not None:
                checkpoint_save(out / "abort.ckpt", checkpoint_from_agent(agent, **_meta(cfg, seed, steps)))
            raise
        steps += len(buf)
        n_update += 1
        res.episode_returns += buf.episode_returns
        res.metrics.append([n_update, steps] + [m[k] for k in METRIC_COLUMNS[2:]])
        log.info("seed %d update %d steps %d reward %.2f", seed, n_update, steps, m["ep_reward_mean"])
        if out is not None and cfg.checkpoint_every and n_update % cfg.checkpoint_every == 0:
            checkpoint_save(out / f"update_{n_update}.ckpt", checkpoint_from_agent(agent, **_meta(cfg, seed, steps)))
    if out is not None:
        write_csv(out / "metrics.csv", METRIC_COLUMNS, res.metrics)
        write_csv(out / "episodes.csv", ["episode", "return"], enumerate(res.episode_returns, 1))
        checkpoint_save(out / "final.ckpt", checkpoint_from_agent(agent, **_meta(cfg, seed, steps)))
    return res


def _train_job(args):
    cfg, seed, write = args
    return train_seed(cfg, seed, write)


def train(cfg: RunConfig, write: bool = True) -> list[TrainResult]:
    """Train every seed in ``cfg.seeds``; results come back in seed order."""
    jobs = [(cfg, s, write) for s in cfg.seeds]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_train_job, jobs))
    return [_train_job(j) for j in jobs]


@dataclass
class EvalReport:
    thresholds: tuple
    success_rate: np.ndarray
    ever_within_rate: np.ndarray
    final_errors: np.ndarray
    collision_rate: float
    n_episodes: int
    n_seeds: int

    @property
    def final_err_mean(self) -> float:
        return float(self.final_errors.mean())

    @property
    def final_err_std(self) -> float:
        return float(self.final_errors.std())

    def success_at(self, threshold: float) -> float:
        return float(self.success_rate[list(self.thresholds).index(round(threshold, 2))])

    def rows(self) -> list:
        return [[t, s, self.n_episodes, self.n_seeds, self.final_err_mean, self.final_err_std,
                 self.collision_rate, ev]
                for t, s, ev in zip(self.thresholds, self.success_rate, self.ever_within_rate)]

    def write(self, path) -> Path:
        return write_csv(path, EVAL_COLUMNS, self.rows())


def evaluate_agent(agent: PpoAgent, cfg: RunConfig, seeds=None, thresholds=THRESHOLDS) -> EvalReport:
    """Greedy evaluation: ``cfg.eval_episodes`` fresh episodes per seed."""
    seeds = tuple(cfg.seeds if seeds is None else seeds)
    env = make_env(cfg)
    thr = np.asarray(thresholds)
    final, best, hits, collided = [], [], [], []
    for seed in seeds:
        rng = seed_streams(seed)["eval"]
        seed_final, seed_best = [], []
        for _ in range(cfg.eval_episodes):
            obs = env.reset(rng)
            done, min_err, hit = False, math.inf, False
            while not done:
                obs, _, done, info = env.step(agent.greedy_action(obs))
                min_err = min(min_err, info["error"])
                hit |= info["collision"]
            seed_final.append(info["error"])
            seed_best.append(min_err)
            collided.append(hit)
        final += seed_final
        best += seed_best
        hits.append((np.asarray(seed_final)[:, None] <= thr).mean(axis=0))
    ever = (np.asarray(best)[:, None] <= thr).mean(axis=0)
    return EvalReport(tuple(thresholds), np.mean(hits, axis=0), ever, np.asarray(final),
                      float(np.mean(collided)), cfg.eval_episodes, len(seeds))


def evaluate(checkpoint, cfg: RunConfig, seeds=None) -> EvalReport:
    """Evaluate a checkpoint (path or :class:`Checkpoint`) on the configured task."""
    ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else checkpoint_load(checkpoint)
    agent = agent_from_checkpoint(ckpt, obs_dim=cfg.obs_dim)
    return evaluate_agent(agent, cfg, seeds)


def learning_curve(results: list[TrainResult]) -> list:
    """Per-update mean and std of ``ep_reward_mean`` across seeds."""
    n = min(len(r.metrics) for r in results)
    rows = []
    for k in range(n):
        vals = np.array([r.metrics[k][2] for r in results])
        rows.append([results[0].metrics[k][1], float(vals.mean()), float(vals.std()), len(results)])
    return rows


def compare(cfg: RunConfig, variants=("vanilla", "aep", "improved"), write: bool = True) -> dict:
    """Train each variant on the same seeds and collect curves and success tables."""
    out = {}
    curve_rows, table_rows, final_rows = [], [], []
    for v in variants:
        vcfg = replace(cfg, variant=v)
        results = train(vcfg, write=write)
        reports = [evaluate_agent(r.agent, vcfg, seeds=[r.seed]) for r in results]
        success = np.mean([rep.success_rate for rep in reports], axis=0)
        out[v] = {"results": results, "reports": reports, "success": success}
        curve_rows += [[v] + row for row in learning_curve(results)]
        table_rows += [[v, t, s, len(results)] for t, s in zip(THRESHOLDS, success)]
        final_rows += [[v, r.seed, r.final_reward(), rep.final_err_mean] for r, rep in zip(results, reports)]
    if write:
        base = cfg.output_path / cfg.task
        write_csv(base / "compare_curves.csv", ["variant", "steps", "ep_reward_mean", "ep_reward_std", "n_seeds"],
                  curve_rows)
        write_csv(base / "compare_success.csv", ["variant", "threshold_m", "success_rate", "n_seeds"], table_rows)
        write_csv(base / "compare_final.csv", ["variant", "seed", "final100_reward_mean", "final_err_mean"],
                  final_rows)
    return out
