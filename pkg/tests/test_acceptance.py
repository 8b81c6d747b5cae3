"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Criteria 5-7 train full-size agents (3e5 and 5e5 environment steps) and take
roughly 25 minutes on one core. Training runs are shared through session
fixtures so the improved-PPO seeds serve both criterion 5 and criterion 6.
"""
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from reachppo.geometry import point_segment_distance
from reachppo.harness.checkpoint import (
    agent_from_checkpoint,
    checkpoint_from_agent,
    checkpoint_load,
    checkpoint_save,
)
from reachppo.harness.config import RunConfig
from reachppo.harness.runner import evaluate, evaluate_agent, train, train_seed
from reachppo.netcore import GaussianPolicy, diag_gaussian_log_prob, init_mlp
from reachppo.ppo import aep_action, aep_beta, aep_draw, actor_loss, critic_loss, gae, pf_returns

SEEDS = (0, 1, 2)


# ------------------------------------------------------------------ oracles

def central_diff(f, arr, h=1e-5):
    g = np.zeros_like(arr)
    for idx in np.ndindex(arr.shape):
        old = arr[idx]
        arr[idx] = old + h
        fp = f()
        arr[idx] = old - h
        fm = f()
        arr[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def max_rel_err(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))))


def gae_explicit(r, v, dones, gamma, lam, last_value):
    """A_t = sum_k (gamma lam)^(k-t) delta_k, truncated at the episode end."""
    T = len(r)
    nxt = [0.0 if dones[t] else (v[t + 1] if t + 1 < T else last_value) for t in range(T)]
    delta = [r[t] + gamma * nxt[t] - v[t] for t in range(T)]
    out = np.empty(T)
    for t in range(T):
        s, k = 0.0, t
        while k < T:
            s += (gamma * lam) ** (k - t) * delta[k]
            if dones[k]:
                break
            k += 1
        out[t] = s
    return out


def pf_double_loop(r, g, dones):
    """R_t = sum_{i=t}^{T} r_i prod_{j=t}^{i} gamma_j with T the episode's last step."""
    out = np.empty(len(r))
    for t in range(len(r)):
        end = t
        while end < len(r) - 1 and not dones[end]:
            end += 1
        out[t] = sum(r[i] * math.prod(g[t:i + 1]) for i in range(t, end + 1))
    return out


# ---------------------------------------------------------- fast criteria

def test_criterion_1_geometry_oracle(acceptance):
    rng = np.random.default_rng(2024)
    ts = np.linspace(0.0, 1.0, 1_000_000)
    buf = np.empty_like(ts)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        p0, p1, p2 = rng.uniform(-1, 1, (3, 3))
        w, d = p1 - p0, p2 - p1
        # |p1 + t (p2 - p1) - p0|^2 expanded as a quadratic in t, scanned densely over [0, 1]
        np.multiply(ts, d @ d, out=buf)  # Horner form: t (|d|^2 t + 2 w.d)
        buf += 2.0 * (w @ d)
        buf *= ts
        scan = math.sqrt(max(buf.min() + w @ w, 0.0))
        worst = max(worst, abs(point_segment_distance(p0, p1, p2) - scan))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 10.0
    acceptance(1, ok, f"1000 instances, max |err| {worst:.2e} (tol 1e-6), {elapsed:.1f} s (limit 10 s)")
    assert ok


def test_criterion_2_gradient_fidelity(acceptance):
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        n_in, hidden = int(rng.integers(2, 7)), int(rng.integers(2, 9))
        net = init_mlp(n_in, 6, rng, hidden=hidden, out_gain=1.0)
        for b in net.biases:
            b += 0.1 * rng.standard_normal(b.shape)
        pol = GaussianPolicy(net, rng.uniform(-1.0, 0.0, 6))
        obs = rng.normal(size=(8, n_in))
        act = pol.mean(obs) + 0.3 * rng.normal(size=(8, 6))
        # half the samples sit well inside the clip band, half well outside it
        shift = np.concatenate([rng.uniform(-0.08, 0.08, 4), rng.choice([-0.6, 0.6], 4)])
        old = diag_gaussian_log_prob(pol.mean(obs), pol.log_spread, act) + shift
        adv = rng.normal(size=8)

        def fa():
            return actor_loss(pol, obs, act, old, adv, 0.2)[0]

        _, ga, _ = actor_loss(pol, obs, act, old, adv, 0.2)
        for p, g in zip(pol.arrays(), ga):
            worst = max(worst, max_rel_err(g, central_diff(fa, p)))

        critic = init_mlp(n_in, 1, rng, hidden=hidden)
        ret = rng.normal(size=8)

        def fc():
            return critic_loss(critic, obs, ret)[0]

        _, gc = critic_loss(critic, obs, ret)
        for p, g in zip(critic.arrays(), gc):
            worst = max(worst, max_rel_err(g, central_diff(fc, p)))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 60.0
    acceptance(2, ok, f"20 nets, max relative error {worst:.2e} (tol 1e-4), {elapsed:.1f} s (limit 60 s)")
    assert ok


def test_criterion_3_estimator_oracles(acceptance):
    rng = np.random.default_rng(3)
    worst_gae = worst_pf = 0.0
    for _ in range(100):
        T = int(rng.integers(1, 60))
        r, v = rng.normal(size=T), rng.normal(size=T)
        dones = rng.random(T) < 0.1
        gamma, lam, lv = rng.uniform(0.5, 1.0), rng.uniform(0.0, 1.0), rng.normal()
        worst_gae = max(worst_gae, np.max(np.abs(gae(r, v, dones, gamma, lam, lv)
                                                 - gae_explicit(r, v, dones, gamma, lam, lv))))
        g = rng.uniform(0.55, 1.0, size=T)
        worst_pf = max(worst_pf, np.max(np.abs(pf_returns(r, g, dones) - pf_double_loop(r, g, dones))))
    ok = worst_gae <= 1e-10 and worst_pf <= 1e-10
    acceptance(3, ok, f"100 traces, GAE max diff {worst_gae:.1e}, policy-feedback returns max diff "
                      f"{worst_pf:.1e} (tol 1e-10)")
    assert ok


def test_criterion_4_distribution_properties(acceptance):
    rng = np.random.default_rng(4)
    parts, ok = [], True
    for e_n in (0, 5, 10):  # beta = 1, 3.5, 6 with alpha 5 over 10 episodes
        beta = aep_beta(e_n, 10, 5.0)
        draws = np.array([aep_draw(e_n, 10, 5.0, rng) for _ in range(100_000)])
        raw, i = draws[:, 0], draws[:, 1]
        in_range = i.min() >= 1 and i.max() <= round(2 * beta)
        mean_err = abs(raw.mean() - beta) / beta
        ok &= bool(in_range) and mean_err <= 0.01
        parts.append(f"beta {beta:g}: i in [{i.min()}, {i.max()}], mean err {mean_err:.2%}")
    pol = GaussianPolicy(init_mlp(4, 6, rng, hidden=8), np.log(np.linspace(0.2, 0.7, 6)))
    s = rng.normal(size=4)
    mu = pol.mean(s)
    acts = np.array([aep_action(pol, s, 10_000, rng, mean=mu)[0] for _ in range(1000)])
    ratio = (acts - mu).std(axis=0) / (pol.spread / math.sqrt(10_000))
    spread_err = float(np.max(np.abs(ratio - 1)))
    ok &= spread_err <= 0.10
    parts.append(f"ensemble std vs spread/sqrt(1e4) max err {spread_err:.1%} (tol 10%)")
    acceptance(4, ok, "; ".join(parts))
    assert ok


def test_criterion_8_determinism_and_persistence(acceptance, tmp_path):
    base = RunConfig(total_timesteps=4200, eval_episodes=20, seeds=(11,), checkpoint_every=0)
    a = train_seed(replace(base, out_dir=str(tmp_path / "a")), 11)
    b = train_seed(replace(base, out_dir=str(tmp_path / "b")), 11)
    same_csv = (a.out_dir / "metrics.csv").read_bytes() == (b.out_dir / "metrics.csv").read_bytes()

    ckpt = checkpoint_from_agent(a.agent, task=base.task, variant=base.variant, seed=11)
    p1 = checkpoint_save(tmp_path / "one.ckpt", ckpt)
    loaded = checkpoint_load(p1)
    arrays_equal = all(loaded.arrays[k].tobytes() == np.asarray(v, np.float64).tobytes() for k, v in ckpt.arrays.items())
    p2 = checkpoint_save(tmp_path / "two.ckpt", checkpoint_from_agent(agent_from_checkpoint(loaded), task=base.task,
                                                                      variant=base.variant, seed=11))
    bytes_equal = p1.read_bytes() == p2.read_bytes()

    direct = evaluate_agent(a.agent, base)
    reloaded = evaluate(p1, base)
    same_report = (np.array_equal(direct.success_rate, reloaded.success_rate)
                   and np.array_equal(direct.final_errors, reloaded.final_errors)
                   and direct.collision_rate == reloaded.collision_rate)
    ok = same_csv and arrays_equal and bytes_equal and same_report
    acceptance(8, ok, f"metrics CSV identical {same_csv}, checkpoint arrays identical {arrays_equal}, "
                      f"re-saved file identical {bytes_equal}, reloaded EvalReport identical {same_report}")
    assert ok


# --------------------------------------------------------- training runs

@pytest.fixture(scope="session")
def obstacle_free_runs(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance")
    runs = {}
    for variant in ("improved", "vanilla"):
        cfg = RunConfig(variant=variant, seeds=SEEDS, total_timesteps=300_000, out_dir=str(out),
                        checkpoint_every=0)
        runs[variant] = (cfg, train(cfg))
    return runs


@pytest.mark.slow
def test_criterion_5_obstacle_free_success(acceptance, obstacle_free_runs):
    cfg, results = obstacle_free_runs["improved"]
    reports = [evaluate_agent(r.agent, cfg, seeds=[r.seed]) for r in results]
    # pooled over seeds, as the EvalReport aggregates them
    success = np.mean([rep.success_rate for rep in reports], axis=0)
    per_seed = ", ".join(f"seed {r.seed}: {rep.success_at(0.05):.0%}/{rep.success_at(0.10):.0%}"
                         for r, rep in zip(results, reports))
    monotone = all(np.all(np.diff(rep.success_rate) >= 0) for rep in reports)
    s5, s10 = float(success[reports[0].thresholds.index(0.05)]), float(success[-1])
    ok = s10 >= 0.90 and s5 >= 0.60 and monotone
    acceptance(5, ok, f"3 seeds x 100 episodes, success at 10 cm {s10:.1%} (need 90%), at 5 cm {s5:.1%} "
                      f"(need 60%), monotone {monotone}; per seed 5cm/10cm [{per_seed}]")
    assert ok


@pytest.mark.slow
def test_criterion_6_improved_beats_vanilla(acceptance, obstacle_free_runs):
    _, improved = obstacle_free_runs["improved"]
    _, vanilla = obstacle_free_runs["vanilla"]
    pairs = [(a.seed, a.final_reward(), b.final_reward()) for a, b in zip(improved, vanilla)]
    wins = sum(ri >= rv for _, ri, rv in pairs)
    detail = ", ".join(f"seed {s}: {ri:.1f} vs {rv:.1f}" for s, ri, rv in pairs)
    ok = wins >= 2
    acceptance(6, ok, f"final-100-episode reward improved vs vanilla, wins {wins}/3 (need 2) [{detail}]")
    assert ok


@pytest.mark.slow
def test_criterion_7_obstacle_task(acceptance, tmp_path_factory):
    cfg = RunConfig(task="obstacles", seeds=(0,), total_timesteps=500_000, checkpoint_every=0,
                    out_dir=str(tmp_path_factory.mktemp("obstacles")))
    res = train(cfg)[0]
    rep = evaluate_agent(res.agent, cfg)
    curve = np.asarray(res.episode_returns)
    q = len(curve) // 4
    first, last = float(curve[:q].mean()), float(curve[-q:].mean())
    s10 = rep.success_at(0.10)
    ok = rep.collision_rate < 0.20 and s10 >= 0.50 and last > first
    acceptance(7, ok, f"collision rate {rep.collision_rate:.1%} (need < 20%), success at 10 cm {s10:.1%} "
                      f"(need 50%), reward quartiles first {first:.1f} -> last {last:.1f}")
    assert ok
