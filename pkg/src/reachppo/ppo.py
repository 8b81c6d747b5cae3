"""PPO with Poisson action ensembles and a policy-feedback discount.

Three variants share this module:

* ``vanilla``   one Gaussian draw per step, critic regressed on the
  discounted return with a constant discount;
* ``aep``       action ensembles: a Poisson-sized batch of draws is averaged
  into the executed action, the ensemble size growing over training;
* ``improved``  action ensembles plus a critic target whose per-step
  discount is the policy's own (clipped) probability of the executed action.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .netcore import (
    AdamState,
    GaussianPolicy,
    Mlp,
    NonFiniteError,
    adam_step,
    diag_gaussian_log_prob,
    init_mlp,
    mlp_backward,
    mlp_forward,
    mlp_forward_cached,
)

VARIANTS = ("vanilla", "aep", "improved")
FEEDBACK_SCALES = ("joint", "relative", "density")


@dataclass(frozen=True)
class PpoConfig:
    clip_eps: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    alpha: float = 5.0
    eta: float = 0.55
    epochs: int = 10
    minibatch: int = 256
    horizon: int = 2048
    actor_lr: float = 3e-4
    critic_lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    log_spread_init: float = math.log(0.5)
    hidden: int = 256
    use_aep: bool = True
    policy_feedback: bool = True
    advantage: str = "gae"
    normalize_advantages: bool = True
    normalize_obs: bool = True
    max_grad_norm: float = 0.0
    feedback_scale: str = "joint"
    feedback_in_advantage: bool = True
    target_kl: float = 0.02

    def __post_init__(self):
        if not 0 < self.clip_eps < 1:
            raise ValueError("clip_eps must lie in (0, 1)")
        if not 0.55 <= self.eta <= 0.99:
            raise ValueError("eta must lie in [0.55, 0.99]")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not 0 < self.gae_lambda <= 1:
            raise ValueError("gae_lambda must lie in (0, 1]")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.advantage not in ("gae", "td"):
            raise ValueError("advantage must be 'gae' or 'td'")
        if self.feedback_scale not in FEEDBACK_SCALES:
            raise ValueError(f"feedback_scale must be one of {FEEDBACK_SCALES}")
        if min(self.epochs, self.minibatch, self.horizon, self.hidden) < 1:
            raise ValueError("epochs, minibatch, horizon and hidden must be >= 1")

    @property
    def variant(self) -> str:
        if self.policy_feedback:
            return "improved"
        return "aep" if self.use_aep else "vanilla"

    def with_variant(self, name: str) -> "PpoConfig":
        flags = {
            "vanilla": dict(use_aep=False, policy_feedback=False),
            "aep": dict(use_aep=True, policy_feedback=False),
            "improved": dict(use_aep=True, policy_feedback=True),
        }
        if name not in flags:
            raise ValueError(f"unknown variant {name!r}; expected one of {VARIANTS}")
        return replace(self, **flags[name])

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------- ensembles

def aep_beta(e_n: int, e_a: int, alpha: float) -> float:
    """Poisson mean for episode ``e_n`` out of ``e_a``."""
    if e_a <= 0 or not 0 <= e_n <= e_a:
        raise ValueError("need e_a > 0 and 0 <= e_n <= e_a")
    return 1.0 + alpha * e_n / e_a


def aep_draw(e_n: int, e_a: int, alpha: float, rng: np.random.Generator) -> tuple[int, int]:
    """Return ``(raw, i)``: a Poisson draw and its clip into ``[1, round(2 beta)]``."""
    beta = aep_beta(e_n, e_a, alpha)
    raw = int(rng.poisson(beta))
    return raw, int(min(max(raw, 1), round(2 * beta)))


def aep_sample_count(e_n: int, e_a: int, alpha: float, rng: np.random.Generator) -> int:
    """Number of Gaussian draws to average for one action."""
    return aep_draw(e_n, e_a, alpha, rng)[1]


def aep_action(policy: GaussianPolicy, state, i: int, rng: np.random.Generator,
               low=-np.inf, high=np.inf, mean=None):
    """Average ``i`` policy draws, score the average, then clip it.

    Returns ``(action, log_prob)``. ``log_prob`` is the policy's log-density
    at the ensemble average *before* clipping: once the mean drifts past a
    bound, the clipped action sits many spreads into the tail and its score
    would swamp every gradient. Clipping is a safety layer for the arm, not
    part of the distribution. ``mean`` may be passed when the caller already
    evaluated the network.
    """
    if i < 1:
        raise ValueError("ensemble size must be >= 1")
    mu = policy.mean(state) if mean is None else mean
    draws = mu + policy.spread * rng.standard_normal((i, mu.shape[-1]))
    avg = draws.mean(axis=0)
    return np.clip(avg, low, high), float(diag_gaussian_log_prob(mu, policy.log_spread, avg))


# ---------------------------------------------------------- policy feedback

def policy_feedback_gamma(pi_val, eta: float):
    """Discount factor fed back from the policy: ``clip(pi_val, eta, 1)``."""
    return np.clip(pi_val, eta, 1.0)


def feedback_probability(log_prob, act_dim: int = 6, log_spread=None):
    """Probability-like score of an action, fed to :func:`policy_feedback_gamma`.

    Without ``log_spread`` this is the per-dimension geometric mean of the
    density, ``exp(log_prob / act_dim)``. That value still carries units: once
    the spread falls below about 0.4 it exceeds 1 near the mean and the
    discount pins at 1. Passing ``log_spread`` divides by the density at the
    mode first, giving ``exp(-|z|^2 / (2 act_dim))`` in (0, 1] for any spread.
    """
    log_prob = np.asarray(log_prob, dtype=np.float64)
    if log_spread is not None:
        log_prob = log_prob - gaussian_log_mode(log_spread)
    return np.exp(log_prob / act_dim)


def feedback_score(log_prob, log_spread, scale: str = "joint"):
    """Map an action's log-density to the ``pi(s, a)`` fed into the discount.

    ``"joint"``     density over its peak value, ``exp(-|z|^2 / 2)``;
    ``"relative"``  per-dimension geometric mean of that ratio;
    ``"density"``   per-dimension geometric mean of the raw density.
    """
    act_dim = np.size(log_spread)
    if scale == "joint":
        return np.exp(np.asarray(log_prob, dtype=np.float64) - gaussian_log_mode(log_spread))
    if scale == "relative":
        return feedback_probability(log_prob, act_dim, log_spread)
    if scale == "density":
        return feedback_probability(log_prob, act_dim)
    raise ValueError(f"unknown feedback scale {scale!r}")


def gaussian_log_mode(log_spread) -> float:
    """Log-density of a diagonal Gaussian at its mean."""
    ls = np.asarray(log_spread, dtype=np.float64)
    return float(-np.sum(ls) - 0.5 * ls.size * math.log(2 * math.pi))


# -------------------------------------------------------------- estimators

def pf_returns(rewards, gammas, dones) -> np.ndarray:
    """``R_t = sum_{i>=t} r_i prod_{j=t..i} gamma_j`` within each episode.

    Computed backwards as ``R_t = gamma_t (r_t + R_{t+1})``; the sum stops
    at steps flagged ``done``.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    gammas = np.asarray(gammas, dtype=np.float64)
    out = np.empty_like(rewards)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        if dones[t]:
            acc = 0.0
        acc = gammas[t] * (rewards[t] + acc)
        out[t] = acc
    return out


def discounted_returns(rewards, gamma: float, dones, last_value: float = 0.0) -> np.ndarray:
    """Classical discounted return ``G_t = r_t + gamma G_{t+1}`` per episode."""
    out = np.empty(len(rewards))
    acc = last_value
    for t in range(len(rewards) - 1, -1, -1):
        if dones[t]:
            acc = 0.0
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def gae(rewards, values, dones, gamma, lam: float, last_value: float = 0.0) -> np.ndarray:
    """Generalized advantage estimates by backward recursion.

    ``values[t]`` is V(s_t); ``last_value`` bootstraps the state after the
    final step when that step did not end an episode. A ``done`` step has no
    successor value and cuts the recursion. ``gamma`` is a constant or a
    per-step array (the policy-feedback discount).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    T = len(rewards)
    gammas = np.broadcast_to(np.asarray(gamma, dtype=np.float64), (T,))
    adv = np.empty(T)
    acc = 0.0
    next_v = last_value
    for t in range(T - 1, -1, -1):
        live = 0.0 if dones[t] else 1.0
        g = gammas[t]
        delta = rewards[t] + g * next_v * live - values[t]
        acc = delta + g * lam * live * acc
        adv[t] = acc
        next_v = values[t]
    return adv


# ------------------------------------------------------------------ losses

def actor_loss(policy: GaussianPolicy, obs, actions, old_log_prob, advantages, clip_eps: float):
    """Negative clipped surrogate and its gradients.

    Returns ``(loss, grads, clip_frac)``; ``grads`` follows
    :meth:`GaussianPolicy.arrays` (network arrays then ``log_spread``).
    """
    obs = np.atleast_2d(obs)
    actions = np.atleast_2d(actions)
    adv = np.asarray(advantages, dtype=np.float64)
    n = len(adv)
    mu, cache = mlp_forward_cached(policy.mean_net, obs)
    ls = policy.log_spread
    inv_var = np.exp(-2.0 * ls)
    diff = actions - mu
    log_prob = diag_gaussian_log_prob(mu, ls, actions)
    with np.errstate(over="ignore"):
        ratio = np.exp(log_prob - old_log_prob)
    if not np.all(np.isfinite(ratio)):
        raise NonFiniteError("non-finite probability ratio; batch rejected")
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
    surr = ratio * adv
    surr_clip = clipped * adv
    loss = -float(np.mean(np.minimum(surr, surr_clip)))
    # gradient only flows where the unclipped term is the minimum
    active = surr <= surr_clip
    dlogp = np.where(active, -adv * ratio / n, 0.0)
    dmu = dlogp[:, None] * diff * inv_var
    dls = np.sum(dlogp[:, None] * (diff * diff * inv_var - 1.0), axis=0)
    grads, _ = mlp_backward(policy.mean_net, cache, dmu)
    clip_frac = float(np.mean(np.abs(ratio - 1.0) > clip_eps))
    return loss, grads + [dls], clip_frac


def critic_loss(value_net: Mlp, obs, returns):
    """Mean squared error of the value head against ``returns``, with gradients."""
    obs = np.atleast_2d(obs)
    returns = np.asarray(returns, dtype=np.float64)
    v, cache = mlp_forward_cached(value_net, obs)
    err = v[:, 0] - returns
    loss = float(np.mean(err * err))
    grads, _ = mlp_backward(value_net, cache, (2.0 / len(err)) * err[:, None])
    return loss, grads


def clip_grad_norm(grads: list[np.ndarray], max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if max_norm > 0 and norm > max_norm:
        for g in grads:
            g *= max_norm / norm
    return norm


# ------------------------------------------------------------------ agent

class RunningNorm:
    """Running mean/variance of observations (parallel-merge update)."""

    def __init__(self, dim: int, clip: float = 10.0):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = 1e-4
        self.clip = clip

    def update(self, x: np.ndarray) -> None:
        x = np.atleast_2d(x)
        n = x.shape[0]
        bm, bv = x.mean(axis=0), x.var(axis=0)
        tot = self.count + n
        delta = bm - self.mean
        self.mean = self.mean + delta * n / tot
        self.var = (self.var * self.count + bv * n + delta**2 * self.count * n / tot) / tot
        self.count = tot

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.clip((x - self.mean) / np.sqrt(self.var + 1e-8), -self.clip, self.clip)


class PpoAgent:
    """Actor, critic, their optimizers and the observation normalizer."""

    def __init__(self, obs_dim: int, act_dim: int = 6, config: PpoConfig = PpoConfig(),
                 rng: np.random.Generator | None = None, low=-3.14, high=3.14):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.config = config
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.low = np.broadcast_to(np.asarray(low, dtype=np.float64), (act_dim,)).copy()
        self.high = np.broadcast_to(np.asarray(high, dtype=np.float64), (act_dim,)).copy()
        h = config.hidden
        self.actor = GaussianPolicy(
            init_mlp(obs_dim, act_dim, rng, hidden=h, out_gain=0.01),
            np.full(act_dim, config.log_spread_init),
        )
        self.critic = init_mlp(obs_dim, 1, rng, hidden=h, out_gain=1.0)
        self.norm = RunningNorm(obs_dim) if config.normalize_obs else None
        self.reset_optimizers()

    def reset_optimizers(self) -> None:
        c = self.config
        kw = dict(beta1=c.adam_beta1, beta2=c.adam_beta2, eps=c.adam_eps)
        self.actor_opt = AdamState.for_params(self.actor.arrays(), lr=c.actor_lr, **kw)
        self.critic_opt = AdamState.for_params(self.critic.arrays(), lr=c.critic_lr, **kw)

    def normalize(self, obs: np.ndarray) -> np.ndarray:
        return self.norm(obs) if self.norm is not None else np.asarray(obs, dtype=np.float64)

    def greedy_action(self, obs: np.ndarray) -> np.ndarray:
        """Deterministic action: the clipped policy mean."""
        return np.clip(self.actor.mean(self.normalize(obs)), self.low, self.high)

    def value(self, nobs: np.ndarray) -> np.ndarray:
        return mlp_forward(self.critic, nobs)[..., 0]


@dataclass
class RolloutBuffer:
    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    values: np.ndarray
    gammas: np.ndarray
    ensemble: np.ndarray
    episode_returns: list = field(default_factory=list)
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.rewards)

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)


@dataclass
class EpisodeCounter:
    done: int = 0
    total: int = 1


def collect_rollout(env, agent: PpoAgent, env_rng, act_rng, counter: EpisodeCounter) -> RolloutBuffer:
    """Run whole episodes until at least ``config.horizon`` steps are stored."""
    cfg = agent.config
    max_steps = env.config.max_steps
    n_eps = max(1, math.ceil(cfg.horizon / max_steps))
    T = n_eps * max_steps
    obs_b = np.empty((T, agent.obs_dim))
    act_b = np.empty((T, agent.act_dim))
    logp_b, rew_b, val_b, gam_b = (np.empty(T) for _ in range(4))
    done_b = np.zeros(T, dtype=bool)
    ens_b = np.empty(T, dtype=np.int64)
    ep_returns = []
    t = 0
    for _ in range(n_eps):
        obs = env.reset(env_rng)
        ep_ret, done = 0.0, False
        while not done:
            if agent.norm is not None:
                agent.norm.update(obs)
            nobs = agent.normalize(obs)
            mu = agent.actor.mean(nobs)
            if cfg.use_aep:
                e_n = min(counter.done, counter.total)
                i = aep_sample_count(e_n, counter.total, cfg.alpha, act_rng)
            else:
                i = 1
            a, logp = aep_action(agent.actor, nobs, i, act_rng, mean=mu)
            obs, r, done, _ = env.step(np.clip(a, agent.low, agent.high))
            obs_b[t], act_b[t], logp_b[t], rew_b[t] = nobs, a, logp, r
            done_b[t], ens_b[t] = done, i
            val_b[t] = agent.value(nobs)
            if cfg.policy_feedback:
                gam_b[t] = policy_feedback_gamma(
                    feedback_score(logp, agent.actor.log_spread, cfg.feedback_scale), cfg.eta)
            else:
                gam_b[t] = cfg.gamma
            ep_ret += r
            t += 1
        counter.done += 1
        ep_returns.append(ep_ret)
    return RolloutBuffer(obs_b, act_b, logp_b, rew_b, done_b, val_b, gam_b, ens_b, ep_returns)


def compute_targets(buf: RolloutBuffer, cfg: PpoConfig, last_value: float = 0.0) -> None:
    """Fill ``buf.advantages`` and ``buf.returns`` (the critic target)."""
    lam = cfg.gae_lambda if cfg.advantage == "gae" else 0.0
    # the critic learns feedback-discounted returns, so its TD residuals use the same discount
    gamma = buf.gammas if cfg.policy_feedback and cfg.feedback_in_advantage else cfg.gamma
    buf.advantages = gae(buf.rewards, buf.values, buf.dones, gamma, lam, last_value)
    if cfg.policy_feedback:
        buf.returns = pf_returns(buf.rewards, buf.gammas, buf.dones)
    else:
        buf.returns = discounted_returns(buf.rewards, cfg.gamma, buf.dones, last_value)


def update(agent: PpoAgent, buf: RolloutBuffer, rng: np.random.Generator) -> dict:
    """Run the minibatch epochs on one rollout and return training metrics."""
    cfg = agent.config
    if buf.advantages is None:
        compute_targets(buf, cfg)
    n = len(buf)
    a_losses, c_losses, clip_fracs = [], [], []
    actor_live, actor_epochs = True, 0
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            idx = perm[start:start + cfg.minibatch]
            lc, gc = critic_loss(agent.critic, buf.obs[idx], buf.returns[idx])
            if not math.isfinite(lc):
                raise NonFiniteError("non-finite critic loss")
            if cfg.max_grad_norm > 0:
                clip_grad_norm(gc, cfg.max_grad_norm)
            adam_step(agent.critic_opt, agent.critic.arrays(), gc)
            c_losses.append(lc)
            if not actor_live:
                continue
            adv = buf.advantages[idx]
            if cfg.normalize_advantages and len(idx) > 1:
                adv = (adv - adv.mean()) / (adv.std() + 1e-8)
            la, ga, cf = actor_loss(agent.actor, buf.obs[idx], buf.actions[idx],
                                    buf.log_probs[idx], adv, cfg.clip_eps)
            if not math.isfinite(la):
                raise NonFiniteError("non-finite actor loss")
            if cfg.max_grad_norm > 0:
                clip_grad_norm(ga, cfg.max_grad_norm)
            adam_step(agent.actor_opt, agent.actor.arrays(), ga)
            a_losses.append(la)
            clip_fracs.append(cf)
        if actor_live:
            actor_epochs += 1
            # early stop of policy epochs once the policy has drifted too far (critic keeps fitting)
            if cfg.target_kl > 0 and approx_kl(agent.actor, buf) > 1.5 * cfg.target_kl:
                actor_live = False
    rets = np.asarray(buf.episode_returns)
    return {
        "ep_reward_mean": float(rets.mean()) if len(rets) else float("nan"),
        "ep_reward_std": float(rets.std()) if len(rets) else float("nan"),
        "actor_loss": float(np.mean(a_losses)),
        "critic_loss": float(np.mean(c_losses)),
        "gamma_pf_mean": float(buf.gammas.mean()),
        "ensemble_i_mean": float(buf.ensemble.mean()),
        "clip_frac": float(np.mean(clip_fracs)),
        "actor_epochs": actor_epochs,
    }


def approx_kl(policy: GaussianPolicy, buf: RolloutBuffer) -> float:
    """Estimate KL(old || new) over the buffer as ``mean((r - 1) - log r)``."""
    log_ratio = diag_gaussian_log_prob(policy.mean(buf.obs), policy.log_spread, buf.actions) - buf.log_probs
    with np.errstate(over="ignore"):
        return float(np.mean(np.expm1(log_ratio) - log_ratio))
