"""Clipped-surrogate policy-gradient training with generalized advantage
estimation. All gradients are hand-derived for the fixed MLP topology.

The loss minimized per minibatch is

    L = -L_surrogate + vf_coef * L_value - entropy_coef * H

with L_surrogate the clipped importance-ratio objective, L_value the mean
squared error of the critic against GAE returns, and H the (state-independent)
Gaussian policy entropy. Advantages are normalized per update batch. Gradients
are clipped to a global norm across every parameter before the Adam step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import NumericalBlowup
from .genome import Genome
from .physics import SimConfig
from .policy import Policy
from .tasks import TaskEnv, TaskSpec, run_episode

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PpoConfig:
    learning_rate: float = 2.5e-4
    steps_per_update: int = 128
    batch_size: int = 4
    epochs: int = 4
    gamma: float = 0.99
    entropy_coef: float = 0.01
    vf_coef: float = 0.5
    clip_range: float = 0.1
    max_grad_norm: float = 0.5
    total_timesteps: int = 200_000
    eval_interval: int = 100_000
    gae_lambda: float = 0.95
    hidden: tuple[int, int] = (64, 64)

    def __post_init__(self):
        if not 0.0 < self.clip_range < 1.0:
            raise ValueError("clip_range must lie in (0, 1)")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        for name in ("learning_rate", "steps_per_update", "batch_size", "epochs",
                     "entropy_coef", "vf_coef", "max_grad_norm", "total_timesteps",
                     "eval_interval", "gae_lambda"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def paper_scale(cls, **overrides) -> "PpoConfig":
        """Full-scale settings: 256-unit hidden layers, 1e6 timesteps."""
        base = cls(hidden=(256, 256), total_timesteps=1_000_000)
        return replace(base, **overrides) if overrides else base


def gae_advantages(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
                   last_value: float, gamma: float, lam: float
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Exponentially blended n-step advantages and the matching value targets.

    `values` are V(s_t) for the collected states; `last_value` bootstraps the
    state after the final transition (ignored when that transition is done).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    n = rewards.shape[0]
    adv = np.zeros(n)
    carry = 0.0
    for t in range(n - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        next_value = last_value if t == n - 1 else values[t + 1]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        carry = delta + gamma * lam * nonterminal * carry
        adv[t] = carry
    return adv, adv + values


def gaussian_log_prob(actions: np.ndarray, mean: np.ndarray,
                      log_std: np.ndarray) -> np.ndarray:
    """Diagonal Gaussian log density, summed over action dimensions."""
    z = (actions - mean) / np.exp(log_std)
    return (-0.5 * z ** 2 - log_std - 0.5 * _LOG_2PI).sum(axis=1)


def gaussian_entropy(log_std: np.ndarray) -> float:
    return float((log_std + 0.5 * (1.0 + _LOG_2PI)).sum())


def ppo_loss(policy: Policy, batch: dict, cfg: PpoConfig) -> float:
    """Scalar training loss for a minibatch; shares no state with the gradient
    path, so finite differences of this function are an independent check."""
    mean, _ = policy.actor_forward(batch["obs"])
    value, _ = policy.critic_forward(batch["obs"])
    log_prob = gaussian_log_prob(batch["actions"], mean, policy.log_std)
    ratio = np.exp(log_prob - batch["log_prob_old"])
    adv = batch["advantages"]
    clipped = np.clip(ratio, 1.0 - cfg.clip_range, 1.0 + cfg.clip_range)
    surrogate = np.minimum(ratio * adv, clipped * adv).mean()
    value_loss = ((value - batch["returns"]) ** 2).mean()
    entropy = gaussian_entropy(policy.log_std)
    return float(-surrogate + cfg.vf_coef * value_loss - cfg.entropy_coef * entropy)


def ppo_loss_and_grads(policy: Policy, batch: dict, cfg: PpoConfig
                       ) -> tuple[float, dict[str, np.ndarray], dict]:
    """Loss plus analytic gradients for every parameter array."""
    obs, actions = batch["obs"], batch["actions"]
    adv, returns, log_prob_old = batch["advantages"], batch["returns"], batch["log_prob_old"]
    n = obs.shape[0]

    mean, actor_cache = policy.actor_forward(obs)
    value, critic_cache = policy.critic_forward(obs)
    std = np.exp(policy.log_std)
    z = (actions - mean) / std
    log_prob = (-0.5 * z ** 2 - policy.log_std - 0.5 * _LOG_2PI).sum(axis=1)
    ratio = np.exp(log_prob - log_prob_old)

    clipped = np.clip(ratio, 1.0 - cfg.clip_range, 1.0 + cfg.clip_range)
    surr_raw = ratio * adv
    surr_clip = clipped * adv
    surrogate = np.minimum(surr_raw, surr_clip).mean()
    value_loss = ((value - returns) ** 2).mean()
    entropy = gaussian_entropy(policy.log_std)
    loss = float(-surrogate + cfg.vf_coef * value_loss - cfg.entropy_coef * entropy)

    # surrogate gradient flows only where the active branch is the unclipped
    # ratio: for positive advantages that means ratio below the upper clip,
    # for negative ones ratio above the lower clip
    live = np.where(adv >= 0.0, ratio <= 1.0 + cfg.clip_range,
                    ratio >= 1.0 - cfg.clip_range)
    d_log_prob = -(adv * ratio * live) / n

    d_mean = d_log_prob[:, None] * (actions - mean) / std ** 2
    grads = policy.actor_backward(actor_cache, d_mean)

    d_log_std = (d_log_prob[:, None] * (z ** 2 - 1.0)).sum(axis=0)
    d_log_std -= cfg.entropy_coef
    grads["log_std"] = d_log_std

    d_value = 2.0 * cfg.vf_coef * (value - returns) / n
    grads.update(policy.critic_backward(critic_cache, d_value))

    stats = {"surrogate": float(surrogate), "value_loss": float(value_loss),
             "entropy": entropy, "mean_ratio": float(ratio.mean())}
    return loss, grads, stats


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so the global L2 norm is at most max_norm."""
    total = math.sqrt(sum(float((g ** 2).sum()) for g in grads.values()))
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


class Adam:
    """Bias-corrected Adam over a dict of named parameter arrays."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for key, g in grads.items():
            if key not in self.m:
                self.m[key] = np.zeros_like(g)
                self.v[key] = np.zeros_like(g)
            m = self.m[key]
            v = self.v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g ** 2
            m_hat = m / (1.0 - self.beta1 ** self.t)
            v_hat = v / (1.0 - self.beta2 ** self.t)
            params[key] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def train(genome: Genome, task: TaskSpec, cfg: PpoConfig, seed: int,
          sim_config: SimConfig | None = None
          ) -> tuple[Policy, list[tuple[int, float]]]:
    """Train one controller; returns the policy and its evaluation curve.

    Deterministic given (genome, task, cfg, seed). The curve holds one
    deterministic-episode fitness per eval_interval boundary plus a final
    entry at total_timesteps. Raises NumericalBlowup if the simulation or the
    loss leaves the finite range.
    """
    rng = np.random.default_rng(seed)
    env = TaskEnv(genome, task, sim_config)
    policy = Policy.init_random([env.obs_dim, *cfg.hidden, env.act_dim], rng)
    optimizer = Adam(cfg.learning_rate)
    params = policy.params()

    obs = env.reset(seed=int(rng.integers(2 ** 31)))
    curve: list[tuple[int, float]] = []
    steps_done = 0
    next_eval = cfg.eval_interval

    def evaluate() -> float:
        return run_episode(genome, policy, task, seed=seed, sim_config=sim_config).fitness

    while steps_done < cfg.total_timesteps:
        horizon = min(cfg.steps_per_update, cfg.total_timesteps - steps_done)
        obs_buf = np.empty((horizon, env.obs_dim))
        act_buf = np.empty((horizon, env.act_dim))
        logp_buf = np.empty(horizon)
        rew_buf = np.empty(horizon)
        val_buf = np.empty(horizon)
        done_buf = np.empty(horizon)

        for t in range(horizon):
            mean, value = policy.forward(obs)
            noise = rng.standard_normal(env.act_dim)
            action = mean + np.exp(policy.log_std) * noise
            logp = gaussian_log_prob(action[None, :], mean[None, :], policy.log_std)[0]
            next_obs, reward, done, info = env.step(np.clip(action, -1.0, 1.0))
            if info["blowup"]:
                raise NumericalBlowup(
                    f"simulation diverged during training at step {steps_done + t}"
                )
            obs_buf[t] = obs
            act_buf[t] = action
            logp_buf[t] = logp
            rew_buf[t] = reward
            val_buf[t] = value
            done_buf[t] = float(done)
            obs = next_obs
            if done:
                obs = env.reset(seed=int(rng.integers(2 ** 31)))

        last_value = 0.0 if done_buf[-1] else policy.forward(obs)[1]
        adv, returns = gae_advantages(
            rew_buf, val_buf, done_buf, last_value, cfg.gamma, cfg.gae_lambda
        )
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)

        for _ in range(cfg.epochs):
            perm = rng.permutation(horizon)
            for start in range(0, horizon, cfg.batch_size):
                idx = perm[start:start + cfg.batch_size]
                batch = {
                    "obs": obs_buf[idx],
                    "actions": act_buf[idx],
                    "log_prob_old": logp_buf[idx],
                    "advantages": adv[idx],
                    "returns": returns[idx],
                }
                loss, grads, _ = ppo_loss_and_grads(policy, batch, cfg)
                if not math.isfinite(loss):
                    raise NumericalBlowup(
                        f"non-finite loss at step {steps_done}: "
                        f"|log_std|max={np.abs(policy.log_std).max():.3g}"
                    )
                clip_grad_norm(grads, cfg.max_grad_norm)
                optimizer.step(params, grads)

        steps_done += horizon
        while next_eval <= steps_done:
            curve.append((next_eval, evaluate()))
            next_eval += cfg.eval_interval

    if not curve or curve[-1][0] != cfg.total_timesteps:
        curve.append((cfg.total_timesteps, evaluate()))
    return policy, curve
