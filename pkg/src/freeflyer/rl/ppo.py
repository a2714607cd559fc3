"""GAE, the clipped-surrogate update, and the on-policy rollout buffer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError
from .nets import (
    Adam,
    MlpParams,
    backward,
    clip_grad_norm,
    forward_with_cache,
    gaussian_entropy,
    gaussian_log_prob,
)


def compute_gae(rewards: np.ndarray, values: np.ndarray, terminals: np.ndarray,
                gamma: float, lam: float, bootstrap_value: np.ndarray):
    """Generalized advantage estimation over (n_envs, T) arrays.

    delta_t = r_t + gamma v_{t+1} (1 - done_t) - v_t
    A_t     = delta_t + gamma lam (1 - done_t) A_{t+1}
    returns = advantages + values
    """
    rewards = np.atleast_2d(np.asarray(rewards, dtype=np.float64))
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    terminals = np.atleast_2d(np.asarray(terminals, dtype=bool))
    n, T = rewards.shape
    if values.shape != (n, T) or terminals.shape != (n, T):
        raise InvalidInputError("rewards, values, terminals must share shape (n, T)")
    bootstrap_value = np.asarray(bootstrap_value, dtype=np.float64).reshape(n)

    advantages = np.zeros((n, T))
    last = np.zeros(n)
    for t in reversed(range(T)):
        nonterminal = 1.0 - terminals[:, t].astype(np.float64)
        next_value = values[:, t + 1] if t + 1 < T else bootstrap_value
        delta = rewards[:, t] + gamma * next_value * nonterminal - values[:, t]
        last = delta + gamma * lam * nonterminal * last
        advantages[:, t] = last
    return advantages, advantages + values


@dataclass
class RolloutBuffer:
    """One batch of on-policy experience, flattened for minibatching.

    Advantages are recomputed (never reused stale) before each update
    epoch; after normalization their mean is 0 and std 1 to 1e-6.
    """

    observations: np.ndarray   # (n_envs, T, obs_dim)
    actions: np.ndarray        # (n_envs, T, act_dim), pre-clamp samples
    rewards: np.ndarray        # (n_envs, T)
    terminals: np.ndarray      # (n_envs, T)
    values: np.ndarray         # (n_envs, T)
    log_probs: np.ndarray      # (n_envs, T)
    bootstrap_value: np.ndarray  # (n_envs,)

    @property
    def size(self) -> int:
        return self.rewards.size

    def flat_view(self, gamma: float, lam: float):
        """Recompute advantages/returns and return flattened training arrays."""
        adv, ret = compute_gae(self.rewards, self.values, self.terminals,
                               gamma, lam, self.bootstrap_value)
        n, T, od = self.observations.shape
        obs = self.observations.reshape(n * T, od)
        act = self.actions.reshape(n * T, -1)
        adv = adv.reshape(n * T)
        std = adv.std()
        adv_norm = (adv - adv.mean()) / (std + 1e-8)
        return obs, act, adv_norm, ret.reshape(n * T), self.log_probs.reshape(n * T)


def surrogate_and_mean_grad(ratio: np.ndarray, adv: np.ndarray, clip_eps: float):
    """Clipped surrogate value and its gradient w.r.t. the ratio.

    The per-sample gradient is adv where the unclipped branch is selected
    (ratio inside the clip range, or outside it with favorable sign) and
    exactly zero where clipping is active with adverse advantage sign.
    """
    s1 = ratio * adv
    s2 = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv
    selected = s1 <= s2
    value = float(np.mean(np.minimum(s1, s2)))
    grad = np.where(selected, adv, 0.0) / ratio.shape[0]
    return value, grad


def policy_gradient(params: MlpParams, obs: np.ndarray, actions: np.ndarray,
                    advantages: np.ndarray, log_probs_old: np.ndarray,
                    clip_eps: float) -> MlpParams:
    """Gradient of the negated clipped surrogate w.r.t. the policy parameters."""
    mean, _, actor_cache, critic_cache = forward_with_cache(params, obs)
    std = np.exp(params.log_std)
    logp = gaussian_log_prob(actions, mean, params.log_std)
    ratio = np.exp(logp - log_probs_old)
    _, dsurr_dratio = surrogate_and_mean_grad(ratio, advantages, clip_eps)
    dlogp = dsurr_dratio * ratio  # d surrogate / d logp per sample
    # maximize surrogate => gradient of loss (-surrogate)
    z = (actions - mean) / std
    d_mean = -(dlogp[:, None] * z / std)
    d_log_std = -np.sum(dlogp[:, None] * (z * z - 1.0), axis=0)
    zero_v = np.zeros_like(mean[:, 0])
    return backward(params, actor_cache, critic_cache, d_mean, zero_v, d_log_std)


def loss_and_grads(params: MlpParams, obs: np.ndarray, actions: np.ndarray,
                   advantages: np.ndarray, returns: np.ndarray,
                   log_probs_old: np.ndarray, clip_eps: float,
                   value_coef: float, entropy_coef: float):
    """Full PPO minibatch loss and its reverse-mode gradients.

    loss = -surrogate + value_coef * value_mse - entropy_coef * entropy.
    Returns (loss, grads, diagnostics).
    """
    mean, value, actor_cache, critic_cache = forward_with_cache(params, obs)
    std = np.exp(params.log_std)
    logp = gaussian_log_prob(actions, mean, params.log_std)
    ratio = np.exp(logp - log_probs_old)
    surr, dsurr_dratio = surrogate_and_mean_grad(ratio, advantages, clip_eps)
    v_err = value - returns
    value_loss = float(np.mean(v_err * v_err))
    entropy = gaussian_entropy(params.log_std)
    loss = -surr + value_coef * value_loss - entropy_coef * entropy

    dlogp = dsurr_dratio * ratio
    z = (actions - mean) / std
    d_mean = -(dlogp[:, None] * z / std)
    d_log_std = -np.sum(dlogp[:, None] * (z * z - 1.0), axis=0)
    d_log_std -= entropy_coef * np.ones_like(params.log_std)
    d_value = value_coef * 2.0 * v_err / v_err.shape[0]
    grads = backward(params, actor_cache, critic_cache, d_mean, d_value, d_log_std)
    diag = {"surrogate": surr, "value_loss": value_loss, "entropy": entropy,
            "approx_kl": float(np.mean(log_probs_old - logp)),
            "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > clip_eps))}
    return loss, grads, diag


def ppo_update(params: MlpParams, buffer: RolloutBuffer, cfg,
               optimizer: Adam | None = None,
               rng: np.random.Generator | None = None) -> tuple[MlpParams, dict]:
    """Minibatch clipped-surrogate updates over the buffer.

    Returns (updated params, metrics).  On a non-finite loss the update
    is aborted: the incoming parameters are returned unchanged and the
    incident is reported in the metrics.
    """
    params = params.copy()
    optimizer = optimizer or Adam(params, lr=cfg.learning_rate)
    rng = rng or np.random.default_rng(cfg.seed)
    metrics = {"surrogate": [], "value_loss": [], "entropy": [], "approx_kl": [],
               "clip_fraction": [], "aborted": False}
    backup = params.copy()

    def finalize():
        return {k: (float(np.mean(v)) if isinstance(v, list) and v else v)
                for k, v in metrics.items()}

    for _ in range(cfg.epochs):
        obs, act, adv, ret, logp_old = buffer.flat_view(cfg.gamma, cfg.lam)
        n = obs.shape[0]
        order = rng.permutation(n)
        mb = max(1, min(cfg.minibatch_size, n))
        for start in range(0, n, mb):
            idx = order[start:start + mb]
            loss, grads, diag = loss_and_grads(
                params, obs[idx], act[idx], adv[idx], ret[idx], logp_old[idx],
                cfg.clip_eps, cfg.value_coef, cfg.entropy_coef)
            if not np.isfinite(loss):
                metrics["aborted"] = True
                return backup, finalize()
            clip_grad_norm(grads, 0.5)
            optimizer.step(params, grads)
            for key in ("surrogate", "value_loss", "entropy", "approx_kl", "clip_fraction"):
                metrics[key].append(diag[key])

    return params, finalize()
