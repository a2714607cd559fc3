"""Training runner: rollout collection, updates, evaluation, deployment.

Collection alternates with clipped-surrogate updates; checkpoints are
written every eval interval and at the end.  Evaluation always uses the
deterministic (mean-action) policy.  Every random draw comes from a
stream keyed by (seed, env index, consumer), so full runs are
reproducible bit-for-bit, including across checkpoint save/load
boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import rng as rngmod
from ..actuation import ThrusterSystem
from ..control import ControlOutput, Setpoint
from ..errors import InvalidInputError
from ..rigid_body import State, Wrench
from ..vecenv import SetpointTask, SetpointVecEnv, make_rl_env, pair_actions_to_thrusts
from .checkpoint import load_checkpoint, save_checkpoint
from .nets import Adam, MlpParams, gaussian_log_prob, init_params, policy_forward
from .ppo import RolloutBuffer, ppo_update

EVAL_SEED_OFFSET = 7_777_777  # separates evaluation streams from training streams


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 196_608          # 3 iterations of 128 x 512
    n_envs: int = 128
    rollout_steps: int = 512
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 4
    minibatch_size: int = 1024
    learning_rate: float = 1e-3
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    eval_interval: int = 1              # iterations between evals/checkpoints
    eval_episodes: int = 64
    checkpoint_dir: str = "checkpoints"
    seed: int = 0
    hidden: tuple = (64, 64)
    init_log_std: float = -0.5
    task: SetpointTask = field(default_factory=SetpointTask)

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0 and 0.0 <= self.lam <= 1.0):
            raise InvalidInputError("require 0 < gamma <= 1 and 0 <= lam <= 1")
        if self.clip_eps <= 0.0 or self.learning_rate <= 0.0:
            raise InvalidInputError("require clip_eps > 0 and learning_rate > 0")
        if self.total_steps < 0 or self.n_envs < 1 or self.rollout_steps < 1:
            raise InvalidInputError("require total_steps >= 0, n_envs >= 1, rollout_steps >= 1")


def collect_rollout(params: MlpParams, env: SetpointVecEnv, T: int,
                    action_streams: list[np.random.Generator],
                    obs: np.ndarray) -> tuple[RolloutBuffer, np.ndarray, dict]:
    """Roll the stochastic policy for T steps; returns (buffer, next_obs, stats).

    Actions are drawn per environment from its own stream (mean + std * z)
    and stored pre-clamp so the stored log-probabilities are exact; the
    environment clamps to the box on execution.
    """
    n = env.n_envs
    obs_dim, act_dim = env.obs_dim, env.act_dim
    observations = np.empty((n, T, obs_dim))
    actions = np.empty((n, T, act_dim))
    rewards = np.empty((n, T))
    terminals = np.empty((n, T), dtype=bool)
    values = np.empty((n, T))
    log_probs = np.empty((n, T))

    ep_return = np.zeros(n)
    finished_returns = []
    for t in range(T):
        mean, log_std, value = policy_forward(params, obs)
        std = np.exp(log_std)
        z = np.stack([g.standard_normal(act_dim) for g in action_streams])
        a = mean + std * z
        observations[:, t] = obs
        actions[:, t] = a
        values[:, t] = value
        log_probs[:, t] = gaussian_log_prob(a, mean, log_std)
        obs, r, done = env.step(a)
        rewards[:, t] = r
        terminals[:, t] = done
        ep_return += r
        for i in np.nonzero(done)[0]:
            finished_returns.append(ep_return[i])
            ep_return[i] = 0.0

    _, _, bootstrap = policy_forward(params, obs)
    buffer = RolloutBuffer(observations=observations, actions=actions, rewards=rewards,
                           terminals=terminals, values=values, log_probs=log_probs,
                           bootstrap_value=bootstrap)
    stats = {"mean_return": float(np.mean(finished_returns)) if finished_returns
             else float(np.mean(ep_return))}
    return buffer, obs, stats


def evaluate_policy(params: MlpParams, task: SetpointTask, n_episodes: int,
                    seed: int) -> dict:
    """Deterministic (mean-action) evaluation over n_episodes fresh episodes."""
    env = SetpointVecEnv(task, n_envs=n_episodes, master_seed=seed + EVAL_SEED_OFFSET)
    obs = env.observations()
    final_dist = np.full(n_episodes, np.nan)
    returns = np.zeros(n_episodes)
    open_eps = np.ones(n_episodes, dtype=bool)
    for _ in range(task.episode_steps):
        mean, _, _ = policy_forward(params, obs)
        a = np.clip(mean, -1.0, 1.0)
        obs, r, done = env.step(a)
        returns += np.where(open_eps, r, 0.0)
        ended = done & open_eps
        if np.any(ended):
            final_dist[ended] = env.last_dist[ended]  # pre-reset terminal distance
            open_eps &= ~done
        if not np.any(open_eps):
            break
    still = np.isnan(final_dist)
    if np.any(still):
        final_dist[still] = np.linalg.norm(env.r[still], axis=1)
    return {"mean_final_distance": float(np.mean(final_dist)),
            "mean_return": float(np.mean(returns))}


def random_policy_baseline(task: SetpointTask, n_episodes: int, seed: int) -> dict:
    """Uniform-random actions over the box; the acceptance reference fixture."""
    env = SetpointVecEnv(task, n_envs=n_episodes, master_seed=seed + EVAL_SEED_OFFSET)
    streams = [rngmod.substream(seed + EVAL_SEED_OFFSET, i, rngmod.CONSUMER_POLICY)
               for i in range(n_episodes)]
    final_dist = np.full(n_episodes, np.nan)
    returns = np.zeros(n_episodes)
    open_eps = np.ones(n_episodes, dtype=bool)
    for _ in range(task.episode_steps):
        a = np.stack([g.uniform(-1.0, 1.0, task.act_dim) for g in streams])
        obs, r, done = env.step(a)
        returns += np.where(open_eps, r, 0.0)
        ended = done & open_eps
        if np.any(ended):
            final_dist[ended] = env.last_dist[ended]
            open_eps &= ~done
        if not np.any(open_eps):
            break
    still = np.isnan(final_dist)
    if np.any(still):
        final_dist[still] = np.linalg.norm(env.r[still], axis=1)
    return {"mean_final_distance": float(np.mean(final_dist)),
            "mean_return": float(np.mean(returns))}


def _checkpoint_meta(cfg: TrainConfig, iteration: int, env_steps: int) -> dict:
    return {
        "format": "freeflyer-policy",
        "iteration": iteration,
        "env_steps": env_steps,
        "obs_dim": cfg.task.obs_dim,
        "act_dim": cfg.task.act_dim,
        "obs_pos_scale": cfg.task.obs_pos_scale,
        "obs_vel_scale": cfg.task.obs_vel_scale,
        "task": {k: (list(v) if isinstance(v, tuple) else v)
                 for k, v in cfg.task.__dict__.items()},
        "train": {k: (list(v) if isinstance(v, tuple) else v)
                  for k, v in cfg.__dict__.items() if k != "task"},
    }


def train(cfg: TrainConfig) -> tuple[MlpParams, list[dict]]:
    """Alternate rollout collection and updates; returns (params, curve).

    Checkpoints land in cfg.checkpoint_dir as policy_iter{k:04d}.ffrl
    plus policy_final.ffrl; the curve rows carry step counts, returns,
    eval distance, and update metrics.
    """
    ckpt_dir = Path(cfg.checkpoint_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)

    param_rng = rngmod.substream(cfg.seed, 0, 101)
    params = init_params(cfg.task.obs_dim, cfg.task.act_dim, tuple(cfg.hidden),
                         rng=param_rng, init_log_std=cfg.init_log_std)
    optimizer = Adam(params, lr=cfg.learning_rate)
    update_rng = rngmod.substream(cfg.seed, 0, 102)

    env = make_rl_env(cfg.task, n_envs=cfg.n_envs, master_seed=cfg.seed)
    action_streams = [rngmod.substream(cfg.seed, i, rngmod.CONSUMER_POLICY)
                      for i in range(cfg.n_envs)]
    obs = env.observations()

    steps_per_iter = cfg.n_envs * cfg.rollout_steps
    n_iters = int(np.ceil(cfg.total_steps / steps_per_iter)) if cfg.total_steps > 0 else 0

    curve: list[dict] = []
    env_steps = 0
    save_checkpoint(ckpt_dir / "policy_iter0000.ffrl", params, _checkpoint_meta(cfg, 0, 0))
    for it in range(1, n_iters + 1):
        buffer, obs, roll_stats = collect_rollout(params, env, cfg.rollout_steps,
                                                  action_streams, obs)
        env_steps += steps_per_iter
        params, metrics = ppo_update(params, buffer, cfg, optimizer=optimizer, rng=update_rng)

        row = {"env_steps": env_steps, "mean_return": roll_stats["mean_return"],
               "mean_final_distance": float("nan"),
               "surrogate": metrics.get("surrogate"), "value_loss": metrics.get("value_loss"),
               "entropy": metrics.get("entropy"), "approx_kl": metrics.get("approx_kl"),
               "clip_fraction": metrics.get("clip_fraction")}
        if it % cfg.eval_interval == 0 or it == n_iters:
            eval_stats = evaluate_policy(params, cfg.task, cfg.eval_episodes, cfg.seed)
            row["mean_final_distance"] = eval_stats["mean_final_distance"]
            save_checkpoint(ckpt_dir / f"policy_iter{it:04d}.ffrl", params,
                            _checkpoint_meta(cfg, it, env_steps))
        curve.append(row)

    save_checkpoint(ckpt_dir / "policy_final.ffrl", params, _checkpoint_meta(cfg, n_iters, env_steps))
    return params, curve


def curve_to_csv(curve: list[dict]) -> str:
    cols = ["env_steps", "mean_return", "mean_final_distance", "surrogate",
            "value_loss", "entropy", "approx_kl", "clip_fraction"]
    lines = [",".join(cols)]
    for row in curve:
        lines.append(",".join(repr(float(row[c])) if row[c] is not None else "nan"
                              for c in cols))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Deployment
# ---------------------------------------------------------------------------

class RlController:
    """Frozen mean-action policy behind the controller interface.

    Observations are built exactly as in training: ((r_ref - r)/pos_scale,
    v/vel_scale) with the constants persisted in the checkpoint sidecar.
    Actions map to thruster commands through the opposing-pair mapping.
    """

    def __init__(self, params: MlpParams, meta: dict, system: ThrusterSystem):
        self.params = params
        self.pos_scale = float(meta.get("obs_pos_scale", 1.0))
        self.vel_scale = float(meta.get("obs_vel_scale", 1.0))
        self.u_max = float(meta.get("task", {}).get("u_max", 0.4))
        self.system = system

    def observe(self, state: State, setpoint: Setpoint) -> np.ndarray:
        return np.concatenate([(setpoint.r_ref - state.r_I) / self.pos_scale,
                               state.v_B / self.vel_scale])

    def act(self, obs: np.ndarray) -> np.ndarray:
        """Mean action, clamped to the box; batched input stays batched."""
        obs = np.asarray(obs, dtype=np.float64)
        mean, _, _ = policy_forward(self.params, obs)
        out = np.clip(mean, -1.0, 1.0)
        return out[0] if obs.ndim == 1 else out

    def compute(self, state: State, setpoint: Setpoint) -> ControlOutput:
        a = self.act(self.observe(state, setpoint))
        u = pair_actions_to_thrusts(a, self.u_max)
        u = np.minimum(u, self.system.u_max)
        w = self.system.mixer @ u
        return ControlOutput(u=u, wrench_desired=Wrench(w[0:3], w[3:6]))


def deploy(checkpoint_path, system: ThrusterSystem | None = None) -> RlController:
    """Load a checkpoint as a mean-action controller usable in run_episode."""
    from ..actuation import default_thruster_system

    params, meta = load_checkpoint(checkpoint_path)
    return RlController(params, meta, system or default_thruster_system())


def load_policy_controller(checkpoint_path, system: ThrusterSystem) -> RlController:
    return deploy(checkpoint_path, system)
