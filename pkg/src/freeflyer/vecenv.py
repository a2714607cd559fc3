"""Batched multi-environment stepping, domain randomization, benchmarks.

The general vectorized environment wraps independent single
environments; `step` loops over them in index order, so batched results
are bit-identical to sequential per-env stepping by construction, and
each environment's randomness is isolated in its own counter-based
stream keyed by (master_seed, env_index).  The benchmark harness may
partition environments across worker processes; each worker owns its
slice exclusively and full rollouts are gathered by env index, which
preserves trajectories regardless of worker count (timings, of course,
are wall-clock measurements).

A lightweight translational setpoint task (attitude frozen) is provided
for RL training; its dynamics are the exact constant-force update
r' = r + v dt + a dt^2/2, v' = v + a dt, matching the full rigid-body
RK4 restricted to the translation block.
"""

from __future__ import annotations

import multiprocessing as mp
import os
import time
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .errors import ConfigError, InvalidInputError
from .rigid_body import State, quat_exp, quat_multiply
from .scenario import ScenarioConfig, load_config, serialize_config
from .simenv import SimEnvironment


# ---------------------------------------------------------------------------
# General vectorized environment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VecEnvConfig:
    """Batch size, base scenario, per-env randomization, episode length."""

    n_envs: int
    base: dict | ScenarioConfig
    episode_steps: int = 512
    master_seed: int = 0
    pos_low: tuple = (0.0, 0.0, 0.0)
    pos_high: tuple = (0.0, 0.0, 0.0)
    vel_low: tuple = (0.0, 0.0, 0.0)
    vel_high: tuple = (0.0, 0.0, 0.0)
    att_max_angle: float = 0.0

    def __post_init__(self):
        if self.n_envs < 1 or self.episode_steps < 1:
            raise InvalidInputError("require n_envs >= 1 and episode_steps >= 1")
        for low, high in ((self.pos_low, self.pos_high), (self.vel_low, self.vel_high)):
            if np.any(np.asarray(low) > np.asarray(high)):
                raise InvalidInputError("randomization ranges must satisfy low <= high")


@dataclass(frozen=True)
class RolloutBatch:
    """Per-env trajectories over T steps."""

    observations: np.ndarray   # (n_envs, T, obs_dim)
    actions: np.ndarray        # (n_envs, T, act_dim)
    rewards: np.ndarray        # (n_envs, T)
    terminals: np.ndarray      # (n_envs, T) bool
    final_observations: np.ndarray  # (n_envs, obs_dim)

    def __post_init__(self):
        n, T = self.rewards.shape
        if self.observations.shape[:2] != (n, T) or self.actions.shape[:2] != (n, T):
            raise InvalidInputError("rollout field dimensions are inconsistent")
        if not np.all(np.isfinite(self.rewards)):
            raise InvalidInputError("rewards must be finite")


class VecEnv:
    """N independent scenario environments stepped in lockstep."""

    def __init__(self, cfg: VecEnvConfig):
        self.cfg = cfg
        base = load_config(cfg.base)
        self.base = base
        self.envs = [SimEnvironment(base, seed_override=cfg.master_seed, env_index=i,
                                    log_enabled=False)
                     for i in range(cfg.n_envs)]
        self.n_u = self.envs[0].system.n_u
        self.steps_in_episode = np.zeros(cfg.n_envs, dtype=int)
        self.reset()

    @property
    def n_envs(self) -> int:
        return self.cfg.n_envs

    @property
    def dt(self) -> float:
        return self.base.dt

    def _draw_initial_state(self, env: SimEnvironment) -> State:
        g = env._streams["init"]
        c = self.cfg
        r = g.uniform(np.asarray(c.pos_low, dtype=float), np.asarray(c.pos_high, dtype=float))
        v = g.uniform(np.asarray(c.vel_low, dtype=float), np.asarray(c.vel_high, dtype=float))
        q = np.array([1.0, 0.0, 0.0, 0.0])
        if c.att_max_angle > 0.0:
            angle = g.uniform(0.0, c.att_max_angle)
            axis = g.standard_normal(3)
            axis /= np.linalg.norm(axis)
            q = quat_multiply(q, quat_exp(angle * axis))
        return State(r, q, v, np.zeros(3))

    def _reset_env(self, i: int) -> np.ndarray:
        env = self.envs[i]
        env.reset()
        env.state = self._draw_initial_state(env)
        self.steps_in_episode[i] = 0
        return env.state.as_vector()

    def reset(self) -> np.ndarray:
        """Reset every environment; returns the (n_envs, 13) state batch."""
        return np.stack([self._reset_env(i) for i in range(self.n_envs)])

    def states(self) -> np.ndarray:
        return np.stack([env.state.as_vector() for env in self.envs])

    def step(self, actions: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Step each env with its action row; auto-reset on terminal.

        Returns (next_states, observations, rewards, terminals); the
        observation is the next state (post-reset for terminated envs).
        """
        actions = np.asarray(actions, dtype=float)
        if actions.shape != (self.n_envs, self.n_u):
            raise InvalidInputError(f"actions must have shape ({self.n_envs}, {self.n_u})")
        states = np.empty((self.n_envs, 13))
        rewards = np.zeros(self.n_envs)
        terminals = np.zeros(self.n_envs, dtype=bool)
        for i, env in enumerate(self.envs):
            try:
                env.step_actuated(actions[i])
            except Exception as exc:
                raise ConfigError(f"environment {i} failed to step: {exc}") from exc
            env.step_index += 1
            env.t = env.step_index * env.dt
            self.steps_in_episode[i] += 1
            if self.steps_in_episode[i] >= self.cfg.episode_steps:
                terminals[i] = True
                states[i] = self._reset_env(i)
            else:
                states[i] = env.state.as_vector()
        return states, states.copy(), rewards, terminals


def vec_reset(cfg: VecEnvConfig) -> tuple[np.ndarray, list[np.random.Generator]]:
    """Build the batch and return initial states plus per-env init streams."""
    env = VecEnv(cfg)
    return env.states(), [e._streams["init"] for e in env.envs]


def vec_step(env: VecEnv, actions: np.ndarray):
    """Functional alias for VecEnv.step."""
    return env.step(actions)


# ---------------------------------------------------------------------------
# Throughput benchmark
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BenchReport:
    """One benchmark row; derived fields satisfy exact identities."""

    n_envs: int
    env_steps_per_s: float
    sim_s_per_s: float
    speedup: float
    parallel_efficiency: float

    @staticmethod
    def build(n_envs: int, env_steps_per_s: float, dt: float,
              ref_steps_per_s: float, n_ref: int) -> "BenchReport":
        speedup = env_steps_per_s / ref_steps_per_s
        return BenchReport(
            n_envs=n_envs,
            env_steps_per_s=env_steps_per_s,
            sim_s_per_s=env_steps_per_s * dt,
            speedup=speedup,
            parallel_efficiency=speedup / (n_envs / n_ref),
        )


def benchmark_base_config(dt: float = 0.02) -> dict:
    """Plain free-flight scenario used by the throughput benchmark."""
    return {
        "schema": 1,
        "dt": dt,
        "duration": 1.0,
        "controller": {"type": "pd"},
        "plan": {"type": "hold", "r": [0.0, 0.0, 0.0], "q": [1.0, 0.0, 0.0, 0.0]},
        "initial_state": {"r": [0.0, 0.0, 0.0], "q": [1.0, 0.0, 0.0, 0.0],
                          "v": [0.0, 0.0, 0.0], "w": [0.0, 0.0, 0.0]},
        "log": {"enabled": False},
    }


def _rollout_random_policy(config_json: str, master_seed: int, env_indices, T: int) -> int:
    """Roll env_indices for T steps under seeded uniform random thrusts."""
    base = load_config(config_json)
    count = 0
    for i in env_indices:
        env = SimEnvironment(base, seed_override=master_seed, env_index=i, log_enabled=False)
        policy = rngmod.substream(master_seed, i, rngmod.CONSUMER_POLICY)
        u_max = env.system.u_max
        for _ in range(T):
            u = policy.uniform(0.0, u_max)
            env.step_actuated(u)
            env.step_index += 1
            env.t = env.step_index * env.dt
        count += T
    return count


def _bench_worker(args) -> int:
    return _rollout_random_policy(*args)


def run_benchmark(n_envs_list, T: int = 512, dt: float = 0.02, warmup_episodes: int = 1,
                  master_seed: int = 0, base_config: dict | None = None,
                  parallel: bool = True, workers: int | None = None) -> list[BenchReport]:
    """Timed random-policy rollouts; first entry is the reference batch.

    Rollouts run headless and unlogged.  Warmup rollouts are excluded
    from timing.  With parallel execution the env indices are
    partitioned contiguously across worker processes; trajectories are
    independent of the partitioning.
    """
    n_envs_list = list(n_envs_list)
    if not n_envs_list or any(n < 1 for n in n_envs_list):
        raise InvalidInputError("n_envs_list must be non-empty positive integers")
    base = benchmark_base_config(dt) if base_config is None else dict(base_config, dt=dt)
    config_json = serialize_config(load_config(base))

    reports = []
    ref_steps_per_s = None
    n_ref = n_envs_list[0]
    max_workers = workers or os.cpu_count() or 1
    for n_envs in n_envs_list:
        n_workers = max(1, min(max_workers, n_envs)) if parallel else 1
        chunks = [range(n_envs)[j::n_workers] for j in range(n_workers)]
        chunks = [list(c) for c in chunks if len(c)]
        args = [(config_json, master_seed, chunk, T) for chunk in chunks]

        if len(args) == 1:
            for _ in range(warmup_episodes):
                _bench_worker(args[0])
            t0 = time.perf_counter()
            _bench_worker(args[0])
            elapsed = time.perf_counter() - t0
        else:
            ctx = mp.get_context("fork")
            with ctx.Pool(processes=len(args)) as pool:
                for _ in range(warmup_episodes):
                    pool.map(_bench_worker, args)
                t0 = time.perf_counter()
                pool.map(_bench_worker, args)
                elapsed = time.perf_counter() - t0

        steps_per_s = (n_envs * T) / elapsed
        if ref_steps_per_s is None:
            ref_steps_per_s = steps_per_s
        reports.append(BenchReport.build(n_envs, steps_per_s, dt, ref_steps_per_s, n_ref))
    return reports


def bench_reports_to_csv(reports: list[BenchReport]) -> str:
    lines = ["n_envs,env_steps_per_s,sim_s_per_s,speedup,parallel_eff"]
    for r in reports:
        lines.append(f"{r.n_envs},{r.env_steps_per_s!r},{r.sim_s_per_s!r},"
                     f"{r.speedup!r},{r.parallel_efficiency!r}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# 3-DoF translational RL task
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SetpointTask:
    """Translational setpoint regulation with the attitude frozen."""

    mass: float = 10.0
    u_max: float = 0.4
    dt: float = 0.02
    episode_steps: int = 512
    init_pos_halfwidth: float = 1.0
    init_vel_halfwidth: float = 0.0
    obs_pos_scale: float = 1.0
    obs_vel_scale: float = 1.0
    pos_bound: float = 5.0
    goal_pos_tol: float = 0.05
    goal_vel_tol: float = 0.05
    effort_coef: float = 0.1
    goal_bonus: float = 10.0

    @property
    def obs_dim(self) -> int:
        return 6

    @property
    def act_dim(self) -> int:
        return 6


def pair_actions_to_thrusts(actions: np.ndarray, u_max: float) -> np.ndarray:
    """Map [-1, 1] opposing-pair commands to 12 thruster commands.

    Pair j couples thrusters (j_pos, j_neg) of the default cube layout:
    pairs (0,2), (1,3) act on x, (4,6), (5,7) on y, (8,10), (9,11) on z.
    A positive command fires the positive-direction thruster.
    """
    a = np.clip(np.asarray(actions, dtype=float), -1.0, 1.0)
    single = a.ndim == 1
    a = np.atleast_2d(a)
    u = np.zeros((a.shape[0], 12))
    pairs = ((0, 2), (1, 3), (4, 6), (5, 7), (8, 10), (9, 11))
    for j, (p, n_) in enumerate(pairs):
        u[:, p] = np.maximum(a[:, j], 0.0) * u_max
        u[:, n_] = np.maximum(-a[:, j], 0.0) * u_max
    return u[0] if single else u


class SetpointVecEnv:
    """Vectorized 3-DoF setpoint task (double-integrator dynamics).

    Observations are (r_ref - r, v) scaled by the configured constants;
    the setpoint is the origin.  Reward is
    -||e_p|| - effort_coef ||a||_1 + bonus [||e_p|| < tol and ||v|| < tol].
    Episodes terminate on bound exit (||e_p|| > pos_bound) or after
    episode_steps; terminated environments auto-reset from their own
    stream.  All per-step updates are elementwise, so the batched step
    is bit-identical to stepping each environment alone.
    """

    def __init__(self, task: SetpointTask, n_envs: int, master_seed: int = 0):
        if n_envs < 1:
            raise InvalidInputError("n_envs must be >= 1")
        self.task = task
        self.n_envs = n_envs
        self.master_seed = master_seed
        self._init_streams = [rngmod.substream(master_seed, i, rngmod.CONSUMER_INIT)
                              for i in range(n_envs)]
        self.r = np.zeros((n_envs, 3))
        self.v = np.zeros((n_envs, 3))
        self.steps = np.zeros(n_envs, dtype=int)
        self.reset()

    @property
    def obs_dim(self) -> int:
        return self.task.obs_dim

    @property
    def act_dim(self) -> int:
        return self.task.act_dim

    def _reset_env(self, i: int) -> None:
        g = self._init_streams[i]
        t = self.task
        self.r[i] = g.uniform(-t.init_pos_halfwidth, t.init_pos_halfwidth, 3)
        self.v[i] = g.uniform(-t.init_vel_halfwidth, t.init_vel_halfwidth, 3) \
            if t.init_vel_halfwidth > 0.0 else 0.0
        self.steps[i] = 0

    def reset(self) -> np.ndarray:
        for i in range(self.n_envs):
            self._reset_env(i)
        return self.observations()

    def observations(self) -> np.ndarray:
        t = self.task
        return np.concatenate([(-self.r) / t.obs_pos_scale, self.v / t.obs_vel_scale], axis=1)

    def step(self, actions: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Advance all envs one dt; returns (obs, rewards, terminals)."""
        t = self.task
        a = np.clip(np.asarray(actions, dtype=float), -1.0, 1.0)
        if a.shape != (self.n_envs, 6):
            raise InvalidInputError(f"actions must have shape ({self.n_envs}, 6)")
        force = t.u_max * np.stack([a[:, 0] + a[:, 1], a[:, 2] + a[:, 3], a[:, 4] + a[:, 5]], axis=1)
        acc = force / t.mass
        self.r = self.r + t.dt * self.v + (0.5 * t.dt * t.dt) * acc
        self.v = self.v + t.dt * acc
        self.steps += 1

        dist = np.linalg.norm(self.r, axis=1)
        speed = np.linalg.norm(self.v, axis=1)
        effort = np.sum(np.abs(a), axis=1)
        bonus = np.where((dist < t.goal_pos_tol) & (speed < t.goal_vel_tol), t.goal_bonus, 0.0)
        rewards = -dist - t.effort_coef * effort + bonus

        terminals = (dist > t.pos_bound) | (self.steps >= t.episode_steps)
        # pre-reset metrics, so callers can read terminal-step distances
        self.last_dist = dist
        self.last_speed = speed
        for i in np.nonzero(terminals)[0]:
            self._reset_env(i)
        return self.observations(), rewards, terminals


def make_rl_env(task: SetpointTask | None = None, n_envs: int = 128,
                master_seed: int = 0) -> SetpointVecEnv:
    """Vectorized 3-DoF setpoint-tracking environment for RL training."""
    return SetpointVecEnv(task or SetpointTask(), n_envs, master_seed)
