"""Hand-rolled tanh MLPs with explicit reverse-mode gradients, plus Adam.

The actor mean and the critic are separate two-hidden-layer tanh
networks; the policy log-std is a state-independent vector clamped to
[-5, 2].  Gradients are accumulated by hand so the finite-difference
property test exercises the real code path (no external autodiff).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class MlpParams:
    """Actor mean, state-independent log-std, and critic parameters."""

    actor_w: list
    actor_b: list
    critic_w: list
    critic_b: list
    log_std: np.ndarray

    def __post_init__(self):
        for name in ("actor", "critic"):
            ws, bs = getattr(self, f"{name}_w"), getattr(self, f"{name}_b")
            if len(ws) != len(bs):
                raise InvalidInputError(f"{name} weight/bias counts differ")
            for i, (w, b) in enumerate(zip(ws, bs)):
                if w.shape[1] != b.shape[0]:
                    raise InvalidInputError(f"{name} layer {i} shapes inconsistent: {w.shape} vs {b.shape}")
                if i > 0 and ws[i - 1].shape[1] != w.shape[0]:
                    raise InvalidInputError(f"{name} layer {i} input mismatch")
                if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                    raise InvalidInputError(f"{name} layer {i} has non-finite parameters")
        if self.actor_w[-1].shape[1] != self.log_std.shape[0]:
            raise InvalidInputError("log_std length must equal the action dimension")
        self.log_std = np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX)

    @property
    def obs_dim(self) -> int:
        return self.actor_w[0].shape[0]

    @property
    def act_dim(self) -> int:
        return self.actor_w[-1].shape[1]

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        """Stable (name, array) listing used by Adam and checkpoints."""
        out = []
        for i, (w, b) in enumerate(zip(self.actor_w, self.actor_b)):
            out.append((f"actor_w{i}", w))
            out.append((f"actor_b{i}", b))
        for i, (w, b) in enumerate(zip(self.critic_w, self.critic_b)):
            out.append((f"critic_w{i}", w))
            out.append((f"critic_b{i}", b))
        out.append(("log_std", self.log_std))
        return out

    @staticmethod
    def from_arrays(named: dict) -> "MlpParams":
        n_actor = sum(1 for k in named if k.startswith("actor_w"))
        n_critic = sum(1 for k in named if k.startswith("critic_w"))
        return MlpParams(
            actor_w=[named[f"actor_w{i}"] for i in range(n_actor)],
            actor_b=[named[f"actor_b{i}"] for i in range(n_actor)],
            critic_w=[named[f"critic_w{i}"] for i in range(n_critic)],
            critic_b=[named[f"critic_b{i}"] for i in range(n_critic)],
            log_std=named["log_std"],
        )

    def copy(self) -> "MlpParams":
        return MlpParams(actor_w=[w.copy() for w in self.actor_w],
                         actor_b=[b.copy() for b in self.actor_b],
                         critic_w=[w.copy() for w in self.critic_w],
                         critic_b=[b.copy() for b in self.critic_b],
                         log_std=self.log_std.copy())

    def zeros_like(self) -> "MlpParams":
        return MlpParams(actor_w=[np.zeros_like(w) for w in self.actor_w],
                         actor_b=[np.zeros_like(b) for b in self.actor_b],
                         critic_w=[np.zeros_like(w) for w in self.critic_w],
                         critic_b=[np.zeros_like(b) for b in self.critic_b],
                         log_std=np.zeros_like(self.log_std))

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for _, a in self.arrays()])


def _orthogonal(rng: np.random.Generator, shape: tuple[int, int], gain: float) -> np.ndarray:
    a = rng.standard_normal(shape)
    q, r = np.linalg.qr(a if shape[0] >= shape[1] else a.T)
    q = q * np.sign(np.diag(r))
    if shape[0] < shape[1]:
        q = q.T
    return gain * q[: shape[0], : shape[1]]


def init_params(obs_dim: int, act_dim: int, hidden: tuple[int, ...] = (64, 64),
                rng: np.random.Generator | None = None,
                init_log_std: float = -0.5) -> MlpParams:
    """Orthogonal initialization; small final actor layer, unit critic head."""
    rng = rng or np.random.default_rng(0)

    def build(out_dim, final_gain):
        dims = (obs_dim, *hidden, out_dim)
        ws, bs = [], []
        for i in range(len(dims) - 1):
            gain = final_gain if i == len(dims) - 2 else np.sqrt(2.0)
            ws.append(_orthogonal(rng, (dims[i], dims[i + 1]), gain))
            bs.append(np.zeros(dims[i + 1]))
        return ws, bs

    actor_w, actor_b = build(act_dim, 0.01)
    critic_w, critic_b = build(1, 1.0)
    return MlpParams(actor_w=actor_w, actor_b=actor_b, critic_w=critic_w,
                     critic_b=critic_b, log_std=np.full(act_dim, init_log_std))


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------

def _mlp_forward(ws, bs, x: np.ndarray):
    """Returns (output, cache of pre-tanh activations and inputs)."""
    cache = [x]
    h = x
    for i in range(len(ws) - 1):
        h = np.tanh(h @ ws[i] + bs[i])
        cache.append(h)
    out = h @ ws[-1] + bs[-1]
    return out, cache


def _mlp_backward(ws, cache, d_out: np.ndarray):
    """Gradients of sum(d_out * out) w.r.t. weights, biases, and input."""
    grads_w = [None] * len(ws)
    grads_b = [None] * len(ws)
    delta = d_out
    for i in reversed(range(len(ws))):
        grads_w[i] = cache[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ ws[i].T) * (1.0 - cache[i] ** 2)
    return grads_w, grads_b


def policy_forward(params: MlpParams, obs: np.ndarray):
    """Deterministic forward pass: (action mean, log-std, value).

    Actions are sampled by the caller from the environment's stream and
    squashed to the action box by clamping.
    """
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    if obs.shape[1] != params.obs_dim:
        raise InvalidInputError(f"obs dim {obs.shape[1]} != {params.obs_dim}")
    mean, _ = _mlp_forward(params.actor_w, params.actor_b, obs)
    value, _ = _mlp_forward(params.critic_w, params.critic_b, obs)
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(value))):
        raise InvalidInputError("policy forward produced non-finite outputs")
    return mean, params.log_std.copy(), value[:, 0]


def forward_with_cache(params: MlpParams, obs: np.ndarray):
    mean, actor_cache = _mlp_forward(params.actor_w, params.actor_b, obs)
    value, critic_cache = _mlp_forward(params.critic_w, params.critic_b, obs)
    return mean, value[:, 0], actor_cache, critic_cache


def backward(params: MlpParams, actor_cache, critic_cache,
             d_mean: np.ndarray, d_value: np.ndarray, d_log_std: np.ndarray) -> MlpParams:
    """Accumulate gradients for upstream sensitivities (reverse mode)."""
    g = params.zeros_like()
    gw, gb = _mlp_backward(params.actor_w, actor_cache, d_mean)
    g.actor_w, g.actor_b = gw, gb
    gw, gb = _mlp_backward(params.critic_w, critic_cache, d_value[:, None])
    g.critic_w, g.critic_b = gw, gb
    g.log_std = d_log_std
    return g


def gaussian_log_prob(actions: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    """Diagonal-Gaussian log density, summed over action dimensions."""
    std = np.exp(log_std)
    z = (actions - mean) / std
    return -0.5 * np.sum(z * z, axis=1) - np.sum(log_std) - 0.5 * actions.shape[1] * LOG_2PI


def gaussian_entropy(log_std: np.ndarray) -> float:
    """Entropy of the diagonal Gaussian (state-independent)."""
    return float(np.sum(log_std) + 0.5 * log_std.shape[0] * (1.0 + LOG_2PI))


def global_grad_norm(grads: MlpParams) -> float:
    return float(np.sqrt(sum(float(np.sum(a * a)) for _, a in grads.arrays())))


def clip_grad_norm(grads: MlpParams, max_norm: float) -> MlpParams:
    norm = global_grad_norm(grads)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for _, a in grads.arrays():
            a *= scale
    return grads


class Adam:
    """Adam over the named parameter arrays of MlpParams."""

    def __init__(self, params: MlpParams, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(a) for name, a in params.arrays()}
        self.v = {name: np.zeros_like(a) for name, a in params.arrays()}

    def step(self, params: MlpParams, grads: MlpParams) -> None:
        """In-place Adam update; the policy log-std is re-clamped after."""
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        grad_map = dict(grads.arrays())
        for name, a in params.arrays():
            g = grad_map[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            a -= self.lr * (self.m[name] / b1c) / (np.sqrt(self.v[name] / b2c) + self.eps)
        np.clip(params.log_std, LOG_STD_MIN, LOG_STD_MAX, out=params.log_std)
