"""Exact Gaussian-process regression with an RBF kernel.

Serves two consumers: posterior-sampled thruster fault maps and the
residual-learning MPC variant.  Hyperparameters are user-set; there is
no marginal-likelihood optimization.

Kernel: k(x, x') = signal_var * exp(-1/2 sum_d (x_d - x'_d)^2 / l_d^2).
An optional prior mean function m(x) is supported (fit conditions on
y - m(X); predictions add m back), used by the default fault-map GP
whose prior mean is the identity so samples perturb around nominal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import GpFitError, GpSamplingError, InvalidInputError

SAMPLE_JITTER = 1e-8  # initial jitter for posterior-covariance Cholesky


def _rbf(signal_var: float, lengthscale: np.ndarray,
         A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Gram matrix between rows of A (n,d) and B (m,d)."""
    diff = A[:, None, :] - B[None, :, :]
    sq = np.sum((diff / lengthscale) ** 2, axis=2)
    return signal_var * np.exp(-0.5 * sq)


@dataclass(frozen=True)
class GpModel:
    """Fitted exact-GP posterior (immutable after fit)."""

    inputs: np.ndarray        # (n, d)
    targets: np.ndarray       # (n,)
    lengthscale: np.ndarray   # (d,)
    signal_var: float
    noise_var: float
    mean_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    chol: np.ndarray = field(init=False, repr=False, compare=False)
    alpha: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        X = np.asarray(self.inputs, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        y = np.asarray(self.targets, dtype=np.float64).ravel()
        ls = np.atleast_1d(np.asarray(self.lengthscale, dtype=np.float64))
        if X.shape[0] != y.shape[0] or X.shape[0] < 1:
            raise InvalidInputError("inputs and targets must have matching length n >= 1")
        if ls.shape != (X.shape[1],):
            raise InvalidInputError(f"lengthscale must have one entry per input dim ({X.shape[1]})")
        if np.any(ls <= 0.0) or self.signal_var <= 0.0 or self.noise_var < 0.0:
            raise InvalidInputError("require lengthscale > 0, signal_var > 0, noise_var >= 0")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "lengthscale", ls)
        resid = y - (self.mean_fn(X) if self.mean_fn is not None else 0.0)
        object.__setattr__(self, "targets", np.asarray(y))
        K = _rbf(self.signal_var, ls, X, X) + self.noise_var * np.eye(X.shape[0])
        try:
            L = np.linalg.cholesky(K)
        except np.linalg.LinAlgError as exc:
            raise GpFitError(
                "Gram matrix is not positive definite (duplicate inputs at zero "
                "noise?); add noise_var or jitter") from exc
        object.__setattr__(self, "chol", L)
        object.__setattr__(self, "alpha", np.linalg.solve(L.T, np.linalg.solve(L, np.asarray(resid).ravel())))

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def d(self) -> int:
        return self.inputs.shape[1]


def gp_fit(inputs, targets, lengthscale, signal_var: float, noise_var: float = 0.0,
           mean_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> GpModel:
    """Condition an RBF GP on (inputs, targets); caches the Cholesky factor."""
    X = np.asarray(inputs, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    return GpModel(inputs=X, targets=np.asarray(targets, dtype=np.float64),
                   lengthscale=np.asarray(lengthscale, dtype=np.float64).ravel(),
                   signal_var=float(signal_var), noise_var=float(noise_var), mean_fn=mean_fn)


def _query_matrix(model: GpModel, x) -> np.ndarray:
    Xq = np.asarray(x, dtype=np.float64)
    if Xq.ndim == 0:
        Xq = Xq.reshape(1, 1)
    elif Xq.ndim == 1:
        # a single d-dim point, or m points in 1-D
        Xq = Xq.reshape(-1, 1) if model.d == 1 else Xq.reshape(1, -1)
    if Xq.shape[1] != model.d:
        raise InvalidInputError(f"query dimension {Xq.shape[1]} does not match model dimension {model.d}")
    return Xq


def gp_predict(model: GpModel, x) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance at query points x.

    mean = k_*^T (K + s^2 I)^{-1} (y - m(X)) + m(x)
    var  = k_** - k_*^T (K + s^2 I)^{-1} k_*   (clamped at zero)
    """
    Xq = _query_matrix(model, x)
    Ks = _rbf(model.signal_var, model.lengthscale, model.inputs, Xq)  # (n, m)
    mean = Ks.T @ model.alpha
    if model.mean_fn is not None:
        mean = mean + model.mean_fn(Xq)
    V = np.linalg.solve(model.chol, Ks)
    var = model.signal_var - np.sum(V * V, axis=0)
    var = np.where(var < 0.0, 0.0, var)
    return mean, var


def gp_posterior_cov(model: GpModel, grid) -> tuple[np.ndarray, np.ndarray]:
    """Joint posterior mean and covariance over the grid."""
    Xq = _query_matrix(model, grid)
    Ks = _rbf(model.signal_var, model.lengthscale, model.inputs, Xq)
    Kss = _rbf(model.signal_var, model.lengthscale, Xq, Xq)
    mean = Ks.T @ model.alpha
    if model.mean_fn is not None:
        mean = mean + model.mean_fn(Xq)
    V = np.linalg.solve(model.chol, Ks)
    cov = Kss - V.T @ V
    return mean, cov


def gp_sample_path(model: GpModel, grid, rng_stream: np.random.Generator) -> np.ndarray:
    """One draw from the joint posterior over the grid (deterministic per seed).

    The posterior covariance Cholesky starts with 1e-8 jitter, escalated
    x10 up to 3 times before giving up.
    """
    mean, cov = gp_posterior_cov(model, grid)
    m = mean.shape[0]
    jitter = SAMPLE_JITTER
    L = None
    for _ in range(4):
        try:
            L = np.linalg.cholesky(cov + jitter * np.eye(m))
            break
        except np.linalg.LinAlgError:
            jitter *= 10.0
    if L is None:
        raise GpSamplingError(f"posterior covariance Cholesky failed (final jitter {jitter:.1e})")
    z = rng_stream.standard_normal(m)
    return mean + L @ z


def default_fault_map_gp(u_max: float) -> GpModel:
    """GP over u in [0, u_max] used for sampled fault maps.

    d = 1, lengthscale 0.3 u_max, signal_var (0.25 u_max)^2, zero noise,
    identity prior mean so sampled maps perturb around nominal.  A single
    anchor observation at the origin pins g(0) = 0.
    """
    return gp_fit(np.array([[0.0]]), np.array([0.0]), lengthscale=[0.3 * u_max],
                  signal_var=(0.25 * u_max) ** 2, noise_var=0.0,
                  mean_fn=lambda X: X[:, 0])
