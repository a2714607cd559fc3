"""Pose-tracking controllers: PD, finite-horizon MPC, and a GP-residual MPC.

The MPC solves a receding-horizon tracking problem over per-thruster
commands.  Each solve runs sequential linearization (SQP-style):

  1. roll the prediction model out over the horizon (one RK4 step per
     control period, thruster mixing included),
  2. build stage errors in minimal coordinates
     e = [r - r_ref, log(q_ref^-1 q), v - v_ref, w - w_ref],
  3. linearize the discrete dynamics by central finite differences in a
     12-dim tangent parameterization (position/velocity additive, attitude
     right-perturbed by a rotation vector),
  4. condense into a box-constrained QP over the command perturbation and
     solve it by accelerated projected gradient,
  5. line-search the step on the true nonlinear cost (accept only on
     decrease) and repeat until the cost improvement falls below tol.

Only the first command of the optimal sequence is applied; the shifted
sequence warm-starts the next solve.  When per-axis residual models are
attached, their posterior means are added to the predicted body-frame
linear accelerations (additive-term form), with the commanded specific
force as the regression input.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .actuation import ThrusterSystem, allocate
from .errors import InvalidInputError, QpSolverError
from .gp import GpModel, gp_predict
from .rigid_body import (
    BodyParams,
    State,
    Wrench,
    quat_conjugate,
    quat_log,
    quat_multiply,
    step_batch,
)

FD_STEP = 1e-6  # central-difference step for the MPC Jacobians


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Setpoint:
    """Full SE(3) pose setpoint with feedforward velocities."""

    r_ref: np.ndarray
    q_ref: np.ndarray
    v_ref: np.ndarray
    w_ref: np.ndarray

    def __post_init__(self):
        for name, size in (("r_ref", 3), ("q_ref", 4), ("v_ref", 3), ("w_ref", 3)):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (size,):
                raise InvalidInputError(f"Setpoint.{name} must have shape ({size},)")
            object.__setattr__(self, name, arr)
        if abs(np.linalg.norm(self.q_ref) - 1.0) > 1e-9:
            raise InvalidInputError("Setpoint quaternion is not unit norm")

    @staticmethod
    def hold(r, q) -> "Setpoint":
        return Setpoint(np.asarray(r, dtype=float), np.asarray(q, dtype=float), np.zeros(3), np.zeros(3))


@dataclass(frozen=True)
class PdGains:
    kp_pos: float = 0.8
    kd_vel: float = 4.0
    kp_att: float = 0.4
    kd_rate: float = 1.2

    def __post_init__(self):
        if min(self.kp_pos, self.kd_vel, self.kp_att, self.kd_rate) <= 0.0:
            raise InvalidInputError("PD gains must be positive")


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 20
    dt: float = 0.1
    q_pos: float = 10.0
    q_att: float = 5.0
    q_vel: float = 1.0
    q_rate: float = 1.0
    r_u: float = 0.1
    max_iters: int = 5       # SQP rounds per solve
    tol: float = 1e-4        # relative cost-decrease stopping threshold
    qp_iters: int = 150      # projected-gradient iterations per QP

    def __post_init__(self):
        if self.horizon < 1 or self.dt <= 0.0:
            raise InvalidInputError("require horizon >= 1 and dt > 0")
        if min(self.q_pos, self.q_att, self.q_vel, self.q_rate) < 0.0 or self.r_u <= 0.0:
            raise InvalidInputError("require stage weights >= 0 and r_u > 0")


@dataclass(frozen=True)
class ControlOutput:
    u: np.ndarray
    wrench_desired: Wrench
    iterations: int = 0
    cost: float = 0.0
    solve_time: float = 0.0


# ---------------------------------------------------------------------------
# Attitude error and PD law
# ---------------------------------------------------------------------------

def attitude_error(q: np.ndarray, q_ref: np.ndarray) -> np.ndarray:
    """Rotation-vector error log(q_ref^-1 * q), shortest way (angle <= pi)."""
    return quat_log(quat_multiply(quat_conjugate(np.asarray(q_ref, dtype=float)),
                                  np.asarray(q, dtype=float)))


def pd_control(state: State, sp: Setpoint, gains: PdGains, system: ThrusterSystem) -> ControlOutput:
    """Proportional-derivative SE(3) tracking, allocated to thrusters.

    force_B  = R^T (kp_pos (r_ref - r)) + kd_vel (v_ref - v_B)
    torque_B = -kp_att att_err(q, q_ref) - kd_rate (w_B - w_ref)
    """
    R = state.rotation()
    force_B = R.T @ (gains.kp_pos * (sp.r_ref - state.r_I)) + gains.kd_vel * (sp.v_ref - state.v_B)
    torque_B = -gains.kp_att * attitude_error(state.q_IB, sp.q_ref) - gains.kd_rate * (state.w_B - sp.w_ref)
    wrench = Wrench(force_B, torque_B)
    u = allocate(system, wrench)
    return ControlOutput(u=u, wrench_desired=wrench)


def control_effort(u_log, dt: float) -> float:
    """Time-averaged L1 thrust integral: (1/T) sum_t ||u_t||_1 dt."""
    u_log = np.asarray(u_log, dtype=np.float64)
    if u_log.size == 0:
        return 0.0
    n = u_log.shape[0]
    return float(np.sum(np.abs(u_log)) * dt / (n * dt))


# ---------------------------------------------------------------------------
# Minimal-coordinate helpers for the MPC linearization
# ---------------------------------------------------------------------------

def _boxplus_batch(X: np.ndarray, D: np.ndarray) -> np.ndarray:
    """Perturb states X (N,13) by tangent vectors D (N,12); attitude on the right."""
    out = X.copy()
    out[:, 0:3] += D[:, 0:3]
    out[:, 7:10] += D[:, 6:9]
    out[:, 10:13] += D[:, 9:12]
    phi = D[:, 3:6]
    angle = np.linalg.norm(phi, axis=1)
    half = 0.5 * angle
    small = angle < 1e-12
    k = np.where(small, 0.5, np.divide(np.sin(half), np.where(small, 1.0, angle)))
    dq = np.column_stack([np.cos(half), k[:, None] * phi])
    q = X[:, 3:7]
    w1, x1, y1, z1 = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    w2, x2, y2, z2 = dq[:, 0], dq[:, 1], dq[:, 2], dq[:, 3]
    out[:, 3] = w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2
    out[:, 4] = w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2
    out[:, 5] = w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2
    out[:, 6] = w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2
    return out


def _quat_log_batch(Q: np.ndarray) -> np.ndarray:
    """Rotation vectors for unit quaternions Q (N,4), shortest way."""
    Q = np.where(Q[:, 0:1] < 0.0, -Q, Q)
    vec = Q[:, 1:]
    s = np.linalg.norm(vec, axis=1)
    w = np.minimum(Q[:, 0], 1.0)
    angle = 2.0 * np.arctan2(s, w)
    k = np.where(s < 1e-12, 2.0, angle / np.where(s < 1e-12, 1.0, s))
    return k[:, None] * vec


def _boxminus_batch(X: np.ndarray, X0: np.ndarray) -> np.ndarray:
    """Tangent difference X [-] X0 (both (N,13)) -> (N,12)."""
    q0 = X0[:, 3:7]
    q = X[:, 3:7]
    w1, x1, y1, z1 = q0[:, 0], -q0[:, 1], -q0[:, 2], -q0[:, 3]
    w2, x2, y2, z2 = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    rel = np.column_stack([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])
    return np.concatenate([X[:, 0:3] - X0[:, 0:3], _quat_log_batch(rel),
                           X[:, 7:10] - X0[:, 7:10], X[:, 10:13] - X0[:, 10:13]], axis=1)


def _stage_errors(X: np.ndarray, refs: np.ndarray) -> np.ndarray:
    """Errors of predicted states X (H,13) against reference states (H,13)."""
    return _boxminus_batch(X, refs)


def _setpoints_to_matrix(refs: list[Setpoint]) -> np.ndarray:
    return np.array([np.concatenate([sp.r_ref, sp.q_ref, sp.v_ref, sp.w_ref]) for sp in refs])


# ---------------------------------------------------------------------------
# MPC
# ---------------------------------------------------------------------------

class MpcController:
    """Receding-horizon tracker; owns its warm-start command sequence.

    Instances are independent and safe to run in parallel across
    environments.  `residual` may hold up to three 1-D GP models adding
    posterior-mean corrections to the x/y/z body linear accelerations.
    """

    def __init__(self, cfg: MpcConfig, body: BodyParams, system: ThrusterSystem,
                 residual: list[GpModel | None] | None = None):
        self.cfg = cfg
        self.body = body
        self.system = system
        self.residual = residual
        self._U = np.zeros((cfg.horizon, system.n_u))
        self._q_diag = np.concatenate([
            np.full(3, cfg.q_pos), np.full(3, cfg.q_att),
            np.full(3, cfg.q_vel), np.full(3, cfg.q_rate)])
        self.last_cost_history: list[float] = []

    def reset(self) -> None:
        self._U[:] = 0.0
        self.last_cost_history = []

    # -- prediction model ---------------------------------------------------

    def _residual_accel(self, forces: np.ndarray) -> np.ndarray:
        """Posterior-mean acceleration correction per row of forces (N,3)."""
        acc = np.zeros_like(forces)
        spec = forces / self.body.mass
        for axis, model in enumerate(self.residual):
            if model is None:
                continue
            mean, _ = gp_predict(model, spec[:, axis].reshape(-1, 1))
            acc[:, axis] = mean
        return acc

    def _model_step_batch(self, X: np.ndarray, U: np.ndarray) -> np.ndarray:
        """One control-period RK4 step for rows of (X, U)."""
        W = U @ self.system.mixer.T  # (N, 6)
        F, T = W[:, 0:3], W[:, 3:6]
        if self.residual is not None:
            F = F + self.body.mass * self._residual_accel(F)
        return step_batch(X, F, T, self.body.mass, self.body.inertia,
                          self.body.inertia_inv, self.cfg.dt)

    def predict_trajectory(self, x0: np.ndarray, U: np.ndarray) -> np.ndarray:
        """Open-loop rollout of the prediction model: returns (H+1, 13)."""
        from .rigid_body import _step_vec

        H = U.shape[0]
        W = U @ self.system.mixer.T
        F, T = W[:, 0:3], W[:, 3:6]
        if self.residual is not None:
            F = F + self.body.mass * self._residual_accel(F)
        X = np.empty((H + 1, 13))
        X[0] = x0
        body = self.body
        for k in range(H):
            X[k + 1] = _step_vec(X[k], F[k], T[k], body.mass, body.inertia,
                                 body.inertia_inv, self.cfg.dt)
        return X

    def _cost(self, X: np.ndarray, refs: np.ndarray, U: np.ndarray) -> float:
        E = _stage_errors(X[1:], refs)
        return float(np.sum(E * E * self._q_diag) + self.cfg.r_u * np.sum(U * U))

    # -- linearization ------------------------------------------------------

    def _linearize(self, X: np.ndarray, U: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Central-difference stage Jacobians A (H,12,12), B (H,12,n_u)."""
        H, n_u = U.shape
        n_dir = 12 + n_u
        eps = FD_STEP
        # rows: for each stage, +/- perturbations of 12 state dirs then n_u controls
        Xp = np.repeat(X[:H], 2 * n_dir, axis=0)
        Up = np.repeat(U, 2 * n_dir, axis=0)
        D = np.zeros((H * 2 * n_dir, 12))
        idx = np.arange(H * 2 * n_dir)
        local = idx % (2 * n_dir)
        direction = local // 2          # 0..n_dir-1
        sign = np.where(local % 2 == 0, 1.0, -1.0)
        state_dirs = direction < 12
        D[idx[state_dirs], direction[state_dirs]] = sign[state_dirs] * eps
        ctrl_rows = idx[~state_dirs]
        Up[ctrl_rows, direction[~state_dirs] - 12] += sign[~state_dirs] * eps
        Xp = _boxplus_batch(Xp, D)

        X_next = self._model_step_batch(Xp, Up)
        base = np.repeat(X[1:H + 1], 2 * n_dir, axis=0)
        diffs = _boxminus_batch(X_next, base)          # (H*2*n_dir, 12)
        diffs = diffs.reshape(H, n_dir, 2, 12)
        J = (diffs[:, :, 0, :] - diffs[:, :, 1, :]) / (2.0 * eps)  # (H, n_dir, 12)
        A = np.transpose(J[:, :12, :], (0, 2, 1))
        Bm = np.transpose(J[:, 12:, :], (0, 2, 1))
        return A, Bm

    # -- QP -----------------------------------------------------------------

    def _solve_qp(self, Hgn: np.ndarray, g: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Accelerated projected gradient on 1/2 d'Hd + g'd over the box."""
        n = g.shape[0]
        # row-sum norm upper-bounds the spectral norm for symmetric Hgn,
        # so the fixed step below is always stable
        lam = float(np.max(np.sum(np.abs(Hgn), axis=1)))
        if not np.isfinite(lam) or lam <= 0.0:
            raise QpSolverError(f"QP curvature estimate invalid: {lam}")
        alpha = 1.0 / lam
        d = np.zeros(n)
        y = d
        t_acc = 1.0
        for _ in range(self.cfg.qp_iters):
            grad = Hgn @ y + g
            d_next = np.clip(y - alpha * grad, lo, hi)
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_acc * t_acc))
            y = d_next + ((t_acc - 1.0) / t_next) * (d_next - d)
            done = np.linalg.norm(d_next - d) <= 1e-10
            d, t_acc = d_next, t_next
            if done:
                break
        if not np.all(np.isfinite(d)):
            raise QpSolverError("QP iterate diverged")
        return d

    # -- main solve ---------------------------------------------------------

    def control(self, state: State, reference: list[Setpoint], t: float = 0.0) -> ControlOutput:
        """Solve the receding-horizon problem and return the first command."""
        t_start = time.perf_counter()
        cfg = self.cfg
        H, n_u = cfg.horizon, self.system.n_u
        refs = list(reference)
        if not refs:
            raise InvalidInputError("MPC requires at least one reference setpoint")
        while len(refs) < H:
            refs.append(refs[-1])
        refs_m = _setpoints_to_matrix(refs[:H])

        x0 = state.as_vector()
        U = np.clip(self._U, 0.0, self.system.u_max)
        X = self.predict_trajectory(x0, U)
        cost = self._cost(X, refs_m, U)
        if not np.isfinite(cost):
            raise QpSolverError(f"MPC cost non-finite at start: {cost}")
        self.last_cost_history = [cost]

        q_diag = self._q_diag
        iters_done = 0
        for _ in range(cfg.max_iters):
            iters_done += 1
            A, Bm = self._linearize(X, U)
            E = _stage_errors(X[1:], refs_m)          # (H, 12)
            # sensitivities of stage errors to the flat command perturbation
            S = np.zeros((H, 12, H * n_u))
            S_prev = np.zeros((12, H * n_u))
            for k in range(H):
                S_k = A[k] @ S_prev
                S_k[:, k * n_u:(k + 1) * n_u] += Bm[k]
                S[k] = S_k
                S_prev = S_k
            sqrt_q = np.sqrt(q_diag)
            M = (S * sqrt_q[None, :, None]).reshape(H * 12, H * n_u)
            Hgn = 2.0 * (M.T @ M) + 2.0 * cfg.r_u * np.eye(H * n_u)
            g = 2.0 * np.einsum("kij,ki->j", S, E * q_diag) + 2.0 * cfg.r_u * U.ravel()

            lo = -U.ravel()
            hi = (np.tile(self.system.u_max, H) - U.ravel())
            d = self._solve_qp(Hgn, g, lo, hi)

            improved = False
            sigma = 1.0
            for _ in range(6):
                U_cand = np.clip(U + sigma * d.reshape(H, n_u), 0.0, self.system.u_max)
                X_cand = self.predict_trajectory(x0, U_cand)
                cost_cand = self._cost(X_cand, refs_m, U_cand)
                if np.isfinite(cost_cand) and cost_cand < cost:
                    rel_drop = (cost - cost_cand) / max(cost, 1e-12)
                    U, X, cost = U_cand, X_cand, cost_cand
                    self.last_cost_history.append(cost)
                    improved = True
                    break
                sigma *= 0.5
            if not improved or rel_drop < cfg.tol:
                break

        u0 = np.clip(U[0], 0.0, self.system.u_max)
        # receding horizon: shift, repeat last stage
        self._U[:-1] = U[1:]
        self._U[-1] = U[-1]
        w = self.system.mixer @ u0
        return ControlOutput(u=u0, wrench_desired=Wrench(w[0:3], w[3:6]),
                             iterations=iters_done, cost=cost,
                             solve_time=time.perf_counter() - t_start)


def mpc_control(state: State, reference: list[Setpoint], cfg: MpcConfig,
                body: BodyParams, system: ThrusterSystem,
                residual: list[GpModel | None] | None = None) -> ControlOutput:
    """One-shot MPC solve (cold start); see MpcController for warm-started use."""
    return MpcController(cfg, body, system, residual).control(state, reference)
