"""6-DoF Newton-Euler rigid-body state, quaternion algebra, and integration.

State convention
----------------
The 13-component state is laid out as

    x = [r_I (3), q_IB (4), v_B (3), w_B (3)]

where ``r_I`` is the center-of-mass position in the inertial frame,
``q_IB`` is the attitude quaternion, ``v_B`` the CoM linear velocity in
the body frame, and ``w_B`` the body angular velocity.

Quaternion convention
---------------------
Scalar-first Hamilton quaternions q = [w, x, y, z].  ``R(q_IB)`` maps
body-frame vectors into the inertial frame: ``v_I = R(q_IB) @ v_B``.
A rotation by angle a about inertial axis n is q = [cos(a/2), sin(a/2) n].

Equations of motion
-------------------
    r_dot = R(q) v
    q_dot = 1/2 H(q)^T w          (equivalently 1/2 q * [0, w])
    v_dot = F/m - w x v
    w_dot = I^{-1} (T - w x (I w))

with the 3x4 kinematic matrix

    H(q) = [ -x   w   z  -y ]
           [ -y  -z   w   x ]
           [ -z   y  -x   w ]

so that q_dot = 1/2 H(q)^T w reproduces the Hamilton product q * [0, w]/2.

Integration is classical fixed-step RK4 with post-step quaternion
renormalization.  All operations are pure functions of their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import IntegrationDivergedError, InvalidInputError

QUAT_UNIT_TOL = 1e-6  # precondition tolerance on |q| for quaternion ops
MAX_STEP_DT = 0.1     # guard against grossly unstable step sizes


# ---------------------------------------------------------------------------
# Quaternion algebra (scalar-first, Hamilton)
# ---------------------------------------------------------------------------

def quat_normalize(q: np.ndarray) -> np.ndarray:
    """Return q scaled to unit norm."""
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if n == 0.0 or not np.isfinite(n):
        raise InvalidInputError("cannot normalize a zero or non-finite quaternion")
    return q / n


def quat_multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Hamilton product q1 * q2 (scalar-first)."""
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    """Conjugate (inverse for unit quaternions)."""
    return np.array([q[0], -q[1], -q[2], -q[3]])


def _check_unit(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (4,):
        raise InvalidInputError(f"quaternion must have shape (4,), got {q.shape}")
    if abs(np.linalg.norm(q) - 1.0) > QUAT_UNIT_TOL:
        raise InvalidInputError(f"quaternion is not unit norm: |q| = {np.linalg.norm(q):.9f}")
    return q


def quat_to_rotation(q: np.ndarray) -> np.ndarray:
    """Rotation matrix R(q_IB) mapping body-frame vectors to inertial.

    Requires |q| = 1 within 1e-6.  The returned matrix satisfies
    R^T R = I and det R = 1 to machine precision for unit input.
    """
    q = _check_unit(q)
    w, x, y, z = q
    return np.array([
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
        [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
        [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
    ])


def quat_from_rotation(R: np.ndarray) -> np.ndarray:
    """Unit quaternion (scalar-first, w >= 0) for a rotation matrix."""
    R = np.asarray(R, dtype=np.float64)
    t = np.trace(R)
    if t > 0.0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s,
                      (R[1, 0] - R[0, 1]) / s])
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(R[i, i] - R[j, j] - R[k, k] + 1.0) * 2.0
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    if q[0] < 0.0:
        q = -q
    return quat_normalize(q)


def quat_exp(phi: np.ndarray) -> np.ndarray:
    """Quaternion for rotation vector phi (angle * unit axis)."""
    phi = np.asarray(phi, dtype=np.float64)
    angle = np.linalg.norm(phi)
    if angle < 1e-12:
        # second-order series keeps the map smooth through zero
        q = np.array([1.0 - angle * angle / 8.0, *(0.5 * phi)])
        return quat_normalize(q)
    axis = phi / angle
    half = 0.5 * angle
    return np.array([np.cos(half), *(np.sin(half) * axis)])


def quat_log(q: np.ndarray) -> np.ndarray:
    """Rotation vector of a unit quaternion, shortest way (angle <= pi).

    At angle pi the axis sign is ambiguous; the tie is broken by making
    the first nonzero axis component positive.
    """
    q = _check_unit(q)
    if q[0] < 0.0:
        q = -q
    vec = q[1:]
    s = np.linalg.norm(vec)
    w = min(q[0], 1.0)
    if s < 1e-12:
        return 2.0 * vec  # small-angle: log(q) ~ 2 * vector part
    angle = 2.0 * np.arctan2(s, w)
    axis = vec / s
    if abs(angle - np.pi) < 1e-12:
        for c in axis:
            if c != 0.0:
                if c < 0.0:
                    axis = -axis
                break
    return angle * axis


def quat_slerp(q0: np.ndarray, q1: np.ndarray, alpha: float) -> np.ndarray:
    """Spherical-linear interpolation from q0 (alpha=0) to q1 (alpha=1)."""
    q0 = _check_unit(q0)
    q1 = _check_unit(q1)
    rel = quat_multiply(quat_conjugate(q0), q1)
    return quat_normalize(quat_multiply(q0, quat_exp(alpha * quat_log(rel))))


def quat_kinematic_matrix(q: np.ndarray) -> np.ndarray:
    """The 3x4 matrix H(q) with q_dot = 1/2 H(q)^T w for body-frame w."""
    w, x, y, z = q
    return np.array([
        [-x, w, z, -y],
        [-y, -z, w, x],
        [-z, y, -x, w],
    ])


def quat_derivative(q: np.ndarray, w_B: np.ndarray) -> np.ndarray:
    """Quaternion rate q_dot = 1/2 H(q)^T w_B.

    The result is tangent to the unit sphere: q . q_dot = 0 exactly
    (up to rounding), so norm is preserved to first order.
    """
    q = _check_unit(q)
    w_B = np.asarray(w_B, dtype=np.float64)
    return 0.5 * quat_kinematic_matrix(q).T @ w_B


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class State:
    """Rigid-body state: inertial position, attitude, body velocities."""

    r_I: np.ndarray
    q_IB: np.ndarray
    v_B: np.ndarray
    w_B: np.ndarray

    def __post_init__(self):
        for name, size in (("r_I", 3), ("q_IB", 4), ("v_B", 3), ("w_B", 3)):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (size,):
                raise InvalidInputError(f"State.{name} must have shape ({size},), got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"State.{name} has non-finite components")
            object.__setattr__(self, name, arr)
        if abs(np.linalg.norm(self.q_IB) - 1.0) > QUAT_UNIT_TOL:
            raise InvalidInputError("State quaternion is not unit norm")

    @staticmethod
    def identity() -> "State":
        return State(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3), np.zeros(3))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.r_I, self.q_IB, self.v_B, self.w_B])

    @staticmethod
    def from_vector(x: np.ndarray) -> "State":
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (13,):
            raise InvalidInputError(f"state vector must have shape (13,), got {x.shape}")
        return State(x[0:3], x[3:7], x[7:10], x[10:13])

    def rotation(self) -> np.ndarray:
        """R(q_IB), body to inertial."""
        return quat_to_rotation(self.q_IB)


@dataclass(frozen=True)
class BodyParams:
    """Mass and inertia of the free-flyer."""

    mass: float
    inertia: np.ndarray
    inertia_inv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (np.isfinite(self.mass) and self.mass > 0.0):
            raise InvalidInputError(f"mass must be strictly positive, got {self.mass}")
        I = np.asarray(self.inertia, dtype=np.float64)
        if I.shape != (3, 3):
            raise InvalidInputError(f"inertia must be 3x3, got {I.shape}")
        if np.linalg.norm(I - I.T) >= 1e-12:
            raise InvalidInputError("inertia matrix must be symmetric")
        eigvals = np.linalg.eigvalsh(I)
        if np.any(eigvals <= 0.0):
            raise InvalidInputError(f"inertia must be positive-definite, eigenvalues {eigvals}")
        object.__setattr__(self, "inertia", I)
        object.__setattr__(self, "inertia_inv", np.linalg.inv(I))

    @staticmethod
    def from_diag(mass: float, diag) -> "BodyParams":
        return BodyParams(mass=mass, inertia=np.diag(np.asarray(diag, dtype=np.float64)))


@dataclass(frozen=True)
class Wrench:
    """Body-frame force [N] and torque [N m]."""

    force_B: np.ndarray
    torque_B: np.ndarray

    def __post_init__(self):
        for name in ("force_B", "torque_B"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (3,):
                raise InvalidInputError(f"Wrench.{name} must have shape (3,), got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"Wrench.{name} has non-finite components")
            object.__setattr__(self, name, arr)

    @staticmethod
    def zero() -> "Wrench":
        return Wrench(np.zeros(3), np.zeros(3))

    def __add__(self, other: "Wrench") -> "Wrench":
        return Wrench(self.force_B + other.force_B, self.torque_B + other.torque_B)


# ---------------------------------------------------------------------------
# Dynamics and integration
# ---------------------------------------------------------------------------

def _dynamics_vec(x: np.ndarray, force: np.ndarray, torque: np.ndarray,
                  mass: float, inertia: np.ndarray, inertia_inv: np.ndarray) -> np.ndarray:
    """State derivative on a raw 13-vector (no validation; hot path)."""
    qw, qx, qy, qz = x[3:7]
    v = x[7:10]
    w = x[10:13]
    out = np.empty(13)
    # R(q) @ v expanded inline
    out[0] = (1.0 - 2.0 * (qy * qy + qz * qz)) * v[0] + 2.0 * (qx * qy - qz * qw) * v[1] + 2.0 * (qx * qz + qy * qw) * v[2]
    out[1] = 2.0 * (qx * qy + qz * qw) * v[0] + (1.0 - 2.0 * (qx * qx + qz * qz)) * v[1] + 2.0 * (qy * qz - qx * qw) * v[2]
    out[2] = 2.0 * (qx * qz - qy * qw) * v[0] + 2.0 * (qy * qz + qx * qw) * v[1] + (1.0 - 2.0 * (qx * qx + qy * qy)) * v[2]
    wx, wy, wz = w
    out[3] = 0.5 * (-qx * wx - qy * wy - qz * wz)
    out[4] = 0.5 * (qw * wx + qy * wz - qz * wy)
    out[5] = 0.5 * (qw * wy + qz * wx - qx * wz)
    out[6] = 0.5 * (qw * wz + qx * wy - qy * wx)
    # v_dot = F/m - w x v
    out[7] = force[0] / mass - (wy * v[2] - wz * v[1])
    out[8] = force[1] / mass - (wz * v[0] - wx * v[2])
    out[9] = force[2] / mass - (wx * v[1] - wy * v[0])
    # w_dot = I^-1 (T - w x (I w))
    Iw = inertia @ w
    gx = torque[0] - (wy * Iw[2] - wz * Iw[1])
    gy = torque[1] - (wz * Iw[0] - wx * Iw[2])
    gz = torque[2] - (wx * Iw[1] - wy * Iw[0])
    out[10] = inertia_inv[0, 0] * gx + inertia_inv[0, 1] * gy + inertia_inv[0, 2] * gz
    out[11] = inertia_inv[1, 0] * gx + inertia_inv[1, 1] * gy + inertia_inv[1, 2] * gz
    out[12] = inertia_inv[2, 0] * gx + inertia_inv[2, 1] * gy + inertia_inv[2, 2] * gz
    return out


def dynamics(state: State, body: BodyParams, wrench: Wrench) -> np.ndarray:
    """Continuous-time state derivative, returned as a 13-vector.

    Implements r_dot = R v, q_dot = 1/2 H(q)^T w, v_dot = F/m - w x v,
    w_dot = I^{-1}(T - w x (I w)).
    """
    return _dynamics_vec(state.as_vector(), wrench.force_B, wrench.torque_B,
                         body.mass, body.inertia, body.inertia_inv)


def _step_vec(x: np.ndarray, force: np.ndarray, torque: np.ndarray,
              mass: float, inertia: np.ndarray, inertia_inv: np.ndarray,
              dt: float) -> np.ndarray:
    """One RK4 step + quaternion renormalization on a raw 13-vector."""
    k1 = _dynamics_vec(x, force, torque, mass, inertia, inertia_inv)
    k2 = _dynamics_vec(x + (0.5 * dt) * k1, force, torque, mass, inertia, inertia_inv)
    k3 = _dynamics_vec(x + (0.5 * dt) * k2, force, torque, mass, inertia, inertia_inv)
    k4 = _dynamics_vec(x + dt * k3, force, torque, mass, inertia, inertia_inv)
    x_new = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    q = x_new[3:7]
    x_new[3:7] = q / np.linalg.norm(q)
    return x_new


def step(state: State, body: BodyParams, wrench: Wrench, dt: float) -> State:
    """Advance the state by one fixed RK4 step of size dt.

    Requires 0 < |dt| <= 0.1 s; negative dt integrates backwards (used by
    the symmetric finite-difference consistency checks).  The quaternion
    is renormalized after the step.  Deterministic for identical inputs.

    Raises IntegrationDivergedError if the result is non-finite.
    """
    if not np.isfinite(dt) or dt == 0.0 or abs(dt) > MAX_STEP_DT:
        raise InvalidInputError(f"step size must satisfy 0 < |dt| <= {MAX_STEP_DT}, got {dt}")
    x_new = _step_vec(state.as_vector(), wrench.force_B, wrench.torque_B,
                      body.mass, body.inertia, body.inertia_inv, dt)
    if not np.all(np.isfinite(x_new)):
        raise IntegrationDivergedError(f"integration diverged over dt={dt}: {x_new}")
    return State.from_vector(x_new)


# ---------------------------------------------------------------------------
# Batched forms (used by the MPC linearization; same math as above)
# ---------------------------------------------------------------------------

def _dynamics_batch(X: np.ndarray, F: np.ndarray, T: np.ndarray,
                    mass: float, inertia: np.ndarray, inertia_inv: np.ndarray) -> np.ndarray:
    """Vectorized _dynamics_vec over rows of X (N,13), F (N,3), T (N,3)."""
    q = X[:, 3:7]
    v = X[:, 7:10]
    w = X[:, 10:13]
    qw, qx, qy, qz = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    r_dot = np.empty_like(v)
    r_dot[:, 0] = (1.0 - 2.0 * (qy * qy + qz * qz)) * v[:, 0] + 2.0 * (qx * qy - qz * qw) * v[:, 1] + 2.0 * (qx * qz + qy * qw) * v[:, 2]
    r_dot[:, 1] = 2.0 * (qx * qy + qz * qw) * v[:, 0] + (1.0 - 2.0 * (qx * qx + qz * qz)) * v[:, 1] + 2.0 * (qy * qz - qx * qw) * v[:, 2]
    r_dot[:, 2] = 2.0 * (qx * qz - qy * qw) * v[:, 0] + 2.0 * (qy * qz + qx * qw) * v[:, 1] + (1.0 - 2.0 * (qx * qx + qy * qy)) * v[:, 2]
    wx, wy, wz = w[:, 0], w[:, 1], w[:, 2]
    q_dot = np.empty_like(q)
    q_dot[:, 0] = 0.5 * (-qx * wx - qy * wy - qz * wz)
    q_dot[:, 1] = 0.5 * (qw * wx + qy * wz - qz * wy)
    q_dot[:, 2] = 0.5 * (qw * wy + qz * wx - qx * wz)
    q_dot[:, 3] = 0.5 * (qw * wz + qx * wy - qy * wx)
    v_dot = np.empty_like(v)
    v_dot[:, 0] = F[:, 0] / mass - (wy * v[:, 2] - wz * v[:, 1])
    v_dot[:, 1] = F[:, 1] / mass - (wz * v[:, 0] - wx * v[:, 2])
    v_dot[:, 2] = F[:, 2] / mass - (wx * v[:, 1] - wy * v[:, 0])
    Iw = w @ inertia.T
    G = np.empty_like(w)
    G[:, 0] = T[:, 0] - (wy * Iw[:, 2] - wz * Iw[:, 1])
    G[:, 1] = T[:, 1] - (wz * Iw[:, 0] - wx * Iw[:, 2])
    G[:, 2] = T[:, 2] - (wx * Iw[:, 1] - wy * Iw[:, 0])
    w_dot = G @ inertia_inv.T
    return np.concatenate([r_dot, q_dot, v_dot, w_dot], axis=1)


def step_batch(X: np.ndarray, F: np.ndarray, T: np.ndarray,
               mass: float, inertia: np.ndarray, inertia_inv: np.ndarray,
               dt: float) -> np.ndarray:
    """RK4 step applied row-wise to a batch of state vectors."""
    k1 = _dynamics_batch(X, F, T, mass, inertia, inertia_inv)
    k2 = _dynamics_batch(X + (0.5 * dt) * k1, F, T, mass, inertia, inertia_inv)
    k3 = _dynamics_batch(X + (0.5 * dt) * k2, F, T, mass, inertia, inertia_inv)
    k4 = _dynamics_batch(X + dt * k3, F, T, mass, inertia, inertia_inv)
    X_new = X + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    q = X_new[:, 3:7]
    X_new[:, 3:7] = q / np.linalg.norm(q, axis=1, keepdims=True)
    return X_new
