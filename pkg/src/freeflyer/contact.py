"""Primitive-shape collision detection and the regularized impulse solver.

Normal-only contacts (no friction, no restitution).  Per step the solver
finds non-negative normal impulses f minimizing

    1/2 f^T (A + R) f + f^T (v_minus - v_star)

where A = J M^{-1} J^T is the contact-space inverse inertia (with both
translational and lever-arm rotational terms), R >= 0 regularizes the
impulse, v_minus are pre-impulse normal velocities and v_star the target
velocities.  Projected Gauss-Seidel with a fixed sweep order solves the
program; complementarity residual max_i |min(f_i, ((A+R) f + v- - v*)_i)|
must fall below 1e-8 within 1000 sweeps.

Compliance mapping
------------------
``compliance_targets`` chooses (R, v*) so single-contact response matches
an implicitly discretized spring-damper with stiffness k and damping c.
Derivation: demand the impulse satisfy f = dt F with the implicit force
law F = k d_next - c v_next, d_next = d - dt v_next, v_next = v- + A f.
Eliminating F and d_next gives

    f = (v* - v-) / (A + R),   v* = k d / (c + k dt),
                               R  = 1 / ((c + k dt) dt).

Limits: small dt recovers the explicit law F ~ k d - c v-; the stiff
limit k -> inf gives v_next -> d/dt, removing the penetration in one
step; steady state under a sustained load W settles at the spring
deflection d = W / k.

Sign conventions: contact normals point into the free-flyer, penetration
depth d >= 0, and v- > 0 means separating (so an approaching contact has
v- < 0 and f = max(0, (v* - v-)/(A+R)) > 0).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, InvalidInputError, SolverStallError
from .rigid_body import BodyParams, State, Wrench, quat_to_rotation

COMPLEMENTARITY_TOL = 1e-8
MAX_SWEEPS = 1000


# ---------------------------------------------------------------------------
# Shapes and contact points
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CollisionShape:
    """Sphere(radius), Plane(normal, offset), or Box(half_extents, position, rotation).

    Planes satisfy n . x = offset with the unit normal n pointing into
    free space.  Box pose is given in the inertial frame.
    """

    kind: str  # "sphere" | "plane" | "box"
    radius: float = 0.0
    normal: np.ndarray | None = None
    offset: float = 0.0
    half_extents: np.ndarray | None = None
    position: np.ndarray | None = None
    rotation: np.ndarray | None = None  # 3x3, box to inertial

    def __post_init__(self):
        if self.kind == "sphere":
            if not (np.isfinite(self.radius) and self.radius > 0.0):
                raise InvalidInputError("sphere radius must be positive")
        elif self.kind == "plane":
            n = np.asarray(self.normal, dtype=np.float64)
            if n.shape != (3,) or abs(np.linalg.norm(n) - 1.0) > 1e-9:
                raise InvalidInputError("plane normal must be a unit 3-vector")
            object.__setattr__(self, "normal", n)
        elif self.kind == "box":
            he = np.asarray(self.half_extents, dtype=np.float64)
            if he.shape != (3,) or np.any(he <= 0.0):
                raise InvalidInputError("box half_extents must be positive 3-vector")
            pos = np.zeros(3) if self.position is None else np.asarray(self.position, dtype=np.float64)
            rot = np.eye(3) if self.rotation is None else np.asarray(self.rotation, dtype=np.float64)
            object.__setattr__(self, "half_extents", he)
            object.__setattr__(self, "position", pos)
            object.__setattr__(self, "rotation", rot)
        else:
            raise InvalidInputError(f"unknown shape kind {self.kind!r}")

    @staticmethod
    def sphere(radius: float) -> "CollisionShape":
        return CollisionShape("sphere", radius=radius)

    @staticmethod
    def plane(normal, offset: float) -> "CollisionShape":
        return CollisionShape("plane", normal=np.asarray(normal, dtype=np.float64), offset=float(offset))

    @staticmethod
    def box(half_extents, position=None, rotation=None) -> "CollisionShape":
        return CollisionShape("box", half_extents=np.asarray(half_extents, dtype=np.float64),
                              position=position, rotation=rotation)


@dataclass(frozen=True)
class ContactPoint:
    """One detected contact: inertial position, normal into the body, depth, v-."""

    position: np.ndarray
    normal: np.ndarray
    depth: float
    rel_vel_normal: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise InvalidInputError("contact normal must be unit length")
        if self.depth < 0.0:
            raise InvalidInputError("reported contacts must have depth >= 0")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))


@dataclass(frozen=True)
class ContactSolveResult:
    """Solved impulses, equivalent forces, and the net body wrench."""

    impulses: np.ndarray
    forces: np.ndarray
    total_wrench: Wrench
    residual: float
    sweeps: int

    @staticmethod
    def empty() -> "ContactSolveResult":
        return ContactSolveResult(np.zeros(0), np.zeros(0), Wrench.zero(), 0.0, 0)


@dataclass(frozen=True)
class ContactRecord:
    """Docking bookkeeping: first contact, peak force, settling."""

    first_contact_time: float | None = None
    peak_force: float = 0.0
    settled: bool = False
    settle_time: float | None = None
    hold_since: float | None = None  # start of the current in-tolerance window

    @staticmethod
    def fresh() -> "ContactRecord":
        return ContactRecord()


# ---------------------------------------------------------------------------
# Narrow-phase detection
# ---------------------------------------------------------------------------

def validate_shape_pairs(body_shape: CollisionShape, world_shapes) -> None:
    """Reject unsupported pairs at configuration time, not mid-episode."""
    if body_shape.kind != "sphere":
        raise ConfigError(f"free-flyer collision shape must be a sphere, got {body_shape.kind!r}")
    for shape in world_shapes:
        if shape.kind not in ("plane", "box"):
            raise ConfigError(f"world collision shapes must be planes or boxes, got {shape.kind!r}")


def _point_velocity_normal(state: State, point: np.ndarray, normal: np.ndarray) -> float:
    """Normal velocity of the body material point at `point` (inertial)."""
    R = quat_to_rotation(state.q_IB)
    v_I = R @ state.v_B
    w_I = R @ state.w_B
    vp = v_I + np.cross(w_I, point - state.r_I)
    return float(normal @ vp)


def detect(body_shape: CollisionShape, body_state: State, world_shapes) -> list[ContactPoint]:
    """Sphere-vs-plane and sphere-vs-box narrow phase.

    Contacts are reported when penetration depth >= 0 (touching counts).
    """
    if body_shape.kind != "sphere":
        raise ConfigError(f"unsupported body shape {body_shape.kind!r}")
    r = body_shape.radius
    c = body_state.r_I
    contacts: list[ContactPoint] = []
    for shape in world_shapes:
        if shape.kind == "plane":
            gap = float(shape.normal @ c) - shape.offset  # center height above plane
            depth = r - gap
            if depth >= 0.0:
                point = c - gap * shape.normal
                vn = _point_velocity_normal(body_state, point, shape.normal)
                contacts.append(ContactPoint(point, shape.normal, depth, vn))
        elif shape.kind == "box":
            local = shape.rotation.T @ (c - shape.position)
            clamped = np.clip(local, -shape.half_extents, shape.half_extents)
            if np.array_equal(local, clamped):
                # center inside the box: push out through the nearest face
                dists = shape.half_extents - np.abs(local)
                axis = int(np.argmin(dists))
                sign = 1.0 if local[axis] >= 0.0 else -1.0
                n_local = np.zeros(3)
                n_local[axis] = sign
                closest_local = local.copy()
                closest_local[axis] = sign * shape.half_extents[axis]
                depth = r + float(dists[axis])
            else:
                delta = local - clamped
                dist = float(np.linalg.norm(delta))
                depth = r - dist
                if depth < 0.0:
                    continue
                n_local = delta / dist
                closest_local = clamped
            normal = shape.rotation @ n_local
            point = shape.rotation @ closest_local + shape.position
            vn = _point_velocity_normal(body_state, point, normal)
            contacts.append(ContactPoint(point, normal, depth, vn))
        else:
            raise ConfigError(f"unsupported world shape {shape.kind!r}")
    return contacts


# ---------------------------------------------------------------------------
# Impulse solve
# ---------------------------------------------------------------------------

def contact_space_inertia(contacts, body: BodyParams, state: State) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """A = J M^{-1} J^T plus body-frame normals and lever arms.

    Contact Jacobians include the rotational lever-arm term, so
    off-center contacts induce torque.
    """
    n = len(contacts)
    R = quat_to_rotation(state.q_IB)
    n_B = np.array([R.T @ cp.normal for cp in contacts])               # (n, 3)
    arm_B = np.array([R.T @ (cp.position - state.r_I) for cp in contacts])
    rxn = np.cross(arm_B, n_B)                                          # (n, 3)
    A = (n_B @ n_B.T) / body.mass + rxn @ body.inertia_inv @ rxn.T
    return A, n_B, rxn


def solve_contacts(contacts, body: BodyParams, state: State, R_reg, v_star, dt: float,
                   warm_start: np.ndarray | None = None) -> ContactSolveResult:
    """Projected Gauss-Seidel solve of the regularized contact program.

    Fixed sweep order by contact index; optionally warm-started from the
    previous step's impulses.  Raises SolverStallError if the
    complementarity residual does not reach 1e-8 within 1000 sweeps.
    """
    if dt <= 0.0:
        raise InvalidInputError("dt must be positive")
    m = len(contacts)
    if m == 0:
        return ContactSolveResult.empty()
    R_reg = np.broadcast_to(np.asarray(R_reg, dtype=np.float64), (m,)).copy()
    v_star = np.broadcast_to(np.asarray(v_star, dtype=np.float64), (m,)).copy()
    if np.any(R_reg < 0.0):
        raise InvalidInputError("regularization must be >= 0")
    A, n_B, rxn = contact_space_inertia(contacts, body, state)
    b = np.array([cp.rel_vel_normal for cp in contacts]) - v_star
    H = A + np.diag(R_reg)
    diag = np.diag(H).copy()
    f = np.zeros(m) if warm_start is None or warm_start.shape != (m,) else warm_start.clip(min=0.0).copy()

    residual = np.inf
    sweeps = 0
    for sweeps in range(1, MAX_SWEEPS + 1):
        for i in range(m):
            gi = H[i] @ f + b[i] - H[i, i] * f[i]
            f[i] = max(0.0, -gi / diag[i])
        slack = H @ f + b
        residual = float(np.max(np.abs(np.minimum(f, slack))))
        if residual <= COMPLEMENTARITY_TOL:
            break
    if residual > COMPLEMENTARITY_TOL:
        raise SolverStallError(f"contact solve stalled after {MAX_SWEEPS} sweeps", residual)

    force_B = (n_B.T @ f) / dt
    torque_B = (rxn.T @ f) / dt
    return ContactSolveResult(f, f / dt, Wrench(force_B, torque_B), residual, sweeps)


def compliance_targets(contacts, stiffness: float, damping: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-contact (R, v*) matching an implicit spring-damper (k, c).

    See the module docstring for the derivation:
        v*_i = k * depth_i / (c + k dt),  R_i = 1 / ((c + k dt) dt).
    """
    if stiffness <= 0.0 or damping < 0.0:
        raise InvalidInputError("require stiffness > 0 and damping >= 0")
    m = len(contacts)
    denom = damping + stiffness * dt
    R = np.full(m, 1.0 / (denom * dt))
    v_star = np.array([stiffness * cp.depth / denom for cp in contacts])
    return R, v_star


# ---------------------------------------------------------------------------
# Docking bookkeeping
# ---------------------------------------------------------------------------

def update_record(record: ContactRecord, result: ContactSolveResult, pose_error: float,
                  vel_norm: float, t: float, pos_tol: float, vel_tol: float,
                  settle_window: float) -> ContactRecord:
    """Fold one step's contact outcome into the running record.

    first_contact_time latches at the first nonzero impulse; peak_force
    tracks the running max force magnitude; settled latches once pose
    and velocity stay inside tolerance continuously for settle_window
    seconds, with settle_time reporting the window start.
    """
    force_mag = float(np.linalg.norm(result.total_wrench.force_B)) if result.impulses.size else 0.0
    first = record.first_contact_time
    if first is None and result.impulses.size and np.any(result.impulses > 0.0):
        first = t
    peak = max(record.peak_force, force_mag)

    hold = record.hold_since
    settled = record.settled
    settle_time = record.settle_time
    if not settled:
        if pose_error <= pos_tol and vel_norm <= vel_tol:
            if hold is None:
                hold = t
            elif t - hold >= settle_window:
                settled = True
                settle_time = hold
        else:
            hold = None
    return replace(record, first_contact_time=first, peak_force=peak,
                   settled=settled, settle_time=settle_time, hold_since=hold)
