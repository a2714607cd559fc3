"""Thruster geometry, per-thruster fault models, and additive disturbances.

A thruster j at body-frame position p_j firing along unit direction d_j
with scalar thrust u_j contributes force u_j d_j and torque u_j (p_j x d_j).
Stacking all thrusters gives the 6 x n_u mixer matrix B with

    [F_B; T_B] = B @ u_act,        u_act_i = g_i(u_dem_i)

where g_i is the (possibly nonlinear, possibly stochastic) fault map of
thruster i.  All stochastic draws come from the caller-provided stream;
there is no global randomness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DisturbanceError, InvalidInputError
from .rigid_body import State, Wrench

FAULT_KINDS = ("nominal", "stuck_off", "stuck_on", "saturation",
               "faulty_valve", "instability", "gp_sample")


# ---------------------------------------------------------------------------
# Thruster geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThrusterSystem:
    """Thruster positions, directions, limits, and the mixer matrix B."""

    positions: np.ndarray   # (n_u, 3) body frame, m
    directions: np.ndarray  # (n_u, 3) unit vectors, body frame
    u_max: np.ndarray       # (n_u,) per-thruster thrust limit, N
    mixer: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        dirs = np.asarray(self.directions, dtype=np.float64)
        umax = np.asarray(self.u_max, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3 or dirs.shape != pos.shape:
            raise InvalidInputError("positions and directions must both be (n_u, 3)")
        n = pos.shape[0]
        if umax.shape != (n,):
            raise InvalidInputError(f"u_max must have shape ({n},)")
        norms = np.linalg.norm(dirs, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise InvalidInputError("thruster directions must be unit vectors")
        if np.any(~np.isfinite(umax)) or np.any(umax <= 0.0):
            raise InvalidInputError("u_max entries must be finite and positive")
        B = np.zeros((6, n))
        B[0:3, :] = dirs.T
        B[3:6, :] = np.cross(pos, dirs).T
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "directions", dirs)
        object.__setattr__(self, "u_max", umax)
        object.__setattr__(self, "mixer", B)

    @property
    def n_u(self) -> int:
        return self.positions.shape[0]

    def rank(self) -> int:
        return int(np.linalg.matrix_rank(self.mixer))


def default_thruster_system(u_max: float = 0.4, half_size: float = 0.15) -> ThrusterSystem:
    """12-thruster cube layout with full 6-DoF authority (rank-6 B).

    Four corner clusters of three orthogonal thrusters each, on the
    +/-0.15 m corners of a 0.3 m cube: per translation axis there are two
    opposing pairs whose lever arms span both lateral torque axes.  The
    attainable wrench set {B u : 0 <= u <= u_max} stays a full
    neighborhood of zero even with any single thruster disabled, so a
    single hard fault degrades authority without creating unreachable
    force/torque combinations.
    """
    h = half_size
    pos = np.array([
        # x group: two opposing pairs across diagonal corners
        [-h, +h, +h], [-h, -h, -h], [+h, +h, -h], [+h, -h, +h],
        # y group
        [+h, -h, +h], [-h, -h, -h], [-h, +h, +h], [+h, +h, -h],
        # z group
        [+h, +h, -h], [-h, -h, -h], [-h, +h, +h], [+h, -h, +h],
    ])
    dirs = np.array([
        [+1.0, 0.0, 0.0], [+1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [-1.0, 0.0, 0.0],
        [0.0, +1.0, 0.0], [0.0, +1.0, 0.0], [0.0, -1.0, 0.0], [0.0, -1.0, 0.0],
        [0.0, 0.0, +1.0], [0.0, 0.0, +1.0], [0.0, 0.0, -1.0], [0.0, 0.0, -1.0],
    ])
    return ThrusterSystem(pos, dirs, np.full(12, u_max))


# ---------------------------------------------------------------------------
# Fault models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FaultModel:
    """One per-thruster demanded-to-actual thrust map g(u).

    Kinds and parameters:
      nominal        g(u) = u
      stuck_off      g(u) = 0
      stuck_on       g(u) = u_max
      saturation     g(u) = min(u, u_sat)
      faulty_valve   piecewise-linear through `breakpoints` [(u_in, u_out), ...]
      instability    clamp(u (1 + A sin(2 pi f t)) + noise, 0, u_max)
      gp_sample      clamp(interp(u; grid, values), 0, u_max), one posterior
                     draw held fixed for the episode
    """

    kind: str
    u_max: float
    u_sat: float | None = None
    breakpoints: tuple[tuple[float, float], ...] | None = None
    amplitude: float = 0.0
    frequency: float = 1.0
    noise_std: float = 0.0
    gp_grid: np.ndarray | None = None
    gp_values: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in FAULT_KINDS:
            raise InvalidInputError(f"unknown fault kind {self.kind!r}")
        if not (np.isfinite(self.u_max) and self.u_max > 0.0):
            raise InvalidInputError("fault u_max must be finite and positive")
        if self.kind == "saturation":
            if self.u_sat is None or not (0.0 < self.u_sat <= self.u_max):
                raise InvalidInputError("saturation requires u_sat in (0, u_max]")
        if self.kind == "faulty_valve":
            bps = self.breakpoints
            if not bps or bps[0] != (0.0, 0.0):
                raise InvalidInputError("faulty_valve breakpoints must start at (0, 0)")
            us = [b[0] for b in bps]
            gs = [b[1] for b in bps]
            if any(b - a < 0 for a, b in zip(us, us[1:])) or any(b - a < 0 for a, b in zip(gs, gs[1:])):
                raise InvalidInputError("faulty_valve breakpoints must be monotone non-decreasing")
        if self.kind == "instability":
            if self.amplitude < 0.0 or self.frequency <= 0.0 or self.noise_std < 0.0:
                raise InvalidInputError("instability requires amplitude >= 0, frequency > 0, noise_std >= 0")
        if self.kind == "gp_sample":
            if self.gp_grid is None or self.gp_values is None:
                raise InvalidInputError("gp_sample requires a sampled (grid, values) map")
            grid = np.asarray(self.gp_grid, dtype=np.float64)
            vals = np.asarray(self.gp_values, dtype=np.float64)
            if grid.shape != vals.shape or grid.ndim != 1 or grid.size < 2:
                raise InvalidInputError("gp_sample grid and values must be matching 1-D arrays")
            object.__setattr__(self, "gp_grid", grid)
            object.__setattr__(self, "gp_values", vals)

    # -- convenience constructors -------------------------------------------------

    @staticmethod
    def nominal(u_max: float) -> "FaultModel":
        return FaultModel("nominal", u_max)

    @staticmethod
    def stuck_off(u_max: float) -> "FaultModel":
        return FaultModel("stuck_off", u_max)

    @staticmethod
    def stuck_on(u_max: float) -> "FaultModel":
        return FaultModel("stuck_on", u_max)

    @staticmethod
    def saturation(u_sat: float, u_max: float) -> "FaultModel":
        return FaultModel("saturation", u_max, u_sat=u_sat)

    @staticmethod
    def faulty_valve(breakpoints, u_max: float) -> "FaultModel":
        return FaultModel("faulty_valve", u_max, breakpoints=tuple(tuple(b) for b in breakpoints))

    @staticmethod
    def default_faulty_valve(u_max: float) -> "FaultModel":
        """Documented default valve curve: (0,0), (0.3 u_max, 0.1 u_max), (u_max, 0.8 u_max)."""
        return FaultModel.faulty_valve(
            [(0.0, 0.0), (0.3 * u_max, 0.1 * u_max), (u_max, 0.8 * u_max)], u_max)

    @staticmethod
    def instability(u_max: float, amplitude: float = 0.2, frequency: float = 1.0,
                    noise_std: float | None = None) -> "FaultModel":
        if noise_std is None:
            noise_std = 0.05 * u_max
        return FaultModel("instability", u_max, amplitude=amplitude,
                          frequency=frequency, noise_std=noise_std)

    @staticmethod
    def gp_sample(grid: np.ndarray, values: np.ndarray, u_max: float) -> "FaultModel":
        return FaultModel("gp_sample", u_max, gp_grid=grid, gp_values=values)


def apply_fault(fault: FaultModel, u_dem: float, t: float,
                rng_stream: Optional[np.random.Generator]) -> float:
    """Map one thruster's demanded thrust through its fault model.

    Requires 0 <= u_dem <= u_max.  Output always lies in [0, u_max].
    Stochastic kinds (instability) draw exclusively from rng_stream.
    """
    if not (0.0 <= u_dem <= fault.u_max + 1e-12):
        raise InvalidInputError(f"u_dem={u_dem} outside [0, {fault.u_max}]")
    kind = fault.kind
    if kind == "nominal":
        return u_dem
    if kind == "stuck_off":
        return 0.0
    if kind == "stuck_on":
        return fault.u_max
    if kind == "saturation":
        return min(u_dem, fault.u_sat)
    if kind == "faulty_valve":
        us = [b[0] for b in fault.breakpoints]
        gs = [b[1] for b in fault.breakpoints]
        out = float(np.interp(u_dem, us, gs))
        return min(max(out, 0.0), fault.u_max)
    if kind == "instability":
        if rng_stream is None:
            raise InvalidInputError("instability fault requires an rng stream")
        noise = fault.noise_std * rng_stream.standard_normal() if fault.noise_std > 0.0 else 0.0
        out = u_dem * (1.0 + fault.amplitude * math.sin(2.0 * math.pi * fault.frequency * t)) + noise
        return min(max(out, 0.0), fault.u_max)
    if kind == "gp_sample":
        out = float(np.interp(u_dem, fault.gp_grid, fault.gp_values))
        return min(max(out, 0.0), fault.u_max)
    raise InvalidInputError(f"unknown fault kind {kind!r}")


# ---------------------------------------------------------------------------
# Mixing and allocation
# ---------------------------------------------------------------------------

def mix(system: ThrusterSystem, u_act: np.ndarray) -> Wrench:
    """Body wrench [F; T] = B @ u_act."""
    u_act = np.asarray(u_act, dtype=np.float64)
    if u_act.shape != (system.n_u,):
        raise InvalidInputError(f"u_act must have shape ({system.n_u},), got {u_act.shape}")
    if not np.all(np.isfinite(u_act)):
        raise InvalidInputError("u_act has non-finite entries")
    w = system.mixer @ u_act
    return Wrench(w[0:3], w[3:6])


def allocate(system: ThrusterSystem, desired: Wrench,
             tol: float = 1e-8, max_iters: int = 500) -> np.ndarray:
    """Thruster commands minimizing ||B u - w||^2 subject to 0 <= u <= u_max.

    Projected gradient with Nesterov acceleration and fixed step
    1/||B^T B||_2 (monotone restart keeps iterates non-increasing in
    cost), run until the fixed-point residual falls below `tol` or
    `max_iters` iterations.  Infeasible wrenches return the
    box-constrained least-squares point.
    """
    B = system.mixer
    w = np.concatenate([desired.force_B, desired.torque_B])
    BtB = B.T @ B
    Btw = B.T @ w
    step_size = 1.0 / np.linalg.norm(BtB, 2)
    lo = np.zeros(system.n_u)
    hi = system.u_max
    u = np.zeros(system.n_u)
    y = u
    t_acc = 1.0
    for _ in range(max_iters):
        grad = BtB @ y - Btw
        u_next = np.clip(y - step_size * grad, lo, hi)
        if (u_next - u) @ (BtB @ (u_next - u)) > 2.0 * (Btw - BtB @ u) @ (u_next - u):
            # acceleration overshot: restart from a plain projected step
            grad = BtB @ u - Btw
            u_next = np.clip(u - step_size * grad, lo, hi)
            t_acc = 1.0
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_acc * t_acc))
        y = u_next + ((t_acc - 1.0) / t_next) * (u_next - u)
        converged = np.linalg.norm(u_next - u) <= tol
        u, t_acc = u_next, t_next
        if converged:
            break
    return u


# ---------------------------------------------------------------------------
# Disturbances
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Disturbance:
    """Additive wrench term: none, white noise, constant, or a callback.

    The callback hook is where orbital correction terms (Clohessy-
    Wiltshire or J2 style) plug in: it receives (state, t) and returns a
    Wrench added to the applied wrench for that step.
    """

    kind: str  # "none" | "white_noise" | "constant" | "callback"
    std_force: float = 0.0
    std_torque: float = 0.0
    wrench: Wrench | None = None
    callback: Callable[[State, float], Wrench] | None = None

    def __post_init__(self):
        if self.kind not in ("none", "white_noise", "constant", "callback"):
            raise InvalidInputError(f"unknown disturbance kind {self.kind!r}")
        if self.std_force < 0.0 or self.std_torque < 0.0:
            raise InvalidInputError("disturbance std parameters must be >= 0")
        if self.kind == "constant" and self.wrench is None:
            raise InvalidInputError("constant disturbance requires a wrench")
        if self.kind == "callback" and self.callback is None:
            raise InvalidInputError("callback disturbance requires a callable")

    @staticmethod
    def none() -> "Disturbance":
        return Disturbance("none")

    @staticmethod
    def white_noise(std_force: float, std_torque: float) -> "Disturbance":
        return Disturbance("white_noise", std_force=std_force, std_torque=std_torque)

    @staticmethod
    def constant(wrench: Wrench) -> "Disturbance":
        return Disturbance("constant", wrench=wrench)

    @staticmethod
    def from_callback(fn: Callable[[State, float], Wrench]) -> "Disturbance":
        return Disturbance("callback", callback=fn)


def sample_disturbance(d: Disturbance, state: State, t: float,
                       rng_stream: Optional[np.random.Generator]) -> Wrench:
    """Evaluate one disturbance term at (state, t)."""
    if d.kind == "none":
        return Wrench.zero()
    if d.kind == "constant":
        return d.wrench
    if d.kind == "white_noise":
        if rng_stream is None:
            raise InvalidInputError("white_noise disturbance requires an rng stream")
        return Wrench(d.std_force * rng_stream.standard_normal(3),
                      d.std_torque * rng_stream.standard_normal(3))
    out = d.callback(state, t)
    if not isinstance(out, Wrench):
        # callbacks may return a raw (force, torque) pair
        try:
            force, torque = np.asarray(out[0], dtype=np.float64), np.asarray(out[1], dtype=np.float64)
        except (TypeError, IndexError, ValueError) as exc:
            raise DisturbanceError(f"disturbance callback returned {out!r} at t={t}") from exc
        if not (np.all(np.isfinite(force)) and np.all(np.isfinite(torque))):
            raise DisturbanceError(f"disturbance callback returned non-finite wrench at t={t}")
        return Wrench(force, torque)
    if not (np.all(np.isfinite(out.force_B)) and np.all(np.isfinite(out.torque_B))):
        raise DisturbanceError(f"disturbance callback returned non-finite wrench at t={t}")
    return out
