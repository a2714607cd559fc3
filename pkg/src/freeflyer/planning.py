"""Reference generation: circular inspection plans and staged docking.

Inspection waypoints sit on a circle of radius target_radius + standoff
around the target, in a configurable plane (inertial x-y by default).
The time-parameterized reference interpolates position linearly at the
plan's transit speed and attitude by slerp, holding during dwell
windows and after the final waypoint.

Docking runs a monotone four-stage machine: Transit to the pre-dock
gate, GateHold for a configured time, FinalApproach toward the dock
pose at the approach speed, and Docked once contact has settled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .control import Setpoint, attitude_error
from .errors import InvalidInputError
from .rigid_body import (
    State,
    quat_conjugate,
    quat_from_rotation,
    quat_log,
    quat_multiply,
    quat_slerp,
    quat_to_rotation,
)

STAGE_TRANSIT = "transit"
STAGE_GATE_HOLD = "gate_hold"
STAGE_FINAL_APPROACH = "final_approach"
STAGE_DOCKED = "docked"
STAGES = (STAGE_TRANSIT, STAGE_GATE_HOLD, STAGE_FINAL_APPROACH, STAGE_DOCKED)


# ---------------------------------------------------------------------------
# Inspection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InspectionPlan:
    """Ordered waypoints with per-waypoint dwell and transit parameters."""

    waypoints: tuple[Setpoint, ...]
    dwell: float
    standoff: float
    transit_speed: float = 0.1
    slew_rate: float = 0.2  # rad/s bound used to size pure-rotation transits

    def __post_init__(self):
        if len(self.waypoints) < 1:
            raise InvalidInputError("plan needs at least one waypoint")
        if self.standoff <= 0.0 or self.dwell < 0.0 or self.transit_speed <= 0.0 or self.slew_rate <= 0.0:
            raise InvalidInputError("require standoff > 0, dwell >= 0, positive rates")
        for a, b in zip(self.waypoints, self.waypoints[1:]):
            dist = np.linalg.norm(b.r_ref - a.r_ref)
            angle = np.linalg.norm(attitude_error(b.q_ref, a.q_ref))
            if dist <= 1e-6 and angle <= 1e-9:
                raise InvalidInputError("consecutive waypoints must differ in position or attitude")
        object.__setattr__(self, "waypoints", tuple(self.waypoints))

    def _segment_times(self) -> list[tuple[float, float, int]]:
        """(t_start, duration, kind) rows; kind: waypoint index >= 0 for
        dwell at that waypoint, -(i+1) for the transit leaving waypoint i."""
        rows = []
        t = 0.0
        for i, wp in enumerate(self.waypoints):
            rows.append((t, self.dwell, i))
            t += self.dwell
            if i + 1 < len(self.waypoints):
                nxt = self.waypoints[i + 1]
                dist = float(np.linalg.norm(nxt.r_ref - wp.r_ref))
                angle = float(np.linalg.norm(attitude_error(nxt.q_ref, wp.q_ref)))
                dur = max(dist / self.transit_speed, angle / self.slew_rate, 1e-9)
                rows.append((t, dur, -(i + 1)))
                t += dur
        return rows

    def total_duration(self) -> float:
        rows = self._segment_times()
        t0, dur, _ = rows[-1]
        return t0 + dur


def plan_inspection(target_center, target_radius: float, n_waypoints: int,
                    standoff: float, attitude_mode: str = "point_at_target",
                    plane_normal=(0.0, 0.0, 1.0), dwell: float = 5.0,
                    transit_speed: float = 0.1, phase: float = 0.0) -> InspectionPlan:
    """Uniform circle of waypoints at target_radius + standoff from the target.

    attitude_mode "point_at_target" orients the body +x axis toward the
    target center at every waypoint; "identity" keeps the attitude fixed.
    """
    if n_waypoints < 1:
        raise InvalidInputError("n_waypoints must be >= 1")
    if standoff <= 0.0 or target_radius < 0.0:
        raise InvalidInputError("require standoff > 0 and target_radius >= 0")
    if attitude_mode not in ("point_at_target", "identity"):
        raise InvalidInputError(f"unknown attitude mode {attitude_mode!r}")
    center = np.asarray(target_center, dtype=np.float64)
    n = np.asarray(plane_normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    helper = np.array([1.0, 0.0, 0.0])
    if abs(n @ helper) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    e1 = helper - (helper @ n) * n
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    rho = target_radius + standoff

    waypoints = []
    for k in range(n_waypoints):
        theta = phase + 2.0 * np.pi * k / n_waypoints
        pos = center + rho * (np.cos(theta) * e1 + np.sin(theta) * e2)
        if attitude_mode == "point_at_target":
            x_axis = (center - pos) / rho
            y_axis = np.cross(n, x_axis)
            y_axis /= np.linalg.norm(y_axis)
            z_axis = np.cross(x_axis, y_axis)
            q = quat_from_rotation(np.column_stack([x_axis, y_axis, z_axis]))
        else:
            q = np.array([1.0, 0.0, 0.0, 0.0])
        waypoints.append(Setpoint.hold(pos, q))
    return InspectionPlan(tuple(waypoints), dwell=dwell, standoff=standoff,
                          transit_speed=transit_speed)


def reference_trajectory(plan, t: float) -> Setpoint:
    """Time-parameterized reference pose for a plan.

    InspectionPlan: piecewise dwell/transit timeline as documented above;
    beyond the final waypoint the last setpoint is held.  DockingPlan:
    the pre-dock gate is the time-based reference (the approach itself is
    state-dependent and driven by the stage machine).
    """
    if t < 0.0:
        raise InvalidInputError("t must be >= 0")
    if isinstance(plan, DockingPlan):
        return plan.pre_dock_pose
    if not isinstance(plan, InspectionPlan):
        raise InvalidInputError(f"unsupported plan type {type(plan).__name__}")

    wps = plan.waypoints
    for t0, dur, kind in plan._segment_times():
        if t >= t0 + dur:
            continue
        if kind >= 0:
            return wps[kind]
        i = -kind - 1
        a, b = wps[i], wps[i + 1]
        tau = (t - t0) / dur
        pos = a.r_ref + tau * (b.r_ref - a.r_ref)
        v_I = (b.r_ref - a.r_ref) / dur
        q = quat_slerp(a.q_ref, b.q_ref, tau)
        w_B = quat_log(quat_multiply(quat_conjugate(a.q_ref), b.q_ref)) / dur
        v_B = quat_to_rotation(q).T @ v_I
        return Setpoint(pos, q, v_B, w_B)
    return wps[-1]


# ---------------------------------------------------------------------------
# Docking
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DockingPlan:
    """Staged approach: pre-dock gate, then final docking."""

    pre_dock_pose: Setpoint
    dock_pose: Setpoint
    approach_speed: float
    gate_pos_tol: float = 0.05
    gate_att_tol: float = 0.15
    hold_time: float = 2.0

    def __post_init__(self):
        if self.approach_speed <= 0.0:
            raise InvalidInputError("approach_speed must be positive")
        if self.gate_pos_tol <= 0.0 or self.gate_att_tol <= 0.0 or self.hold_time < 0.0:
            raise InvalidInputError("gate tolerances must be positive, hold_time >= 0")
        axis = self.dock_pose.r_ref - self.pre_dock_pose.r_ref
        if np.linalg.norm(axis) <= 1e-9:
            raise InvalidInputError("gate must precede the dock along the approach axis")

    @property
    def approach_axis(self) -> np.ndarray:
        axis = self.dock_pose.r_ref - self.pre_dock_pose.r_ref
        return axis / np.linalg.norm(axis)

    @property
    def approach_distance(self) -> float:
        return float(np.linalg.norm(self.dock_pose.r_ref - self.pre_dock_pose.r_ref))


@dataclass
class DockingStageTracker:
    """Per-environment stage state; transitions are monotone by construction."""

    plan: DockingPlan
    stage: str = STAGE_TRANSIT
    gate_entry_time: float | None = None
    approach_start_time: float | None = None

    def update(self, state: State, t: float, contact_settled: bool) -> tuple[str, Setpoint]:
        plan = self.plan
        if self.stage == STAGE_TRANSIT:
            pos_err = np.linalg.norm(state.r_I - plan.pre_dock_pose.r_ref)
            att_err = np.linalg.norm(attitude_error(state.q_IB, plan.pre_dock_pose.q_ref))
            if pos_err <= plan.gate_pos_tol and att_err <= plan.gate_att_tol:
                self.stage = STAGE_GATE_HOLD
                self.gate_entry_time = t
        if self.stage == STAGE_GATE_HOLD:
            if t - self.gate_entry_time >= plan.hold_time:
                self.stage = STAGE_FINAL_APPROACH
                self.approach_start_time = t
        if self.stage == STAGE_FINAL_APPROACH and contact_settled:
            self.stage = STAGE_DOCKED
        return self.stage, self.active_setpoint(t)

    def active_setpoint(self, t: float) -> Setpoint:
        plan = self.plan
        if self.stage in (STAGE_TRANSIT, STAGE_GATE_HOLD):
            return plan.pre_dock_pose
        if self.stage == STAGE_DOCKED:
            return plan.dock_pose
        traveled = plan.approach_speed * (t - self.approach_start_time)
        dist = plan.approach_distance
        if traveled >= dist:
            return plan.dock_pose
        tau = traveled / dist
        pos = plan.pre_dock_pose.r_ref + traveled * plan.approach_axis
        q = quat_slerp(plan.pre_dock_pose.q_ref, plan.dock_pose.q_ref, tau)
        v_B = quat_to_rotation(q).T @ (plan.approach_speed * plan.approach_axis)
        w_B = quat_log(quat_multiply(quat_conjugate(plan.pre_dock_pose.q_ref),
                                     plan.dock_pose.q_ref)) * (plan.approach_speed / dist)
        return Setpoint(pos, q, v_B, w_B)


def docking_stage(tracker: DockingStageTracker, state: State, t: float,
                  contact_settled: bool = False) -> tuple[str, Setpoint]:
    """Advance the tracker one observation and return (stage, setpoint)."""
    return tracker.update(state, t, contact_settled)
