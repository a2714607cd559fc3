"""Single-environment episode loop: planner, controller, faults, contacts.

Per physics step the environment (1) asks the planner for the active
setpoint, (2) updates the controller at its own period with zero-order
hold in between, (3) maps demanded thrusts through the fault schedule,
(4) mixes commands into a wrench and adds sampled disturbances via the
built-in pre-step hook, (5) solves contacts and adds their wrench,
(6) integrates one RK4 step, and (7) appends a log row.  Episodes are
bit-deterministic per (config, seed).

The per-step log serializes to CSV with a JSON header line carrying the
resolved config; episode summaries are recomputed from the log columns,
so an offline recomputation from the CSV reproduces the online summary
exactly.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import rng as rngmod
from .actuation import apply_fault, mix, sample_disturbance
from .contact import ContactRecord, ContactSolveResult, compliance_targets, detect, solve_contacts, update_record
from .control import (
    ControlOutput,
    MpcController,
    PdGains,
    Setpoint,
    attitude_error,
    control_effort,
    pd_control,
)
from .errors import ConfigError, FreeflyerError, IntegrationDivergedError, QpSolverError, SolverStallError
from .planning import (
    STAGE_DOCKED,
    STAGE_FINAL_APPROACH,
    STAGE_GATE_HOLD,
    DockingPlan,
    DockingStageTracker,
    InspectionPlan,
    reference_trajectory,
)
from .rigid_body import State, Wrench, quat_exp, quat_multiply, quat_to_rotation, step
from .scenario import ScenarioConfig, build_fault_model, load_config, serialize_config


class EpisodeError(FreeflyerError):
    """An episode aborted mid-run; carries the step index and partial log."""

    def __init__(self, message: str, step_index: int, partial_log: "StepLog"):
        super().__init__(f"{message} (at step {step_index})")
        self.step_index = step_index
        self.partial_log = partial_log


# ---------------------------------------------------------------------------
# Log and summary containers
# ---------------------------------------------------------------------------

@dataclass
class StepLog:
    """Column-wise per-step log; one row per physics step."""

    config: dict
    t: np.ndarray
    state: np.ndarray          # (n, 13)
    u_dem: np.ndarray          # (n, n_u)
    u_act: np.ndarray          # (n, n_u)
    wrench: np.ndarray         # (n, 6) thruster wrench
    disturbance: np.ndarray    # (n, 6)
    contact_force: np.ndarray  # (n,) magnitude
    contact_impulse: np.ndarray  # (n,) summed impulses
    setpoint: np.ndarray       # (n, 13)
    lateral_error: np.ndarray  # (n,)
    stage: list[str]
    ctrl_iterations: np.ndarray
    ctrl_cost: np.ndarray
    active_faults: list[str]   # ";"-joined thruster indices, "" when none

    def __len__(self) -> int:
        return self.t.shape[0]

    def to_csv(self) -> str:
        n_u = self.u_dem.shape[1] if len(self) else 0
        buf = io.StringIO()
        buf.write("# config: " + json.dumps(self.config, sort_keys=True, separators=(",", ":")) + "\n")
        cols = (["t"]
                + [f"state_{i}" for i in range(13)]
                + [f"u_dem_{i}" for i in range(n_u)]
                + [f"u_act_{i}" for i in range(n_u)]
                + [f"wrench_{i}" for i in range(6)]
                + [f"dist_{i}" for i in range(6)]
                + ["contact_force", "contact_impulse"]
                + [f"sp_{i}" for i in range(13)]
                + ["lateral_error", "stage", "ctrl_iterations", "ctrl_cost", "active_faults"])
        buf.write(",".join(cols) + "\n")
        for k in range(len(self)):
            row = ([repr(float(self.t[k]))]
                   + [repr(float(x)) for x in self.state[k]]
                   + [repr(float(x)) for x in self.u_dem[k]]
                   + [repr(float(x)) for x in self.u_act[k]]
                   + [repr(float(x)) for x in self.wrench[k]]
                   + [repr(float(x)) for x in self.disturbance[k]]
                   + [repr(float(self.contact_force[k])), repr(float(self.contact_impulse[k]))]
                   + [repr(float(x)) for x in self.setpoint[k]]
                   + [repr(float(self.lateral_error[k])), self.stage[k],
                      str(int(self.ctrl_iterations[k])), repr(float(self.ctrl_cost[k])),
                      self.active_faults[k]])
            buf.write(",".join(row) + "\n")
        return buf.getvalue()

    @staticmethod
    def from_csv(text: str) -> "StepLog":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# config: "):
            raise ConfigError("log file missing the JSON config header line")
        config = json.loads(lines[0][len("# config: "):])
        if len(lines) < 2:
            raise ConfigError("log file missing the CSV header row")
        header = lines[1].split(",")
        idx = {name: i for i, name in enumerate(header)}
        n_u = sum(1 for name in header if name.startswith("u_dem_"))
        rows = [line.split(",") for line in lines[2:] if line]
        n = len(rows)

        def floats(prefix, width):
            base = idx[f"{prefix}_0"] if width > 1 else idx[prefix]
            return np.array([[float(r[base + j]) for j in range(width)] for r in rows]).reshape(n, width)

        log = StepLog(
            config=config,
            t=np.array([float(r[idx["t"]]) for r in rows]),
            state=floats("state", 13),
            u_dem=floats("u_dem", n_u) if n else np.zeros((0, n_u)),
            u_act=floats("u_act", n_u) if n else np.zeros((0, n_u)),
            wrench=floats("wrench", 6),
            disturbance=floats("dist", 6),
            contact_force=np.array([float(r[idx["contact_force"]]) for r in rows]),
            contact_impulse=np.array([float(r[idx["contact_impulse"]]) for r in rows]),
            setpoint=floats("sp", 13),
            lateral_error=np.array([float(r[idx["lateral_error"]]) for r in rows]),
            stage=[r[idx["stage"]] for r in rows],
            ctrl_iterations=np.array([int(r[idx["ctrl_iterations"]]) for r in rows]),
            ctrl_cost=np.array([float(r[idx["ctrl_cost"]]) for r in rows]),
            active_faults=[r[idx["active_faults"]] for r in rows],
        )
        return log

    @staticmethod
    def empty(config: dict, n_u: int) -> "StepLog":
        return StepLog(config=config, t=np.zeros(0), state=np.zeros((0, 13)),
                       u_dem=np.zeros((0, n_u)), u_act=np.zeros((0, n_u)),
                       wrench=np.zeros((0, 6)), disturbance=np.zeros((0, 6)),
                       contact_force=np.zeros(0), contact_impulse=np.zeros(0),
                       setpoint=np.zeros((0, 13)), lateral_error=np.zeros(0), stage=[],
                       ctrl_iterations=np.zeros(0, dtype=int), ctrl_cost=np.zeros(0),
                       active_faults=[])


@dataclass(frozen=True)
class EpisodeSummary:
    """End-of-episode metrics (all recomputable from the step log)."""

    mean_lateral_error: float
    mean_control_effort: float
    max_lateral_error: float
    first_contact_time: Optional[float]
    peak_contact_force: float
    settled: bool
    settle_time: Optional[float]
    final_position_error: float
    final_attitude_error: float
    rendezvous_success: Optional[bool]
    dock_success: Optional[bool]
    bounded_contact_ok: Optional[bool]
    steps: int

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "EpisodeSummary":
        return EpisodeSummary(**json.loads(text))

    def close_to(self, other: "EpisodeSummary", tol: float = 1e-12) -> bool:
        for key, a in self.__dict__.items():
            b = getattr(other, key)
            if isinstance(a, float) and isinstance(b, float):
                if not (abs(a - b) <= tol or (np.isnan(a) and np.isnan(b))):
                    return False
            elif a != b:
                return False
        return True


def lateral_error_of(r_I: np.ndarray, sp_vec: np.ndarray) -> float:
    """Distance to the reference position perpendicular to the transit direction.

    When the reference is not translating (dwell/hold) the full position
    error is used.
    """
    e = sp_vec[0:3] - r_I
    q_ref = sp_vec[3:7]
    v_ref_B = sp_vec[7:10]
    v_I = quat_to_rotation(q_ref / np.linalg.norm(q_ref)) @ v_ref_B
    speed = np.linalg.norm(v_I)
    if speed <= 1e-9:
        return float(np.linalg.norm(e))
    d = v_I / speed
    return float(np.linalg.norm(e - (e @ d) * d))


def summarize(log: StepLog, cfg: ScenarioConfig) -> EpisodeSummary:
    """Compute the episode summary from log columns (used online and offline)."""
    n = len(log)
    contact_cfg = cfg.data.get("contact")
    is_docking = cfg.data["plan"]["type"] == "docking"
    if n == 0:
        return EpisodeSummary(0.0, 0.0, 0.0, None, 0.0, False, None, 0.0, 0.0,
                              None if not is_docking else False,
                              None if not is_docking else False,
                              None if contact_cfg is None else True, 0)

    mean_lat = float(np.mean(log.lateral_error))
    max_lat = float(np.max(log.lateral_error))
    effort = control_effort(log.u_dem, cfg.dt)

    record = ContactRecord.fresh()
    if contact_cfg is not None:
        dock_r = (np.asarray(cfg.data["plan"]["dock"]["r"], dtype=float)
                  if is_docking else None)
        for k in range(n):
            impulse = float(log.contact_impulse[k])
            force = float(log.contact_force[k])
            res = ContactSolveResult(np.array([impulse]), np.array([force / cfg.dt]),
                                     Wrench(np.array([force, 0.0, 0.0]), np.zeros(3)), 0.0, 1) \
                if impulse > 0.0 else ContactSolveResult.empty()
            if dock_r is not None:
                pose_err = float(np.linalg.norm(log.state[k, 0:3] - dock_r))
            else:
                pose_err = float(np.linalg.norm(log.state[k, 0:3] - log.setpoint[k, 0:3]))
            vel_norm = float(np.linalg.norm(log.state[k, 7:10]))
            record = update_record(record, res, pose_err, vel_norm, float(log.t[k]),
                                   float(contact_cfg["pos_tol"]), float(contact_cfg["vel_tol"]),
                                   float(contact_cfg["settle_window"]))

    last_state = log.state[-1]
    last_sp = log.setpoint[-1]
    final_pos_err = float(np.linalg.norm(last_state[0:3] - last_sp[0:3]))
    q = last_state[3:7] / np.linalg.norm(last_state[3:7])
    q_ref = last_sp[3:7] / np.linalg.norm(last_sp[3:7])
    final_att_err = float(np.linalg.norm(attitude_error(q, q_ref)))

    rendezvous = None
    dock = None
    if is_docking:
        reached = {STAGE_GATE_HOLD, STAGE_FINAL_APPROACH, STAGE_DOCKED}
        rendezvous = any(s in reached for s in log.stage)
        dock = record.settled and log.stage[-1] == STAGE_DOCKED
    bounded = None
    if contact_cfg is not None:
        bounded = record.peak_force <= float(contact_cfg["max_force"])

    return EpisodeSummary(
        mean_lateral_error=mean_lat, mean_control_effort=effort, max_lateral_error=max_lat,
        first_contact_time=record.first_contact_time, peak_contact_force=record.peak_force,
        settled=record.settled, settle_time=record.settle_time,
        final_position_error=final_pos_err, final_attitude_error=final_att_err,
        rendezvous_success=rendezvous, dock_success=dock, bounded_contact_ok=bounded,
        steps=n)


# ---------------------------------------------------------------------------
# Environment
# ---------------------------------------------------------------------------

class SimEnvironment:
    """One scenario instance; owns all mutable state for its episode.

    Multiple instances share nothing and may run concurrently.  Pre-step
    hooks receive (env, t) and may return a Wrench to add (disturbance
    sampling is installed as a built-in pre-step hook); post-step hooks
    receive (env, row_dict) read-only.
    """

    def __init__(self, cfg, seed_override: int | None = None, env_index: int = 0,
                 log_enabled: bool | None = None):
        self.cfg = load_config(cfg)
        self.seed = self.cfg.seed if seed_override is None else int(seed_override)
        self.env_index = env_index
        self.body = self.cfg.body()
        self.system = self.cfg.thrusters()
        self.dt = self.cfg.dt
        self.n_steps = int(round(self.cfg.duration / self.dt))
        self.ctrl_every = max(1, int(round(self.cfg.controller_period / self.dt)))
        self.log_enabled = self.cfg.data["log"]["enabled"] if log_enabled is None else log_enabled

        self.plan = self.cfg.make_plan()
        self.disturbances = self.cfg.disturbances()
        self.pre_step_hooks = [self._disturbance_hook]
        self.post_step_hooks = []

        self._streams = {
            "init": rngmod.substream(self.seed, self.env_index, rngmod.CONSUMER_INIT),
            "faults": rngmod.substream(self.seed, self.env_index, rngmod.CONSUMER_FAULTS),
            "disturbance": rngmod.substream(self.seed, self.env_index, rngmod.CONSUMER_DISTURBANCE),
        }

        ctype = self.cfg.data["controller"]["type"]
        if ctype == "mpc":
            self._mpc = MpcController(self.cfg.mpc_config(), self.body, self.system)
        elif ctype == "rl":
            from .rl.train import load_policy_controller

            self._rl = load_policy_controller(self.cfg.data["controller"]["checkpoint"], self.system)
        self._ctype = ctype

        self.reset()

    # -- lifecycle ------------------------------------------------------

    def reset(self) -> State:
        cfg = self.cfg
        self.t = 0.0
        self.step_index = 0
        self._last_output = ControlOutput(u=np.zeros(self.system.n_u), wrench_desired=Wrench.zero())
        self.record = ContactRecord.fresh()
        self._contact_warm = None
        if isinstance(self.plan, DockingPlan):
            self.tracker = DockingStageTracker(self.plan)
        else:
            self.tracker = None
        if self._ctype == "mpc":
            self._mpc.reset()

        faults = []
        for entry in cfg.fault_entries():
            u_max_i = float(self.system.u_max[entry.thruster])
            model = build_fault_model(entry, u_max_i, rng=self._streams["faults"])
            faults.append((entry.thruster, model, entry.t_on, entry.t_off))
        self._fault_schedule = faults

        ist = cfg.data["initial_state"]
        if "randomize" in ist:
            rz = ist["randomize"]
            g = self._streams["init"]
            center = np.asarray(rz["pos_center"], dtype=float)
            half = np.asarray(rz["pos_halfwidth"], dtype=float)
            r0 = center + g.uniform(-1.0, 1.0, 3) * half
            base_q = self._plan_start_setpoint().q_ref
            angle = g.uniform(0.0, float(rz["att_max_angle"]))
            axis = g.standard_normal(3)
            axis /= np.linalg.norm(axis)
            q0 = quat_multiply(base_q, quat_exp(angle * axis))
            v0 = g.uniform(-1.0, 1.0, 3) * np.asarray(rz["vel_halfwidth"], dtype=float)
            self.state = State(r0, q0, v0, np.zeros(3))
        elif ist.get("at_plan_start", False):
            sp = self._plan_start_setpoint()
            self.state = State(sp.r_ref.copy(), sp.q_ref.copy(), np.zeros(3), np.zeros(3))
        else:
            self.state = State(np.asarray(ist["r"], dtype=float), np.asarray(ist["q"], dtype=float),
                               np.asarray(ist["v"], dtype=float), np.asarray(ist["w"], dtype=float))

        self._log_rows = []
        return self.state

    def _plan_start_setpoint(self) -> Setpoint:
        if isinstance(self.plan, DockingPlan):
            return self.plan.pre_dock_pose
        if isinstance(self.plan, InspectionPlan):
            return reference_trajectory(self.plan, 0.0)
        return self.plan  # hold setpoint

    # -- per-step pieces --------------------------------------------------

    def _disturbance_hook(self, env: "SimEnvironment", t: float) -> Wrench:
        total = Wrench.zero()
        for d in self.disturbances:
            total = total + sample_disturbance(d, self.state, t, self._streams["disturbance"])
        return total

    def active_faults(self, t: float) -> list[tuple[int, object]]:
        return [(idx, model) for idx, model, t_on, t_off in self._fault_schedule
                if t_on <= t < t_off]

    def _setpoint(self, t: float) -> tuple[str, Setpoint]:
        if self.tracker is not None:
            return self.tracker.update(self.state, t, self.record.settled)
        if isinstance(self.plan, InspectionPlan):
            return "track", reference_trajectory(self.plan, t)
        return "track", self.plan

    def _reference_window(self, t: float) -> list[Setpoint]:
        cfg_c = self.cfg.data["controller"]
        horizon = int(cfg_c["horizon"])
        dt_c = float(cfg_c["dt"])
        if self.tracker is not None:
            return [self.tracker.active_setpoint(t + (k + 1) * dt_c) for k in range(horizon)]
        if isinstance(self.plan, InspectionPlan):
            return [reference_trajectory(self.plan, t + (k + 1) * dt_c) for k in range(horizon)]
        return [self.plan] * horizon

    def _control(self, t: float, setpoint: Setpoint) -> ControlOutput:
        if self._ctype == "pd":
            return pd_control(self.state, setpoint, self.cfg.pd_gains(), self.system)
        if self._ctype == "rl":
            return self._rl.compute(self.state, setpoint)
        try:
            return self._mpc.control(self.state, self._reference_window(t), t)
        except QpSolverError:
            # documented fallback: PD takes over for this update
            return pd_control(self.state, setpoint, PdGains(), self.system)

    def step_actuated(self, u_dem: np.ndarray) -> dict:
        """Advance physics one dt under the given thruster demands."""
        t = self.t
        u_dem = np.clip(np.asarray(u_dem, dtype=float), 0.0, self.system.u_max)
        u_act = u_dem.copy()
        active = self.active_faults(t)
        for idx, model in active:
            u_act[idx] = apply_fault(model, u_dem[idx], t, self._streams["faults"])

        thr_wrench = mix(self.system, u_act)
        dist_wrench = Wrench.zero()
        for hook in self.pre_step_hooks:
            extra = hook(self, t)
            if extra is not None:
                dist_wrench = dist_wrench + extra

        contact_wrench = Wrench.zero()
        contact_force = 0.0
        contact_impulse = 0.0
        if self.cfg.contact_enabled():
            contacts = detect(self.cfg.body_shape(), self.state, self._world_shapes_cached())
            if contacts:
                cc = self.cfg.data["contact"]
                R_reg, v_star = compliance_targets(contacts, float(cc["stiffness"]),
                                                   float(cc["damping"]), self.dt)
                try:
                    res = solve_contacts(contacts, self.body, self.state, R_reg, v_star, self.dt,
                                         warm_start=self._contact_warm)
                except SolverStallError as exc:
                    raise EpisodeError(str(exc), self.step_index, self._build_log()) from exc
                self._contact_warm = res.impulses
                contact_wrench = res.total_wrench
                contact_force = float(np.linalg.norm(res.total_wrench.force_B))
                contact_impulse = float(np.sum(res.impulses))
            else:
                self._contact_warm = None

        total = thr_wrench + dist_wrench + contact_wrench
        try:
            self.state = step(self.state, self.body, total, self.dt)
        except IntegrationDivergedError as exc:
            raise EpisodeError(str(exc), self.step_index, self._build_log()) from exc

        return {"u_act": u_act, "thr_wrench": thr_wrench, "dist_wrench": dist_wrench,
                "contact_force": contact_force, "contact_impulse": contact_impulse,
                "active": active}

    def _world_shapes_cached(self):
        if not hasattr(self, "_world_shapes"):
            self._world_shapes = self.cfg.world_shapes()
        return self._world_shapes

    def run(self) -> tuple[StepLog, EpisodeSummary]:
        """Run the episode to completion; returns the log and its summary."""
        contact_cfg = self.cfg.data.get("contact")
        for k in range(self.n_steps):
            t = self.t
            stage, setpoint = self._setpoint(t)
            if k % self.ctrl_every == 0:
                self._last_output = self._control(t, setpoint)
            out = self._last_output
            state_before = self.state

            info = self.step_actuated(out.u)

            if contact_cfg is not None:
                if isinstance(self.plan, DockingPlan):
                    pose_err = float(np.linalg.norm(state_before.r_I - self.plan.dock_pose.r_ref))
                else:
                    pose_err = float(np.linalg.norm(state_before.r_I - setpoint.r_ref))
                vel_norm = float(np.linalg.norm(state_before.v_B))
                res = (ContactSolveResult(np.array([info["contact_impulse"]]),
                                          np.array([info["contact_force"] / self.dt]),
                                          Wrench(np.array([info["contact_force"], 0.0, 0.0]), np.zeros(3)),
                                          0.0, 1)
                       if info["contact_impulse"] > 0.0 else ContactSolveResult.empty())
                self.record = update_record(self.record, res, pose_err, vel_norm, t,
                                            float(contact_cfg["pos_tol"]), float(contact_cfg["vel_tol"]),
                                            float(contact_cfg["settle_window"]))

            if self.log_enabled:
                sp_vec = np.concatenate([setpoint.r_ref, setpoint.q_ref, setpoint.v_ref, setpoint.w_ref])
                row = {
                    "t": t, "state": state_before.as_vector(), "u_dem": out.u.copy(),
                    "u_act": info["u_act"],
                    "wrench": np.concatenate([info["thr_wrench"].force_B, info["thr_wrench"].torque_B]),
                    "disturbance": np.concatenate([info["dist_wrench"].force_B, info["dist_wrench"].torque_B]),
                    "contact_force": info["contact_force"], "contact_impulse": info["contact_impulse"],
                    "setpoint": sp_vec, "lateral_error": lateral_error_of(state_before.r_I, sp_vec),
                    "stage": stage, "ctrl_iterations": out.iterations, "ctrl_cost": out.cost,
                    "active_faults": ";".join(str(i) for i, _ in info["active"]),
                }
                self._log_rows.append(row)
                for hook in self.post_step_hooks:
                    hook(self, row)

            self.step_index += 1
            self.t = self.step_index * self.dt

        log = self._build_log()
        return log, summarize(log, self.cfg)

    def _build_log(self) -> StepLog:
        rows = self._log_rows
        n_u = self.system.n_u
        if not rows:
            return StepLog.empty(self.cfg.data, n_u)
        return StepLog(
            config=self.cfg.data,
            t=np.array([r["t"] for r in rows]),
            state=np.array([r["state"] for r in rows]),
            u_dem=np.array([r["u_dem"] for r in rows]),
            u_act=np.array([r["u_act"] for r in rows]),
            wrench=np.array([r["wrench"] for r in rows]),
            disturbance=np.array([r["disturbance"] for r in rows]),
            contact_force=np.array([r["contact_force"] for r in rows]),
            contact_impulse=np.array([r["contact_impulse"] for r in rows]),
            setpoint=np.array([r["setpoint"] for r in rows]),
            lateral_error=np.array([r["lateral_error"] for r in rows]),
            stage=[r["stage"] for r in rows],
            ctrl_iterations=np.array([r["ctrl_iterations"] for r in rows], dtype=int),
            ctrl_cost=np.array([r["ctrl_cost"] for r in rows]),
            active_faults=[r["active_faults"] for r in rows],
        )


def run_episode(cfg, seed_override: int | None = None) -> tuple[StepLog, EpisodeSummary]:
    """Load (or accept) a config, run one episode, return (log, summary)."""
    env = SimEnvironment(cfg, seed_override=seed_override)
    return env.run()


# ---------------------------------------------------------------------------
# Packaged scenarios
# ---------------------------------------------------------------------------

INSPECTION_FAILURE_MODES = ("nominal", "stuck_off", "stuck_on")
INSPECTION_FAULT_THRUSTER = 0  # +x thruster: radial axis under point-at-target attitude


def inspection_config(failure_mode: str = "nominal", seed: int = 0) -> dict:
    """Canonical waypoint-inspection scenario with an optional injected fault."""
    if failure_mode not in INSPECTION_FAILURE_MODES:
        raise ConfigError(f"unknown failure mode {failure_mode!r}; "
                          f"expected one of {INSPECTION_FAILURE_MODES}")
    duration = 46.0
    faults = []
    if failure_mode != "nominal":
        faults.append({"thruster": INSPECTION_FAULT_THRUSTER, "kind": failure_mode,
                       "t_on": 5.0, "t_off": duration})
    return {
        "schema": 1,
        "seed": seed,
        "dt": 0.02,
        "duration": duration,
        "controller_period": 0.1,
        "plan": {"type": "inspection", "target_center": [0.0, 0.0, 0.0], "target_radius": 0.6,
                 "n_waypoints": 3, "standoff": 0.4, "dwell": 3.0, "transit_speed": 0.1,
                 "attitude_mode": "point_at_target", "phase": 0.0},
        "controller": {"type": "mpc", "horizon": 16, "dt": 0.1},
        "initial_state": {"at_plan_start": True},
        "faults": faults,
    }


def inspection_scenario(failure_mode: str = "nominal", seed: int = 0) -> EpisodeSummary:
    """Run the canonical inspection scenario under one failure mode."""
    _, summary = run_episode(inspection_config(failure_mode, seed))
    return summary


def docking_config(seed: int = 0) -> dict:
    """Canonical staged docking with a randomized start and a slot receptacle.

    The dock pose commands 0.02 m past first touch so contact stays
    engaged while the soft-contact compliance carries the load.
    """
    return {
        "schema": 1,
        "seed": seed,
        "dt": 0.02,
        "duration": 80.0,
        "controller_period": 0.1,
        "plan": {"type": "docking",
                 "pre_dock": {"r": [1.0, 0.0, 0.0], "q": [1.0, 0.0, 0.0, 0.0]},
                 "dock": {"r": [1.87, 0.0, 0.0], "q": [1.0, 0.0, 0.0, 0.0]},
                 "approach_speed": 0.05, "gate_pos_tol": 0.05, "gate_att_tol": 0.15,
                 "hold_time": 2.0},
        "controller": {"type": "mpc", "horizon": 20, "dt": 0.1},
        "initial_state": {"randomize": {"pos_center": [-1.0, 0.0, 0.0],
                                        "pos_halfwidth": [0.5, 0.5, 0.5],
                                        "att_max_angle": 0.2618,
                                        "vel_halfwidth": [0.0, 0.0, 0.0]}},
        "contact": {"body_radius": 0.15, "stiffness": 200.0, "damping": 50.0,
                    "pos_tol": 0.03, "vel_tol": 0.01, "settle_window": 2.0, "max_force": 5.0,
                    "shapes": [
                        {"kind": "plane", "normal": [-1.0, 0.0, 0.0], "offset": -2.0},
                        {"kind": "plane", "normal": [0.0, -1.0, 0.0], "offset": -0.3},
                        {"kind": "plane", "normal": [0.0, 1.0, 0.0], "offset": -0.3},
                    ]},
    }


def docking_scenario(seed: int = 0) -> EpisodeSummary:
    """Run the canonical docking scenario from a randomized relative pose."""
    _, summary = run_episode(docking_config(seed))
    return summary
