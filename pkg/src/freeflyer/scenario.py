"""Scenario configuration: a single validated JSON document (schema 1).

The resolved configuration is held as plain JSON-typed data so that
serialize(load(x)) round-trips exactly; typed domain objects (body,
thrusters, plans, fault schedule) are constructed on demand.  All units
are SI.  Validation happens entirely at load time and names the
offending field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .actuation import Disturbance, FaultModel, ThrusterSystem, default_thruster_system
from .contact import CollisionShape, validate_shape_pairs
from .control import MpcConfig, PdGains, Setpoint
from .errors import ConfigError
from .planning import DockingPlan, InspectionPlan, plan_inspection
from .rigid_body import BodyParams, Wrench

SCHEMA_VERSION = 1

_DEFAULTS: dict[str, Any] = {
    "schema": SCHEMA_VERSION,
    "seed": 0,
    "dt": 0.02,
    "duration": 10.0,
    "controller_period": 0.1,
    "body": {"mass": 10.0, "inertia_diag": [0.2, 0.25, 0.3]},
    "thrusters": {"layout": "default_cube", "u_max": 0.4, "half_size": 0.15},
    "initial_state": {"at_plan_start": True},
    "faults": [],
    "disturbances": [],
    "controller": {"type": "mpc"},
    "plan": {"type": "hold", "r": [0.0, 0.0, 0.0], "q": [1.0, 0.0, 0.0, 0.0]},
    "contact": None,
    "log": {"enabled": True},
}

_MPC_DEFAULTS = {"horizon": 12, "dt": 0.1, "q_pos": 10.0, "q_att": 5.0, "q_vel": 1.0,
                 "q_rate": 1.0, "r_u": 0.1, "max_iters": 5, "tol": 1e-4, "qp_iters": 150}
_PD_DEFAULTS = {"kp_pos": 0.8, "kd_vel": 4.0, "kp_att": 0.4, "kd_rate": 1.2}
_INSPECTION_DEFAULTS = {"target_center": [0.0, 0.0, 0.0], "target_radius": 1.0,
                        "n_waypoints": 4, "standoff": 0.5, "dwell": 5.0,
                        "transit_speed": 0.1, "attitude_mode": "point_at_target",
                        "phase": 0.0, "plane_normal": [0.0, 0.0, 1.0]}
_DOCKING_DEFAULTS = {"approach_speed": 0.05, "gate_pos_tol": 0.05, "gate_att_tol": 0.15,
                     "hold_time": 2.0}
_CONTACT_DEFAULTS = {"body_radius": 0.15, "stiffness": 200.0, "damping": 50.0,
                     "pos_tol": 0.03, "vel_tol": 0.01, "settle_window": 2.0,
                     "max_force": 5.0, "shapes": []}


def _fail(path: str, message: str):
    raise ConfigError(f"config field '{path}': {message}")


def _merged(defaults: dict, given: dict, path: str) -> dict:
    if not isinstance(given, dict):
        _fail(path, f"expected an object, got {type(given).__name__}")
    unknown = set(given) - set(defaults) - {"type", "layout"}
    if unknown:
        _fail(f"{path}.{sorted(unknown)[0]}", "unknown field")
    out = dict(defaults)
    out.update(given)
    return out


@dataclass(frozen=True)
class FaultEntry:
    """One scheduled fault: thruster index, model spec, activation window."""

    thruster: int
    kind: str
    t_on: float
    t_off: float
    params: dict


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated, fully-resolved scenario (plain data plus typed accessors)."""

    data: dict

    # -- typed accessors ------------------------------------------------

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def dt(self) -> float:
        return float(self.data["dt"])

    @property
    def duration(self) -> float:
        return float(self.data["duration"])

    @property
    def controller_period(self) -> float:
        return float(self.data["controller_period"])

    def body(self) -> BodyParams:
        b = self.data["body"]
        if "inertia" in b and b["inertia"] is not None:
            return BodyParams(mass=float(b["mass"]), inertia=np.asarray(b["inertia"], dtype=float))
        return BodyParams.from_diag(float(b["mass"]), b["inertia_diag"])

    def thrusters(self) -> ThrusterSystem:
        th = self.data["thrusters"]
        if th["layout"] == "default_cube":
            return default_thruster_system(u_max=float(th["u_max"]), half_size=float(th["half_size"]))
        return ThrusterSystem(np.asarray(th["positions"], dtype=float),
                              np.asarray(th["directions"], dtype=float),
                              np.asarray(th["u_max"], dtype=float))

    def fault_entries(self) -> list[FaultEntry]:
        out = []
        for f in self.data["faults"]:
            out.append(FaultEntry(thruster=int(f["thruster"]), kind=f["kind"],
                                  t_on=float(f["t_on"]), t_off=float(f["t_off"]),
                                  params=dict(f.get("params", {}))))
        return out

    def disturbances(self) -> list[Disturbance]:
        out = []
        for d in self.data["disturbances"]:
            if d["kind"] == "white_noise":
                out.append(Disturbance.white_noise(float(d["std_force"]), float(d["std_torque"])))
            elif d["kind"] == "constant":
                out.append(Disturbance.constant(Wrench(np.asarray(d["force"], dtype=float),
                                                       np.asarray(d["torque"], dtype=float))))
            else:
                _fail("disturbances.kind", f"unknown kind {d['kind']!r}")
        return out

    def controller_spec(self) -> dict:
        return dict(self.data["controller"])

    def mpc_config(self) -> MpcConfig:
        c = self.data["controller"]
        return MpcConfig(horizon=int(c["horizon"]), dt=float(c["dt"]), q_pos=float(c["q_pos"]),
                         q_att=float(c["q_att"]), q_vel=float(c["q_vel"]), q_rate=float(c["q_rate"]),
                         r_u=float(c["r_u"]), max_iters=int(c["max_iters"]), tol=float(c["tol"]),
                         qp_iters=int(c["qp_iters"]))

    def pd_gains(self) -> PdGains:
        c = self.data["controller"]
        return PdGains(kp_pos=float(c["kp_pos"]), kd_vel=float(c["kd_vel"]),
                       kp_att=float(c["kp_att"]), kd_rate=float(c["kd_rate"]))

    def make_plan(self):
        p = self.data["plan"]
        if p["type"] == "inspection":
            return plan_inspection(p["target_center"], float(p["target_radius"]),
                                   int(p["n_waypoints"]), float(p["standoff"]),
                                   attitude_mode=p["attitude_mode"],
                                   plane_normal=p["plane_normal"], dwell=float(p["dwell"]),
                                   transit_speed=float(p["transit_speed"]), phase=float(p["phase"]))
        if p["type"] == "docking":
            return DockingPlan(
                pre_dock_pose=Setpoint.hold(np.asarray(p["pre_dock"]["r"], dtype=float),
                                            np.asarray(p["pre_dock"]["q"], dtype=float)),
                dock_pose=Setpoint.hold(np.asarray(p["dock"]["r"], dtype=float),
                                        np.asarray(p["dock"]["q"], dtype=float)),
                approach_speed=float(p["approach_speed"]),
                gate_pos_tol=float(p["gate_pos_tol"]), gate_att_tol=float(p["gate_att_tol"]),
                hold_time=float(p["hold_time"]))
        return Setpoint.hold(np.asarray(p["r"], dtype=float), np.asarray(p["q"], dtype=float))

    def contact_enabled(self) -> bool:
        return self.data["contact"] is not None

    def body_shape(self) -> CollisionShape:
        return CollisionShape.sphere(float(self.data["contact"]["body_radius"]))

    def world_shapes(self) -> list[CollisionShape]:
        shapes = []
        for s in self.data["contact"]["shapes"]:
            if s["kind"] == "plane":
                shapes.append(CollisionShape.plane(s["normal"], float(s["offset"])))
            elif s["kind"] == "box":
                shapes.append(CollisionShape.box(s["half_extents"], s.get("position"),
                                                 np.asarray(s["rotation"], dtype=float) if s.get("rotation") else None))
            else:
                _fail("contact.shapes.kind", f"unknown kind {s['kind']!r}")
        return shapes


def load_config(source) -> ScenarioConfig:
    """Parse and fully validate a scenario document (JSON text or dict).

    Missing optional fields are filled with documented defaults; the
    resolved values are echoed in the log header of any episode run with
    this config.
    """
    if isinstance(source, ScenarioConfig):
        return source
    if isinstance(source, (str, bytes)):
        try:
            raw = json.loads(source)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config parse error at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    elif isinstance(source, dict):
        raw = json.loads(json.dumps(source))  # deep copy, enforce JSON types
    else:
        raise ConfigError(f"unsupported config source type {type(source).__name__}")

    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(raw) - set(_DEFAULTS)
    if unknown:
        _fail(sorted(unknown)[0], "unknown top-level field")
    data = dict(_DEFAULTS)
    data.update(raw)
    data = json.loads(json.dumps(data))

    if data["schema"] != SCHEMA_VERSION:
        _fail("schema", f"unsupported schema version {data['schema']!r} (expected {SCHEMA_VERSION})")
    if not isinstance(data["seed"], int):
        _fail("seed", "must be an integer")
    if not (isinstance(data["dt"], (int, float)) and 0.0 < data["dt"] <= 0.1):
        _fail("dt", f"must satisfy 0 < dt <= 0.1, got {data['dt']!r}")
    if not (isinstance(data["duration"], (int, float)) and data["duration"] >= 0.0):
        _fail("duration", f"must be >= 0, got {data['duration']!r}")
    if data["controller_period"] < data["dt"]:
        _fail("controller_period", "must be >= dt")

    data["body"] = _merged({"mass": 10.0, "inertia_diag": [0.2, 0.25, 0.3], "inertia": None},
                           data["body"], "body")
    th_defaults = ({"layout": "default_cube", "u_max": 0.4, "half_size": 0.15}
                   if data["thrusters"].get("layout", "default_cube") == "default_cube"
                   else {"layout": "custom", "positions": None, "directions": None, "u_max": None})
    data["thrusters"] = _merged(th_defaults, data["thrusters"], "thrusters")

    ctrl = data["controller"]
    ctype = ctrl.get("type")
    if ctype == "mpc":
        data["controller"] = {"type": "mpc", **_merged(_MPC_DEFAULTS, {k: v for k, v in ctrl.items() if k != "type"}, "controller")}
    elif ctype == "pd":
        data["controller"] = {"type": "pd", **_merged(_PD_DEFAULTS, {k: v for k, v in ctrl.items() if k != "type"}, "controller")}
    elif ctype == "rl":
        if "checkpoint" not in ctrl:
            _fail("controller.checkpoint", "rl controller requires a checkpoint path")
        data["controller"] = {"type": "rl", "checkpoint": ctrl["checkpoint"]}
    else:
        _fail("controller.type", f"unknown controller type {ctype!r}")

    plan = data["plan"]
    ptype = plan.get("type")
    if ptype == "inspection":
        data["plan"] = {"type": "inspection",
                        **_merged(_INSPECTION_DEFAULTS, {k: v for k, v in plan.items() if k != "type"}, "plan")}
    elif ptype == "docking":
        for key in ("pre_dock", "dock"):
            if key not in plan:
                _fail(f"plan.{key}", "docking plan requires pre_dock and dock poses")
        data["plan"] = {"type": "docking", "pre_dock": plan["pre_dock"], "dock": plan["dock"],
                        **_merged(_DOCKING_DEFAULTS,
                                  {k: v for k, v in plan.items() if k not in ("type", "pre_dock", "dock")},
                                  "plan")}
    elif ptype == "hold":
        data["plan"] = {"type": "hold",
                        **_merged({"r": [0.0, 0.0, 0.0], "q": [1.0, 0.0, 0.0, 0.0]},
                                  {k: v for k, v in plan.items() if k != "type"}, "plan")}
    else:
        _fail("plan.type", f"unknown plan type {ptype!r}")

    if data["contact"] is not None:
        data["contact"] = _merged(_CONTACT_DEFAULTS, data["contact"], "contact")
        if data["contact"]["stiffness"] <= 0.0 or data["contact"]["damping"] < 0.0:
            _fail("contact.stiffness", "require stiffness > 0 and damping >= 0")

    cfg = ScenarioConfig(data=data)

    # construct every typed object once so invalid values fail at load
    try:
        body = cfg.body()
        system = cfg.thrusters()
        cfg.disturbances()
        plan_obj = cfg.make_plan()
        if data["controller"]["type"] == "mpc":
            cfg.mpc_config()
        elif data["controller"]["type"] == "pd":
            cfg.pd_gains()
        if cfg.contact_enabled():
            validate_shape_pairs(cfg.body_shape(), cfg.world_shapes())
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"config validation failed: {exc}") from exc

    n_u = system.n_u
    for i, f in enumerate(cfg.fault_entries()):
        path = f"faults[{i}]"
        if not (0 <= f.thruster < n_u):
            _fail(f"{path}.thruster", f"index {f.thruster} out of range for {n_u} thrusters")
        if not (f.t_on < f.t_off):
            _fail(f"{path}.t_on", f"require t_on < t_off, got [{f.t_on}, {f.t_off}]")
        u_max_i = float(system.u_max[f.thruster])
        try:
            build_fault_model(f, u_max_i, rng=None, dry_run=True)
        except Exception as exc:
            raise ConfigError(f"config field '{path}': {exc}") from exc

    if data["plan"]["type"] == "docking" and not cfg.contact_enabled():
        _fail("contact", "docking plans require a contact section")

    ist = data["initial_state"]
    if not isinstance(ist, dict):
        _fail("initial_state", "must be an object")
    if "at_plan_start" in ist or "randomize" in ist:
        if "randomize" in ist:
            rz = _merged({"pos_center": [0.0, 0.0, 0.0], "pos_halfwidth": [0.5, 0.5, 0.5],
                          "att_max_angle": 0.0, "vel_halfwidth": [0.0, 0.0, 0.0]},
                         ist["randomize"], "initial_state.randomize")
            data["initial_state"] = {"randomize": rz}
    else:
        for key in ("r", "q", "v", "w"):
            if key not in ist:
                _fail(f"initial_state.{key}", "explicit initial state requires r, q, v, w"
                      " (or use {'at_plan_start': true} or a 'randomize' block)")
    return cfg


def build_fault_model(entry: FaultEntry, u_max: float,
                      rng: np.random.Generator | None, dry_run: bool = False) -> FaultModel:
    """Instantiate the concrete per-thruster fault map for one episode.

    gp_sample maps are drawn once per episode from `rng`; other kinds are
    deterministic functions of their parameters.
    """
    kind = entry.kind
    p = entry.params
    if kind == "nominal":
        return FaultModel.nominal(u_max)
    if kind == "stuck_off":
        return FaultModel.stuck_off(u_max)
    if kind == "stuck_on":
        return FaultModel.stuck_on(u_max)
    if kind == "saturation":
        return FaultModel.saturation(float(p.get("u_sat", 0.5 * u_max)), u_max)
    if kind == "faulty_valve":
        if "breakpoints" in p:
            return FaultModel.faulty_valve([tuple(b) for b in p["breakpoints"]], u_max)
        return FaultModel.default_faulty_valve(u_max)
    if kind == "instability":
        return FaultModel.instability(u_max, amplitude=float(p.get("amplitude", 0.2)),
                                      frequency=float(p.get("frequency", 1.0)),
                                      noise_std=float(p["noise_std"]) if "noise_std" in p else None)
    if kind == "gp_sample":
        n_grid = int(p.get("n_grid", 33))
        if dry_run:
            grid = np.linspace(0.0, u_max, n_grid)
            return FaultModel.gp_sample(grid, grid, u_max)
        from .gp import default_fault_map_gp, gp_sample_path

        grid = np.linspace(0.0, u_max, n_grid)
        values = gp_sample_path(default_fault_map_gp(u_max), grid.reshape(-1, 1), rng)
        return FaultModel.gp_sample(grid, np.clip(values, 0.0, u_max), u_max)
    raise ConfigError(f"unknown fault kind {kind!r}")


def serialize_config(cfg: ScenarioConfig) -> str:
    """Canonical single-line JSON for the resolved config."""
    return json.dumps(cfg.data, sort_keys=True, separators=(",", ":"))
