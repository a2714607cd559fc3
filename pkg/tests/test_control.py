"""PD and MPC pose tracking, attitude error, effort metric, GP residual."""

import numpy as np
import pytest

from freeflyer.actuation import ThrusterSystem, default_thruster_system, mix
from freeflyer.control import (
    ControlOutput,
    MpcConfig,
    MpcController,
    PdGains,
    Setpoint,
    attitude_error,
    control_effort,
    mpc_control,
    pd_control,
)
from freeflyer.gp import gp_fit
from freeflyer.rigid_body import (
    BodyParams,
    State,
    Wrench,
    quat_exp,
    quat_from_rotation,
    quat_multiply,
    quat_normalize,
    quat_to_rotation,
    step,
)

BODY = BodyParams.from_diag(10.0, (0.2, 0.25, 0.3))
SYSTEM = default_thruster_system()
IDENTITY_Q = np.array([1.0, 0.0, 0.0, 0.0])


def one_axis_system(u_max=1.0):
    """Two opposing thrusters through the CoM along x (pure 1-D translation)."""
    return ThrusterSystem(np.zeros((2, 3)),
                          np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]),
                          np.array([u_max, u_max]))


class TestAttitudeError:
    def test_zero_at_reference(self):
        rng = np.random.default_rng(2)
        q = quat_normalize(rng.standard_normal(4))
        np.testing.assert_allclose(attitude_error(q, q), 0.0, atol=1e-12)

    def test_quarter_turn(self):
        q = quat_exp(np.array([0.0, 0.0, np.pi / 2]))
        np.testing.assert_allclose(attitude_error(q, IDENTITY_Q), [0.0, 0.0, np.pi / 2], atol=1e-12)

    def test_matches_geodesic_angle(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            q1 = quat_normalize(rng.standard_normal(4))
            q2 = quat_normalize(rng.standard_normal(4))
            err = attitude_error(q1, q2)
            geo = 2.0 * np.arccos(min(abs(q1 @ q2), 1.0))
            assert np.linalg.norm(err) == pytest.approx(geo, abs=1e-10)


class TestPdControl:
    def test_zero_error_zero_command(self):
        sp = Setpoint.hold(np.zeros(3), IDENTITY_Q)
        out = pd_control(State.identity(), sp, PdGains(), SYSTEM)
        np.testing.assert_allclose(out.u, 0.0, atol=1e-9)
        np.testing.assert_allclose(out.wrench_desired.force_B, 0.0, atol=1e-12)

    def test_proportional_force(self):
        gains = PdGains(kp_pos=0.5, kd_vel=1.0, kp_att=0.4, kd_rate=1.0)
        sp = Setpoint.hold(np.array([0.2, 0.0, 0.0]), IDENTITY_Q)
        out = pd_control(State.identity(), sp, gains, SYSTEM)
        np.testing.assert_allclose(out.wrench_desired.force_B, [0.1, 0.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(out.wrench_desired.torque_B, 0.0, atol=1e-12)

    def test_commands_respect_box(self):
        sp = Setpoint.hold(np.array([50.0, -20.0, 10.0]), quat_exp(np.array([1.0, 0.5, -0.3])))
        out = pd_control(State.identity(), sp, PdGains(), SYSTEM)
        assert np.all(out.u >= -1e-12) and np.all(out.u <= SYSTEM.u_max + 1e-12)

    def test_critically_damped_no_overshoot(self):
        """kp=1, kd=2 on a unit mass: e(t) = -(1+t)e^-t, no overshoot."""
        body = BodyParams.from_diag(1.0, (0.01, 0.01, 0.01))
        system = one_axis_system(u_max=5.0)
        gains = PdGains(kp_pos=1.0, kd_vel=2.0, kp_att=0.1, kd_rate=0.1)
        sp = Setpoint.hold(np.zeros(3), IDENTITY_Q)
        st = State(np.array([-1.0, 0.0, 0.0]), IDENTITY_Q, np.zeros(3), np.zeros(3))
        dt = 0.02
        errs = [abs(st.r_I[0])]
        for _ in range(500):
            out = pd_control(st, sp, gains, system)
            st = step(st, body, mix(system, out.u), dt)
            errs.append(abs(st.r_I[0]))
            assert st.r_I[0] <= 1e-6  # never crosses the setpoint
        diffs = np.diff(errs)
        assert np.all(diffs <= 1e-9)  # |e| monotone decreasing
        assert errs[-1] < 5e-3

    def test_frame_equivariance(self):
        """Rotating both state and setpoint leaves the body wrench unchanged."""
        rng = np.random.default_rng(8)
        gains = PdGains()
        st = State(np.array([0.3, -0.2, 0.5]), quat_normalize(rng.standard_normal(4)),
                   np.array([0.1, 0.05, -0.08]), np.array([0.2, -0.1, 0.3]))
        sp = Setpoint(np.array([-0.1, 0.4, 0.2]), quat_normalize(rng.standard_normal(4)),
                      np.array([0.02, -0.01, 0.0]), np.array([0.0, 0.1, -0.05]))
        base = pd_control(st, sp, gains, SYSTEM)

        q_w = quat_normalize(rng.standard_normal(4))
        Rw = quat_to_rotation(q_w)
        st2 = State(Rw @ st.r_I, quat_multiply(q_w, st.q_IB), st.v_B, st.w_B)
        sp2 = Setpoint(Rw @ sp.r_ref, quat_multiply(q_w, sp.q_ref), sp.v_ref, sp.w_ref)
        rotated = pd_control(st2, sp2, gains, SYSTEM)
        np.testing.assert_allclose(rotated.wrench_desired.force_B, base.wrench_desired.force_B, atol=1e-10)
        np.testing.assert_allclose(rotated.wrench_desired.torque_B, base.wrench_desired.torque_B, atol=1e-10)


class TestControlEffort:
    def test_empty(self):
        assert control_effort(np.zeros((0, 12)), 0.02) == 0.0

    def test_all_zero(self):
        assert control_effort(np.zeros((10, 12)), 0.02) == 0.0

    def test_constant_l1(self):
        u = np.full((25, 4), 0.5)  # ||u||_1 = 2 per step
        assert control_effort(u, 0.02) == pytest.approx(2.0, abs=1e-12)

    def test_hand_sum_fixture(self):
        u = np.array([[0.1, -0.2], [0.0, 0.3], [0.4, 0.1]])
        expected = (0.3 + 0.3 + 0.5) / 3.0
        assert control_effort(u, 0.1) == pytest.approx(expected, abs=1e-12)


class TestMpc:
    def test_at_reference_regularized_zero(self):
        sp = Setpoint.hold(np.zeros(3), IDENTITY_Q)
        out = mpc_control(State.identity(), [sp], MpcConfig(horizon=8), BODY, SYSTEM)
        assert np.linalg.norm(SYSTEM.mixer @ out.u) <= 1e-6

    def test_one_dim_instance_matches_dense_qp(self):
        """Translation-only MPC equals a bounded least-squares oracle in cost."""
        from scipy.optimize import lsq_linear

        body = BodyParams.from_diag(1.0, (0.01, 0.01, 0.01))
        system = one_axis_system(u_max=1.0)
        cfg = MpcConfig(horizon=10, dt=0.1, q_pos=10.0, q_att=5.0, q_vel=1.0,
                        q_rate=1.0, r_u=0.1, max_iters=10, tol=1e-12, qp_iters=4000)
        x0 = State(np.array([0.5, 0.0, 0.0]), IDENTITY_Q, np.zeros(3), np.zeros(3))
        sp = Setpoint.hold(np.zeros(3), IDENTITY_Q)
        ctrl = MpcController(cfg, body, system)
        out = ctrl.control(x0, [sp])

        # oracle: exact discrete double integrator (RK4 is exact here)
        H, dt = cfg.horizon, cfg.dt
        n_var = 2 * H
        # position/velocity of stage k as affine functions of U
        Pos = np.zeros((H, n_var))
        Vel = np.zeros((H, n_var))
        p_ic = np.empty(H)
        v_ic = np.empty(H)
        p, v = 0.5, 0.0
        for k in range(H):
            p, v = p + v * dt, v
            p_ic[k], v_ic[k] = p, v
        for j in range(H):  # unit accel at stage j, u_plus column 2j, u_minus 2j+1
            p, v = 0.0, 0.0
            for k in range(H):
                a = 1.0 if k == j else 0.0
                p, v = p + v * dt + 0.5 * a * dt * dt, v + a * dt
                Pos[k, 2 * j] = p
                Vel[k, 2 * j] = v
            Pos[:, 2 * j + 1] = -Pos[:, 2 * j]
            Vel[:, 2 * j + 1] = -Vel[:, 2 * j]
        A_ls = np.vstack([
            np.sqrt(cfg.q_pos) * Pos,
            np.sqrt(cfg.q_vel) * Vel,
            np.sqrt(cfg.r_u) * np.eye(n_var),
        ])
        b_ls = -np.concatenate([np.sqrt(cfg.q_pos) * p_ic, np.sqrt(cfg.q_vel) * v_ic, np.zeros(n_var)])
        ref = lsq_linear(A_ls, b_ls, bounds=(0.0, 1.0), tol=1e-14)
        oracle_cost = float(np.sum((A_ls @ ref.x - b_ls) ** 2))
        assert out.cost == pytest.approx(oracle_cost, abs=1e-4)

    def test_cost_non_increasing_across_sqp_iterations(self):
        sp = Setpoint.hold(np.array([1.0, -0.5, 0.3]), quat_exp(np.array([0.0, 0.0, 0.5])))
        ctrl = MpcController(MpcConfig(horizon=10, max_iters=5), BODY, SYSTEM)
        st = State(np.zeros(3), IDENTITY_Q, np.zeros(3), np.zeros(3))
        ctrl.control(st, [sp])
        hist = ctrl.last_cost_history
        assert len(hist) >= 2
        assert all(b < a for a, b in zip(hist, hist[1:]))

    def test_commands_respect_box(self):
        sp = Setpoint.hold(np.array([5.0, 5.0, 5.0]), IDENTITY_Q)
        out = mpc_control(State.identity(), [sp], MpcConfig(horizon=6), BODY, SYSTEM)
        assert np.all(out.u >= 0.0) and np.all(out.u <= SYSTEM.u_max)

    def test_closed_loop_step_setpoint(self):
        """1 m step: steady-state position error <= 0.05 m under nominal dynamics."""
        cfg = MpcConfig(horizon=12, dt=0.1)
        ctrl = MpcController(cfg, BODY, SYSTEM)
        sp = Setpoint.hold(np.array([1.0, 0.0, 0.0]), IDENTITY_Q)
        st = State.identity()
        dt, n_ctrl = 0.02, 5
        u = np.zeros(SYSTEM.n_u)
        for i in range(int(60.0 / dt)):
            if i % n_ctrl == 0:
                u = ctrl.control(st, [sp], t=i * dt).u
            st = step(st, BODY, mix(SYSTEM, u), dt)
        assert np.linalg.norm(st.r_I - sp.r_ref) <= 0.05
        assert np.linalg.norm(st.v_B) <= 0.02


class TestGpResidualMpc:
    def test_residual_shrinks_prediction_error(self):
        """Residual fitted on biased-mass mismatch improves open-loop prediction."""
        rng = np.random.default_rng(12)
        body_model = BodyParams.from_diag(10.0, (0.2, 0.25, 0.3))
        body_true = BodyParams.from_diag(12.0, (0.2, 0.25, 0.3))
        cfg = MpcConfig(horizon=10, dt=0.1)

        # residual samples over the command box: a_true - a_pred per axis
        samples_u = rng.uniform(0.0, 0.4, size=(25, SYSTEM.n_u))
        forces = samples_u @ SYSTEM.mixer[0:3, :].T
        a_pred = forces / body_model.mass
        a_true = forces / body_true.mass
        res = a_true - a_pred
        models = [gp_fit(a_pred[:, ax].reshape(-1, 1), res[:, ax], lengthscale=[0.05],
                         signal_var=0.01 ** 2, noise_var=1e-12) for ax in range(3)]

        plain = MpcController(cfg, body_model, SYSTEM)
        with_res = MpcController(cfg, body_model, SYSTEM, residual=models)

        U = rng.uniform(0.0, 0.4, size=(cfg.horizon, SYSTEM.n_u))
        x0 = State.identity().as_vector()
        truth = MpcController(cfg, body_true, SYSTEM).predict_trajectory(x0, U)
        pred_plain = plain.predict_trajectory(x0, U)
        pred_res = with_res.predict_trajectory(x0, U)
        err_plain = np.linalg.norm(pred_plain[-1, 0:3] - truth[-1, 0:3])
        err_res = np.linalg.norm(pred_res[-1, 0:3] - truth[-1, 0:3])
        assert err_res < err_plain
