"""Rigid-body core: quaternion algebra, dynamics, RK4 integration."""

import numpy as np
import pytest

from freeflyer.errors import InvalidInputError
from freeflyer.rigid_body import (
    BodyParams,
    State,
    Wrench,
    dynamics,
    quat_derivative,
    quat_exp,
    quat_log,
    quat_multiply,
    quat_normalize,
    quat_slerp,
    quat_to_rotation,
    step,
    step_batch,
)


def random_unit_quat(rng):
    return quat_normalize(rng.standard_normal(4))


def make_body(mass=10.0, diag=(0.2, 0.25, 0.3)):
    return BodyParams.from_diag(mass, diag)


class TestQuatToRotation:
    def test_identity(self):
        R = quat_to_rotation(np.array([1.0, 0.0, 0.0, 0.0]))
        assert np.array_equal(R, np.eye(3))

    def test_quarter_turn_about_z(self):
        c = np.cos(np.pi / 4)
        q = np.array([c, 0.0, 0.0, np.sin(np.pi / 4)])
        R = quat_to_rotation(q)
        np.testing.assert_allclose(R @ np.array([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], atol=1e-12)

    def test_orthonormality_random(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            R = quat_to_rotation(random_unit_quat(rng))
            np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
            assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)

    def test_rejects_non_unit(self):
        with pytest.raises(InvalidInputError):
            quat_to_rotation(np.array([1.0, 0.1, 0.0, 0.0]))


class TestQuatDerivative:
    def test_zero_rate(self):
        rng = np.random.default_rng(3)
        q = random_unit_quat(rng)
        assert np.array_equal(quat_derivative(q, np.zeros(3)), np.zeros(4))

    def test_identity_spin_about_z(self):
        # hand expansion of H at identity, cross-checked against a finite
        # difference of axis-angle propagation q(t) = q0 * exp(t w / 2)
        omega = 0.7
        q0 = np.array([1.0, 0.0, 0.0, 0.0])
        qd = quat_derivative(q0, np.array([0.0, 0.0, omega]))
        np.testing.assert_allclose(qd, [0.0, 0.0, 0.0, omega / 2.0], atol=1e-15)

        h = 1e-6
        w = np.array([0.0, 0.0, omega])
        fd = (quat_multiply(q0, quat_exp(w * h)) - quat_multiply(q0, quat_exp(-w * h))) / (2 * h)
        np.testing.assert_allclose(qd, fd, atol=1e-9)

    def test_axis_angle_finite_difference_random(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            q = random_unit_quat(rng)
            w = rng.standard_normal(3)
            h = 1e-6
            fd = (quat_multiply(q, quat_exp(w * h)) - quat_multiply(q, quat_exp(-w * h))) / (2 * h)
            np.testing.assert_allclose(quat_derivative(q, w), fd, atol=1e-9)

    def test_tangency(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            q = random_unit_quat(rng)
            w = rng.standard_normal(3)
            assert abs(q @ quat_derivative(q, w)) < 1e-12


class TestQuatLogExp:
    def test_round_trip(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            phi = rng.standard_normal(3)
            phi *= rng.uniform(0, 3.0) / max(np.linalg.norm(phi), 1e-12)
            np.testing.assert_allclose(quat_log(quat_exp(phi)), phi, atol=1e-10)

    def test_slerp_midpoint_matches_quaternion_power(self):
        rng = np.random.default_rng(13)
        q0 = random_unit_quat(rng)
        q1 = random_unit_quat(rng)
        mid = quat_slerp(q0, q1, 0.5)
        rel = quat_multiply(np.array([q0[0], -q0[1], -q0[2], -q0[3]]), q1)
        expected = quat_multiply(q0, quat_exp(0.5 * quat_log(rel)))
        np.testing.assert_allclose(np.abs(mid @ expected), 1.0, atol=1e-12)


class TestDynamics:
    def test_equilibrium(self):
        body = make_body()
        xd = dynamics(State.identity(), body, Wrench.zero())
        assert np.array_equal(xd, np.zeros(13))

    def test_newtons_second_law(self):
        body = make_body(mass=10.0)
        xd = dynamics(State.identity(), body, Wrench(np.array([10.0, 0.0, 0.0]), np.zeros(3)))
        np.testing.assert_allclose(xd[7:10], [1.0, 0.0, 0.0], atol=1e-15)

    def test_spherical_body_has_no_gyroscopic_torque(self):
        body = BodyParams.from_diag(2.0, (0.4, 0.4, 0.4))
        st = State(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3), np.array([0.3, -0.2, 0.5]))
        xd = dynamics(st, body, Wrench.zero())
        np.testing.assert_allclose(xd[10:13], 0.0, atol=1e-15)

    def test_body_frame_velocity_coupling(self):
        # w x v term must be live when velocity is carried in the body frame
        body = make_body()
        st = State(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]),
                   np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0]))
        xd = dynamics(st, body, Wrench.zero())
        np.testing.assert_allclose(xd[7:10], -np.cross([0.0, 0.0, 1.0], [1.0, 0.0, 0.0]), atol=1e-15)


class TestStep:
    def test_rest_fixed_point(self):
        body = make_body()
        st = step(State.identity(), body, Wrench.zero(), 0.02)
        assert np.array_equal(st.as_vector(), State.identity().as_vector())

    def test_constant_force_closed_form(self):
        body = make_body(mass=10.0)
        wrench = Wrench(np.array([0.5, 0.0, 0.0]), np.zeros(3))
        st = State.identity()
        dt, n = 0.02, 250
        for _ in range(n):
            st = step(st, body, wrench, dt)
        t_total = dt * n
        assert np.linalg.norm(st.v_B) == pytest.approx(0.5 * t_total / 10.0, abs=1e-9)
        # constant acceleration: r = a t^2 / 2, exact for RK4 on linear dynamics
        assert st.r_I[0] == pytest.approx(0.5 * 0.05 * t_total**2, abs=1e-9)

    def test_deterministic_bit_identical(self):
        body = make_body()
        st = State(np.array([0.1, -0.2, 0.3]), quat_normalize([0.9, 0.1, -0.2, 0.3]),
                   np.array([0.05, 0.01, -0.02]), np.array([0.3, -0.1, 0.2]))
        wrench = Wrench(np.array([0.1, -0.05, 0.2]), np.array([0.01, 0.02, -0.01]))
        a = step(st, body, wrench, 0.02).as_vector()
        b = step(st, body, wrench, 0.02).as_vector()
        assert np.array_equal(a, b)

    def test_rejects_bad_dt(self):
        body = make_body()
        with pytest.raises(InvalidInputError):
            step(State.identity(), body, Wrench.zero(), 0.0)
        with pytest.raises(InvalidInputError):
            step(State.identity(), body, Wrench.zero(), 0.2)

    def test_quaternion_norm_after_steps(self):
        body = make_body()
        st = State(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3), np.array([0.9, -0.7, 0.5]))
        for _ in range(200):
            st = step(st, body, Wrench.zero(), 0.02)
            assert abs(np.linalg.norm(st.q_IB) - 1.0) < 1e-9


class TestConservation:
    """Free-flight conservation laws over 512 steps at dt = 0.02."""

    def run_tumble(self, w0, v0, dt=0.02, n=512):
        body = make_body()
        st = State(np.zeros(3), quat_normalize([0.8, 0.2, -0.3, 0.4]),
                   np.asarray(v0, dtype=float), np.asarray(w0, dtype=float))
        hist = [st]
        for _ in range(n):
            st = step(st, body, Wrench.zero(), dt)
            hist.append(st)
        return body, hist

    def test_linear_momentum(self):
        body, hist = self.run_tumble(w0=[0.3, -0.2, 0.4], v0=[0.05, -0.03, 0.02])
        p0 = body.mass * hist[0].rotation() @ hist[0].v_B
        for st in hist[1:]:
            p = body.mass * st.rotation() @ st.v_B
            assert np.linalg.norm(p - p0) / np.linalg.norm(p0) < 1e-9

    def test_angular_momentum_and_energy(self):
        body, hist = self.run_tumble(w0=[0.6, -0.5, 0.8], v0=[0.0, 0.0, 0.0])
        h0 = hist[0].rotation() @ (body.inertia @ hist[0].w_B)
        e0 = 0.5 * hist[0].w_B @ body.inertia @ hist[0].w_B
        for st in hist[1:]:
            h = st.rotation() @ (body.inertia @ st.w_B)
            e = 0.5 * st.w_B @ body.inertia @ st.w_B
            assert np.linalg.norm(h - h0) / np.linalg.norm(h0) < 1e-6
            assert abs(e - e0) / e0 < 1e-6

    def test_tumble_matches_fine_step_reference(self):
        body, hist = self.run_tumble(w0=[0.6, -0.5, 0.8], v0=[0.02, 0.0, -0.01], n=128)
        ref = hist[0]
        for _ in range(128 * 10):
            ref = step(ref, body, Wrench.zero(), 0.002)
        np.testing.assert_allclose(hist[-1].as_vector(), ref.as_vector(), atol=1e-8)


class TestFiniteDifferenceConsistency:
    def test_central_difference_order(self):
        """(step(x,dt) - step(x,-dt)) / 2dt converges to dynamics(x) at order >= 1.9."""
        body = make_body()
        st = State(np.array([0.1, 0.0, -0.1]), quat_normalize([0.9, 0.1, -0.2, 0.3]),
                   np.array([0.2, -0.1, 0.15]), np.array([0.8, -0.6, 0.9]))
        wrench = Wrench(np.array([0.3, -0.2, 0.1]), np.array([0.05, -0.03, 0.02]))
        xd = dynamics(st, body, wrench)

        errs = []
        for dt in (1e-2, 1e-3):
            fd = (step(st, body, wrench, dt).as_vector()
                  - step(st, body, wrench, -dt).as_vector()) / (2 * dt)
            errs.append(np.linalg.norm(fd - xd))
        order = np.log10(errs[0] / errs[1])
        assert order >= 1.9


class TestBatchedStep:
    def test_matches_single_step(self):
        rng = np.random.default_rng(21)
        body = make_body()
        X = np.stack([
            np.concatenate([rng.standard_normal(3), random_unit_quat(rng),
                            0.1 * rng.standard_normal(3), rng.standard_normal(3)])
            for _ in range(16)
        ])
        F = 0.5 * rng.standard_normal((16, 3))
        T = 0.1 * rng.standard_normal((16, 3))
        out = step_batch(X, F, T, body.mass, body.inertia, body.inertia_inv, 0.02)
        for i in range(16):
            single = step(State.from_vector(X[i]), body, Wrench(F[i], T[i]), 0.02)
            np.testing.assert_allclose(out[i], single.as_vector(), rtol=0, atol=1e-14)


class TestBodyParamsValidation:
    def test_rejects_nonpositive_mass(self):
        with pytest.raises(InvalidInputError):
            BodyParams.from_diag(0.0, (1, 1, 1))

    def test_rejects_asymmetric_inertia(self):
        I = np.array([[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        with pytest.raises(InvalidInputError):
            BodyParams(mass=1.0, inertia=I)

    def test_rejects_indefinite_inertia(self):
        with pytest.raises(InvalidInputError):
            BodyParams.from_diag(1.0, (1.0, -0.1, 1.0))
