"""Nonlinear plant, attitude loop, and simulation harness plumbing.

Closed-form physics (hover balance, ballistic fall, constant-torque
spin) pin the dynamics; the RK4 step is checked for its convergence
order against a tight-tolerance scipy reference solution.
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import solve_ivp

from ictrack import presets
from ictrack.plant import (
    AttitudePid,
    PlantError,
    UavParams,
    dynamics_deriv,
    integrate_step,
    outer_to_inner,
    simulate,
)

HOVER_THRUST = presets.MASS * presets.GRAVITY  # 0.2943 N


class ConstantController:
    """Duck-typed stand-in commanding a fixed acceleration."""

    def __init__(self, u=0.0, n_prev=2, flags=(), c_star=None,
                 region="", solve_time=0.0):
        self.u = u
        self.n_prev = n_prev
        self._flags = list(flags)
        self._c_star = c_star
        self._region = region
        self.solve_time = solve_time

    def step(self, k, x, window):
        return self

    @property
    def c_star(self):
        return self._c_star

    @property
    def region(self):
        return self._region

    @property
    def flags(self):
        return list(self._flags)


class ZeroTrajectory:
    def preview_window(self, k, n, ts):
        return np.zeros((n + 1, 4))


class TestParams:
    def test_defaults_are_consistent(self):
        p = UavParams()
        assert p.mass == pytest.approx(0.03)
        assert p.thrust_min < HOVER_THRUST < p.thrust_max

    def test_rejects_nonpositive_values(self):
        with pytest.raises(PlantError, match="positive"):
            UavParams(mass=0.0)
        with pytest.raises(PlantError, match="positive"):
            UavParams(inertia_x=-1e-5)

    def test_rejects_bad_thrust_range(self):
        with pytest.raises(PlantError, match="thrust range"):
            UavParams(thrust_min=0.7)
        with pytest.raises(PlantError, match="thrust range"):
            UavParams(thrust_min=-0.1)


class TestDynamics:
    def test_hover_is_an_equilibrium(self):
        p = UavParams()
        deriv = dynamics_deriv(np.zeros(6), HOVER_THRUST, 0.0, p)
        assert np.max(np.abs(deriv)) <= 1e-12
        state = np.zeros(6)
        for _ in range(100):
            state = integrate_step(state, HOVER_THRUST, 0.0, 1e-3, p)
        assert np.max(np.abs(state)) <= 1e-12

    def test_rolled_hover_thrust_tilts_gravity(self):
        p = UavParams()
        state = np.zeros(6)
        state[4] = math.radians(30.0)
        deriv = dynamics_deriv(state, HOVER_THRUST, 0.0, p)
        assert deriv[1] == pytest.approx(-p.gravity * 0.5, abs=1e-12)
        assert deriv[3] == pytest.approx(p.gravity * (math.sqrt(3) / 2 - 1),
                                         abs=1e-12)

    def test_free_fall_matches_ballistic_solution(self):
        p = UavParams()
        state = np.zeros(6)
        for _ in range(1000):
            state = integrate_step(state, 0.0, 0.0, 1e-3, p)
        assert state[3] == pytest.approx(-p.gravity, abs=1e-9)
        assert state[2] == pytest.approx(-0.5 * p.gravity, abs=1e-9)
        assert np.max(np.abs(state[[0, 1, 4, 5]])) == 0.0

    def test_constant_torque_spins_quadratically(self):
        p = UavParams()
        tau = 2e-5
        state = np.zeros(6)
        for _ in range(100):
            state = integrate_step(state, HOVER_THRUST, tau, 1e-3, p)
        t = 0.1
        alpha = tau / p.inertia_x
        assert state[5] == pytest.approx(alpha * t, rel=1e-9)
        # phi(t) = alpha t^2 / 2 only while sin(phi) barely moves y
        assert state[4] == pytest.approx(0.5 * alpha * t * t, rel=1e-6)

    def test_thrust_is_clamped_in_the_derivative(self):
        p = UavParams()
        hi = dynamics_deriv(np.zeros(6), 10.0, 0.0, p)
        assert hi[3] == pytest.approx(p.thrust_max / p.mass - p.gravity)
        lo = dynamics_deriv(np.zeros(6), -5.0, 0.0, p)
        assert lo[3] == pytest.approx(-p.gravity)

    def test_rk4_against_reference_integrator(self):
        p = UavParams()
        x0 = np.array([0.0, 0.3, 0.0, -0.2, 0.4, 2.0])
        thrust, tau = 0.45, 2e-5

        def fun(_, s):
            return dynamics_deriv(s, thrust, tau, p)

        ref = solve_ivp(fun, (0.0, 0.01), x0, rtol=1e-12, atol=1e-14)
        state = integrate_step(x0, thrust, tau, 0.01, p)
        assert_allclose(state, ref.y[:, -1], atol=1e-10)

    def test_rk4_convergence_is_fourth_order(self):
        p = UavParams()
        x0 = np.array([0.0, 0.3, 0.0, -0.2, 0.4, 2.0])
        thrust, tau = 0.45, 2e-5

        def fun(_, s):
            return dynamics_deriv(s, thrust, tau, p)

        ref = solve_ivp(fun, (0.0, 0.04), x0, rtol=1e-13, atol=1e-15).y[:, -1]

        def global_err(h, steps):
            s = x0.copy()
            for _ in range(steps):
                s = integrate_step(s, thrust, tau, h, p)
            return np.max(np.abs(s - ref))

        ratio = global_err(0.02, 2) / global_err(0.01, 4)
        assert 10.0 < ratio < 24.0

    def test_step_validation(self):
        p = UavParams()
        with pytest.raises(PlantError, match="positive"):
            integrate_step(np.zeros(6), HOVER_THRUST, 0.0, 0.0, p)
        # position/velocity near the float ceiling overflow the update
        huge = np.array([1.79e308, 1.79e308, 0.0, 0.0, 0.0, 0.0])
        with np.errstate(over="ignore"):
            with pytest.raises(PlantError, match="non-finite"):
                integrate_step(huge, HOVER_THRUST, 0.0, 10.0, p)


class TestOuterToInner:
    def test_linearized_roll_map(self):
        p = UavParams()
        phi_bar, thrust, flags = outer_to_inner(0.981, 0.0, p)
        assert phi_bar == pytest.approx(-0.1, abs=1e-12)
        assert thrust == pytest.approx(HOVER_THRUST, abs=1e-12)
        assert flags == []

    def test_roll_setpoint_saturates(self):
        p = UavParams()
        phi_bar, _, flags = outer_to_inner(-9.81, 0.0, p)
        assert phi_bar == pytest.approx(p.roll_limit)
        assert flags == ["sat_roll"]

    def test_thrust_saturates_both_ways(self):
        p = UavParams()
        _, thrust, flags = outer_to_inner(0.0, 11.0, p)
        assert thrust == p.thrust_max
        assert flags == ["sat_thrust"]
        _, thrust, flags = outer_to_inner(0.0, -15.0, p)
        assert thrust == p.thrust_min
        assert flags == ["sat_thrust"]

    def test_rejects_non_finite_commands(self):
        p = UavParams()
        with pytest.raises(PlantError, match="non-finite"):
            outer_to_inner(float("nan"), 0.0, p)
        with pytest.raises(PlantError, match="non-finite"):
            outer_to_inner(0.0, float("inf"), p)


class TestAttitudePid:
    def test_first_step_works_on_error_difference(self):
        pid = AttitudePid()
        tau = pid.step(0.1, 0.0)
        assert tau == pytest.approx(0.33000001, abs=1e-12)
        # repeated error: the derivative term drops out
        tau = pid.step(0.1, 0.0)
        assert tau == pytest.approx(0.03000002, abs=1e-12)

    def test_reset_restores_initial_behavior(self):
        pid = AttitudePid()
        first = pid.step(0.1, 0.0)
        pid.step(0.05, 0.01)
        pid.reset()
        assert pid.step(0.1, 0.0) == pytest.approx(first, abs=1e-15)

    def test_zero_error_gives_zero_torque(self):
        pid = AttitudePid()
        assert pid.step(0.0, 0.0) == 0.0

    def test_rejects_nonpositive_period(self):
        with pytest.raises(PlantError, match="positive"):
            AttitudePid(ts=0.0)


class TestSimulate:
    def test_hover_stays_at_the_origin(self):
        trace = simulate(ConstantController(0.0), ConstantController(0.0),
                         ZeroTrajectory(), 0.5)
        assert len(trace) == 51
        assert not trace.aborted
        for col in (trace.y, trace.dy, trace.z, trace.dz,
                    trace.phi, trace.dphi):
            assert np.max(np.abs(col)) <= 1e-12
        assert_allclose(trace.thrust, HOVER_THRUST, atol=1e-15)
        assert_allclose(trace.t, np.arange(51) * 0.01, atol=1e-12)
        # the final sample is evaluated but never applied
        assert math.isnan(trace.tau[-1])
        assert np.all(np.isfinite(trace.tau[:-1]))

    def test_free_fall_through_the_closed_loop(self):
        # commanding the gravity acceleration exactly cancels the thrust
        trace = simulate(ConstantController(0.0),
                         ConstantController(-presets.GRAVITY),
                         ZeroTrajectory(), 1.0,
                         params=UavParams(thrust_min=0.0))
        assert_allclose(trace.thrust, 0.0, atol=1e-15)
        assert trace.dz[-1] == pytest.approx(-presets.GRAVITY, abs=1e-9)
        assert trace.z[-1] == pytest.approx(-0.5 * presets.GRAVITY, abs=1e-9)
        assert np.max(np.abs(trace.phi)) == 0.0

    def test_records_controller_outputs_per_axis(self):
        cy = ConstantController(0.2, flags=["clamp"], c_star=0.25,
                                region="low", solve_time=2.5e-4)
        cz = ConstantController(-0.1, c_star=None, region="")
        trace = simulate(cy, cz, ZeroTrajectory(), 0.05)
        assert_allclose(trace.ay_cmd, 0.2)
        assert_allclose(trace.az_cmd, -0.1)
        assert_allclose(trace.c_star_y, 0.25)
        assert np.all(np.isnan(trace.c_star_z))
        assert trace.region_y == ["low"] * 6
        assert trace.region_z == [""] * 6
        assert all("clamp_y" in f for f in trace.flags)
        assert not any("clamp_z" in f for f in trace.flags)
        assert_allclose(trace.solve_time_y, 2.5e-4, atol=1e-15)
        assert np.all(trace.solve_time_z > 0.0)
        assert_allclose(trace.phi_bar, -0.2 / presets.GRAVITY, atol=1e-15)

    def test_saturation_flags_propagate(self):
        trace = simulate(ConstantController(-50.0), ConstantController(0.0),
                         ZeroTrajectory(), 0.02)
        assert "sat_roll" in trace.flags[0]

    def test_roll_excursion_is_flagged(self):
        x0 = np.zeros(6)
        x0[4] = 0.6  # past the roll limit but below the divergence cut
        trace = simulate(ConstantController(0.0), ConstantController(0.0),
                         ZeroTrajectory(), 0.02, x0=x0)
        assert "roll_limit" in trace.flags[0]

    def test_divergent_initial_state_aborts_immediately(self):
        x0 = np.zeros(6)
        x0[4] = 1.6
        trace = simulate(ConstantController(0.0), ConstantController(0.0),
                         ZeroTrajectory(), 0.1, x0=x0)
        assert trace.aborted
        assert len(trace) == 0
        assert "divergence" in trace.abort_reason

    def test_mid_run_divergence_keeps_partial_trace(self):
        # a zero-gain attitude loop lets a slow roll drift through pi/2
        x0 = np.zeros(6)
        x0[5] = 2.0
        trace = simulate(ConstantController(0.0), ConstantController(0.0),
                         ZeroTrajectory(), 1.0, x0=x0,
                         pid=AttitudePid(kp=0.0, kd=0.0, ki=0.0))
        assert trace.aborted
        assert 0 < len(trace) < 101
        assert "divergence" in trace.abort_reason
        assert np.all(np.isfinite(trace.phi))

    def test_axis_views(self):
        trace = simulate(ConstantController(0.0), ConstantController(0.0),
                         ZeroTrajectory(), 0.02)
        assert trace.axis_states("y").shape == (3, 2)
        assert trace.axis_commands("z").shape == (3,)
        with pytest.raises(PlantError, match="unknown axis"):
            trace.axis_states("x")
        with pytest.raises(PlantError, match="unknown axis"):
            trace.axis_commands("w")

    def test_validates_setup(self):
        cy, cz = ConstantController(0.0), ConstantController(0.0)
        with pytest.raises(PlantError, match="duration"):
            simulate(cy, cz, ZeroTrajectory(), 0.0)
        with pytest.raises(PlantError, match="rate ratio"):
            simulate(cy, cz, ZeroTrajectory(), 0.1, ts_inner=0.002)
        with pytest.raises(PlantError, match="multiple of the outer"):
            simulate(cy, cz, ZeroTrajectory(), 0.015)
        with pytest.raises(PlantError, match="six entries"):
            simulate(cy, cz, ZeroTrajectory(), 0.1, x0=np.zeros(4))
