import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from occlp.dynamics import (
    BoxSet, ControlSignal, TOL_CONS, TOL_VIAB, builtin_system, control_grid, enforce_viability,
    integrate, integrate_feedback, system_from_expressions,
)
from occlp.errors import IntegrationError, SystemSpecError, ViabilityError

POLAR = builtin_system("rotation-polar")
CART = builtin_system("rotation-cartesian")


def test_polar_rotation_reaches_theta_zero():
    traj = integrate(POLAR, (0.5, 1.0), ControlSignal.constant(-1.0), 1.0)
    np.testing.assert_allclose(traj.states[-1], (0.5, 0.0), atol=1e-10)


def test_zero_field_keeps_state():
    sysm = system_from_expressions(["0", "0"], "y1^2", BoxSet((-1, -1), (1, 1)), [-1.0, 1.0], 1.0, 2.0, 0.1)
    sig = ControlSignal((0.0, 0.3, 0.7), (1.0, -1.0, 1.0))
    traj = integrate(sysm, (0.2, -0.4), sig, 1.0)
    assert np.all(traj.states == np.array([0.2, -0.4]))


def reference_endpoint(system, y0, u, T, h):
    """Plain scalar RK4 loop, independent of the batched integrator."""
    y = np.array(y0, dtype=float)
    n = int(round(T / h))
    h = T / n
    f = system.f1
    for _ in range(n):
        k1 = f(y, u)
        k2 = f(y + 0.5 * h * k1, u)
        k3 = f(y + 0.5 * h * k2, u)
        k4 = f(y + h * k3, u)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def test_cartesian_quarter_turn_matches_fine_reference():
    T = math.pi / 2
    traj = integrate(CART, (1.0, 0.0), ControlSignal.constant(1.0), T, h_t=1e-2)
    ref = reference_endpoint(CART, (1.0, 0.0), 1.0, T, 1e-4)
    assert np.max(np.abs(traj.states[-1] - ref)) <= 1e-8
    np.testing.assert_allclose(ref, (0.0, -1.0), atol=1e-12)


def test_rk4_order():
    T = 1.0
    exact = np.array([math.cos(T), -math.sin(T)])
    errs = [np.linalg.norm(integrate(CART, (1.0, 0.0), ControlSignal.constant(1.0), T, h_t=h).states[-1] - exact)
            for h in (0.1, 0.05)]
    assert 12 < errs[0] / errs[1] < 20


def test_builtin_examples():
    assert POLAR.k1((1.0, 0.0), 0.3) == 0.0
    np.testing.assert_array_equal(CART.f1((0.0, 0.0), 0.7), (0.0, 0.0))
    assert CART.k1((0.3, 0.4), -0.2) == pytest.approx(0.65, abs=1e-15)
    with pytest.raises(SystemSpecError):
        builtin_system("pendulum")


def test_enforce_viability_examples():
    np.testing.assert_array_equal(enforce_viability(POLAR, (0.5, 0.2), 0.0), (0.5, 0.2))
    np.testing.assert_array_equal(enforce_viability(POLAR, (1.05, 0.0), 0.1), (1.05, 0.0))
    y = enforce_viability(POLAR, (1.2, 0.0), 0.1)
    assert POLAR.dist(y)[0] <= 0.1 + 1e-9
    with pytest.raises(IntegrationError):
        enforce_viability(POLAR, (1.5, 0.0), 0.1)


def test_disk_projection():
    y = enforce_viability(CART, (1.15, 0.0), 0.1)
    assert CART.dist(y)[0] <= 0.1 + 1e-9


def test_violation_reports_first_time():
    with pytest.raises(ViabilityError) as info:
        integrate(POLAR, (0.5, 3.0), ControlSignal.constant(1.0), 1.0)
    assert info.value.time == pytest.approx(0.15, abs=1e-2)


def test_start_outside_rejected():
    with pytest.raises(ViabilityError):
        integrate(POLAR, (1.3, 0.0), ControlSignal.constant(0.0), 1.0)


def test_breakpoint_spacing_check():
    sig = ControlSignal((0.0, 0.501, 0.505), (1.0, -1.0, 1.0))
    with pytest.raises(IntegrationError):
        integrate(POLAR, (0.5, 0.0), sig, 1.0, h_t=1e-2)


def test_signal_validation():
    with pytest.raises(IntegrationError):
        ControlSignal((0.1,), (1.0,))
    with pytest.raises(IntegrationError):
        ControlSignal((0.0, 0.5, 0.5), (1.0, 0.0, 1.0))


def test_bounds_are_checked_at_load():
    with pytest.raises(SystemSpecError, match="Mk"):
        system_from_expressions(["u"], "10*y1", BoxSet((0,), (1,)), [-1.0, 1.0], 1.0, 1.0, 0.1)
    with pytest.raises(SystemSpecError, match="undeclared"):
        system_from_expressions(["u*z"], "0", BoxSet((0,), (1,)), [-1.0, 1.0], 1.0, 1.0, 0.1)


def test_control_grid():
    np.testing.assert_allclose(control_grid(-1, 1, 5), [-1, -0.5, 0, 0.5, 1])


signals = st.lists(st.tuples(st.floats(0.02, 0.5), st.sampled_from(list(CART.control_grid))), min_size=1, max_size=5)


def _signal(parts):
    bps, t = [], 0.0
    for dt, _ in parts:
        bps.append(round(t, 2))
        t += round(dt, 2)
    return ControlSignal(tuple(bps), tuple(u for _, u in parts)), max(t, 0.05)


@settings(max_examples=30, deadline=None)
@given(signals, st.floats(0.0, 0.95), st.floats(-math.pi, math.pi))
def test_cartesian_radius_conserved(parts, rad, ang):
    sig, T = _signal(parts)
    y0 = (rad * math.cos(ang), rad * math.sin(ang))
    traj = integrate(CART, y0, sig, T)
    r2 = np.sum(traj.states ** 2, axis=1)
    assert np.max(np.abs(r2 - rad ** 2)) <= TOL_CONS
    assert np.all(CART.dist(traj.states) <= TOL_VIAB)
    steps = np.linalg.norm(np.diff(traj.states, axis=0), axis=1)
    assert np.all(steps <= CART.M_f * traj.h_t * (1 + 1e-9))


@settings(max_examples=30, deadline=None)
@given(signals, st.floats(0.0, 1.0))
def test_polar_radius_constant(parts, r0):
    sig, T = _signal(parts)
    traj = integrate(POLAR, (r0, 0.0), sig, T, wrap_angles=True)
    assert np.max(np.abs(traj.states[:, 0] - r0)) <= 1e-12
    assert np.all(np.abs(traj.states[:, 1]) <= math.pi + 1e-12)


def test_feedback_integration_reevaluates_each_step():
    traj = integrate_feedback(POLAR, (0.5, 0.5), lambda y: -1.0 if y[1] > 0 else 1.0, 2.0)
    assert np.max(np.abs(traj.states[-1, 1])) <= 1e-2 + 1e-12


def test_trajectory_csv_header():
    traj = integrate(POLAR, (0.5, 0.0), ControlSignal.constant(0.0), 0.05)
    assert traj.to_csv(POLAR.state_names).splitlines()[0] == "t,r,th,u"
