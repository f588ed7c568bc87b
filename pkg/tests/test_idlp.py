import math

import numpy as np
import pytest

from occlp.basis import Basis, ExprFunction, ZeroFunction, basis_for_system, fd_gradient, monomial_basis
from occlp.dynamics import BoxSet, ControlSignal, builtin_system, integrate, system_from_expressions
from occlp.errors import OccLPError
from occlp.idlp import (
    Certificate, FeedbackLaw, aux_w_lp, build_primal, closed_form_certificate, closed_loop_rollout,
    extract_certificate, kstar_perturbed_sweep, w_value_check, make_discretization, optimality_residual,
    refine_eta, rotation_certificate, solve_kstar, synthesize_feedback, verify_certificate, alt_maximizer_check,
)
from occlp.occupation import w_residual
from occlp.values import cesaro_value_dp

POLAR = builtin_system("rotation-polar")
NAMES = ("r", "th")
BOX = BoxSet((0.0, -math.pi), (1.0, math.pi))
Y0 = (0.5, 1.0)


def v_limit(Y):
    return (1 - np.atleast_2d(Y)[:, 0]) ** 2


@pytest.fixture(scope="module")
def cap_solve():
    disc = make_discretization(POLAR, Y0)
    return solve_kstar(POLAR, disc)


@pytest.fixture(scope="module")
def closed():
    return rotation_certificate(Y0)


# ---------------------------------------------------------------------------
# basis


def test_basis_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    cases = [(basis_for_system(POLAR, 4), rng.uniform([0.05, -3.0], [0.95, 3.0], size=(20, 2))),
             (monomial_basis((-1, -2, 0), (1, 2, 3), 3), rng.uniform([-0.9, -1.9, 0.1], [0.9, 1.9, 2.9], (20, 3)))]
    for basis, Y in cases:
        for b in basis:
            np.testing.assert_allclose(b.grad(Y), fd_gradient(b.value, Y), atol=1e-6)
        assert len(set(basis.names)) == len(basis.names)


def test_basis_rejects_duplicates():
    f = basis_for_system(POLAR, 2).functions[0]
    with pytest.raises(ValueError):
        Basis([f, f])


def test_monomial_count_without_constant():
    # monomials of total degree 1..d in n variables
    assert len(monomial_basis((0, 0, 0), (1, 1, 1), 3)) == math.comb(6, 3) - 1


# ---------------------------------------------------------------------------
# primal


def test_empty_basis_gives_grid_minimum_of_cost():
    disc = make_discretization(POLAR, Y0, nodes=11, basis=Basis([]))
    res = solve_kstar(POLAR, disc)
    k = POLAR.k(np.repeat(disc.state_nodes, len(disc.controls), axis=0),
                np.tile(disc.controls, len(disc.state_nodes)))
    assert res.value == pytest.approx(k.min(), abs=1e-12)
    cert = extract_certificate(res)
    assert cert.mu == pytest.approx(k.min(), abs=1e-12)
    assert verify_certificate(cert, POLAR).passed


def test_still_system_stays_at_initial_state():
    # with f = 0 the W rows vanish, but the Omega rows still pin gamma to y0:
    # the only admissible process never moves
    still = system_from_expressions(["0", "0"], "(r - 0.3)^2 + th^2 + 0.1*u", BOX, [0.0, 1.0], 1.0, 12.0, 0.1,
                                    state_names=NAMES)
    disc = make_discretization(still, (0.5, 0.0), nodes=11, degree=3)
    res = solve_kstar(still, disc)
    # the eps_c band lets a sliver of mass leak towards cheaper nodes
    assert res.value == pytest.approx(0.04, abs=1e-3)
    at_y0 = np.all(res.gamma.states == (0.5, 0.0), axis=1) & (res.gamma.controls == 0.0)
    assert res.gamma.weights[at_y0].sum() >= 0.99


def test_constant_cost():
    flat = system_from_expressions(["0", "u"], "0.7", BOX, [-1.0, 0.0, 1.0], 1.0, 1.0, 0.1, state_names=NAMES)
    disc = make_discretization(flat, Y0, nodes=11)
    assert solve_kstar(flat, disc).value == pytest.approx(0.7, abs=1e-12)


def test_equilibrium_start_has_zero_value():
    disc = make_discretization(POLAR, (1.0, 0.0), nodes=21)
    assert abs(solve_kstar(POLAR, disc).value) <= 1e-2


def test_limit_value_and_strong_duality(cap_solve):
    assert abs(cap_solve.value - 0.25) <= 5e-2
    cert = extract_certificate(cap_solve)
    assert abs(cert.mu - 0.25) <= 5e-2
    assert abs(cert.mu - cap_solve.value) <= 1e-6
    assert cert.provenance == "extracted-from-LP"


def test_gamma_lies_in_relaxed_w(cap_solve):
    g = cap_solve.gamma
    assert g.kind == "probability" and abs(g.weights.sum() - 1.0) <= 1e-12
    primal = cap_solve.primal
    res = w_residual(g, cap_solve.disc.basis, POLAR)
    # rows are scaled by their largest coefficient before the band is applied
    assert np.all(np.abs(res) <= cap_solve.disc.eps_c * primal.w_scale + 1e-9)


def test_extracted_certificate_is_dual_feasible(cap_solve):
    cert = extract_certificate(cap_solve)
    rep = verify_certificate(cert, POLAR)
    assert rep.passed, rep.metrics


def test_perturbed_dual_below_primal():
    disc = make_discretization(POLAR, Y0, nodes=21, perturbation=(0.01, 100.0))
    res = solve_kstar(POLAR, disc)
    cert = extract_certificate(res)
    assert cert.mu <= res.value + 1e-8
    assert abs(cert.mu - res.value) <= 1e-6


def test_perturbed_sweep_is_monotone():
    rep = kstar_perturbed_sweep(POLAR, Y0, [0.1, 0.01], [10.0, 100.0], nodes=15)
    assert rep.passed, rep.metrics


def test_primal_layout():
    disc = make_discretization(POLAR, Y0, nodes=5, degree=2)
    primal = build_primal(POLAR, disc)
    B = len(disc.basis)
    assert primal.problem.A.shape[0] == 4 * B + 2
    assert primal.problem.A.shape[1] == 2 * len(disc.state_nodes) * len(disc.controls)


def test_discretization_checks():
    with pytest.raises(OccLPError):
        make_discretization(POLAR, (1.5, 0.0), nodes=5)
    with pytest.raises(OccLPError):
        make_discretization(POLAR, Y0, nodes=5, xi_cap=0.0)


# ---------------------------------------------------------------------------
# verification and optimality


def test_closed_form_certificate_passes(closed):
    rep = verify_certificate(closed, POLAR)
    assert rep.passed and rep.metrics["min_margin_value"] >= -1e-6


def test_trivial_certificate_passes():
    Y = np.stack(np.meshgrid(np.linspace(0, 1, 21), np.linspace(-math.pi, math.pi, 21)), -1).reshape(-1, 2)
    kmin = min(POLAR.k(Y, np.full(len(Y), u)).min() for u in POLAR.control_grid)
    cert = Certificate(kmin, ZeroFunction(2), ZeroFunction(2), np.array(Y0))
    assert verify_certificate(cert, POLAR).passed


def test_inflated_mu_fails_with_location(closed):
    bad = Certificate(closed.mu + 0.1, closed.psi, closed.eta, closed.y0)
    rep = verify_certificate(bad, POLAR)
    assert not rep.passed
    assert rep.metrics["min_margin_value"] == pytest.approx(-0.1, abs=1e-6)
    assert len(rep.metrics["worst_value_at"]["y"]) == 2


def test_residual_vanishes_along_optimal_process(closed):
    traj = integrate(POLAR, Y0, ControlSignal((0.0, 1.0), (-1.0, 0.0)), 20.0)
    assert optimality_residual(closed, traj, POLAR).passed


def test_residual_at_equilibrium():
    cert = Certificate(0.25, ZeroFunction(2), ZeroFunction(2), np.array((0.5, 0.0)))
    traj = integrate(POLAR, (0.5, 0.0), ControlSignal.constant(0.0), 5.0)
    rep = optimality_residual(cert, traj, POLAR)
    assert rep.passed and rep.metrics["max_abs_residual"] <= 1e-15


def test_residual_flags_rotating_process(closed):
    traj = integrate(POLAR, Y0, ControlSignal.constant(1.0), 20.0, wrap_angles=True)
    rep = optimality_residual(closed, traj, POLAR)
    assert not rep.passed and rep.metrics["max_abs_residual"] >= 0.1


def test_aux_w_problem_examples():
    disc = make_discretization(POLAR, Y0, nodes=21)
    v_psi, _ = aux_w_lp(POLAR, disc, ExprFunction("(1-r)^2", ["-2*(1-r)", "0"], NAMES))
    assert v_psi >= -5e-2
    v_zero, _ = aux_w_lp(POLAR, disc, ZeroFunction(2))
    assert v_zero >= 0.0
    kmin = v_zero
    v_shift, _ = aux_w_lp(POLAR, disc, ExprFunction(f"{kmin!r} - 1", ["0", "0"], NAMES))
    assert v_shift >= 1 - 1e-9


def test_aux_w_problem_with_value_table():
    disc = make_discretization(POLAR, Y0, nodes=21)
    table = cesaro_value_dp(POLAR, 20.0, nodes=21)

    class TablePsi:
        def value(self, Y):
            return table(Y)

    value, _ = aux_w_lp(POLAR, disc, TablePsi())
    assert value >= -5e-2


# ---------------------------------------------------------------------------
# feedback


def _theta_nodes(thr):
    disc = make_discretization(POLAR, Y0)
    Y = disc.state_nodes
    return Y[np.abs(Y[:, 1]) > thr]


def test_closed_form_feedback_sign(closed):
    Y = _theta_nodes(0.05)
    fb = synthesize_feedback(closed, POLAR)
    want = -np.sign(Y[:, 1])
    got = fb.batch(Y)
    # away from r = 0 the argmin is unique and equals -sgn(theta)
    pos = Y[:, 0] > 0
    np.testing.assert_array_equal(got[pos], want[pos])
    # at r = 0 every control ties, and -sgn(theta) is still in the argmin set
    mask = fb.argmin_sets(Y)
    assert np.all(mask[np.arange(len(Y)), np.searchsorted(fb.controls, want)])


def test_zero_eta_is_cost_greedy():
    still = system_from_expressions(["0", "u"], "(u - 0.3)^2 + r", BOX, [-1.0, 0.0, 0.25, 1.0], 1.0, 5.0, 0.1,
                                    state_names=NAMES)
    fb = FeedbackLaw(ZeroFunction(2), still)
    assert fb((0.4, 0.2)) == 0.25


def test_feedback_argmin_scale_invariant(closed):
    Y = _theta_nodes(0.05)
    base = synthesize_feedback(closed, POLAR).argmin_sets(Y)
    scaled_sys = system_from_expressions(["0", "3*u"], "3*(1 - 2*r*cos(th) + r^2)", BOX,
                                         list(POLAR.control_grid), 3.0, 13.3, 0.1, state_names=NAMES)
    np.testing.assert_array_equal(FeedbackLaw(closed.eta, scaled_sys).argmin_sets(Y), base)


def test_rollout_examples(closed):
    fb = synthesize_feedback(closed, POLAR)
    traj, avg = closed_loop_rollout(fb, POLAR, Y0, 50.0)
    assert abs(avg - 0.25) <= 3e-2
    assert avg >= cesaro_value_dp(POLAR, 50.0).at(Y0) - 5e-2
    calm = synthesize_feedback(closed, POLAR, tie_rule="smallest-magnitude")
    assert closed_loop_rollout(calm, POLAR, (1.0, 0.0), 50.0)[1] <= 1e-6


def test_unknown_tie_rule():
    with pytest.raises(OccLPError):
        FeedbackLaw(ZeroFunction(2), POLAR, tie_rule="random")


def _refined_agreement(cap_solve):
    cert = refine_eta(extract_certificate(cap_solve), POLAR, cap_solve.disc)
    Y = _theta_nodes(0.2)
    return float(np.mean(np.sign(synthesize_feedback(cert, POLAR).batch(Y)) == -np.sign(Y[:, 1])))


def test_refined_extracted_feedback_mostly_agrees(cap_solve):
    assert _refined_agreement(cap_solve) >= 0.9


@pytest.mark.xfail(strict=True, reason="degree-4 refined eta reaches about 93% sign agreement, not 95%")
def test_refined_extracted_feedback_reaches_95_percent(cap_solve):
    assert _refined_agreement(cap_solve) >= 0.95


# ---------------------------------------------------------------------------
# maximizer characterization and structural inequalities


def test_cubic_psi_is_also_a_maximizer():
    eta = ("2*r*abs(th - sin(th))", ["2*abs(th - sin(th))", "2*r*sgn(th - sin(th))*(1 - cos(th))"])
    cert = closed_form_certificate(0.0, "(1-r)^3", ["-3*(1-r)^2", "0"], *eta, (1.0, 0.0), NAMES)
    assert alt_maximizer_check(cert, POLAR, (1.0, 0.0), v_limit).passed


def test_value_itself_is_a_maximizer(closed):
    assert alt_maximizer_check(closed, POLAR, Y0, v_limit).passed


def test_angle_dependent_psi_is_rejected():
    cert = closed_form_certificate(0.0, "th", ["0", "1"], "0", ["0", "0"], (1.0, 0.0), NAMES)
    rep = alt_maximizer_check(cert, POLAR, (1.0, 0.0), v_limit)
    assert not rep.passed and not rep.metrics["monotone_ok"]


def test_value_below_cost_on_optimal_gamma(cap_solve):
    table = cesaro_value_dp(POLAR, 20.0)
    assert w_value_check(cap_solve.gamma, table, POLAR).passed
