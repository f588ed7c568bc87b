"""Grid discretization of the occupational-measure LP and its dual certificates.

Decision variables are nonnegative weights ``gamma[i, j]`` and ``xi[i, j]``
on state nodes ``y_i`` times controls ``u_j``. For each basis function phi_b:

* W rows:      | sum gamma * grad phi_b . f |                          <= eps_c * s_b
* Omega rows:  | sum gamma * (phi_b(y0) - phi_b(y)) + sum xi * grad phi_b . f | <= eps_c * s'_b

together with ``sum gamma = 1`` and ``sum xi <= xi_cap``; ``s_b``, ``s'_b`` are
the largest absolute coefficients of the row. The objective is
``sum gamma * k``, plus ``(2 M_k / T + M_k eps) * sum xi`` in perturbed mode.

Dual signs. With ``alpha_b`` and ``beta_b`` the combined (upper minus lower
band) duals of the W and Omega rows, nonnegativity of the gamma reduced
costs reads ``k + (psi(y0) - psi(y)) + grad eta . f - mu >= 0`` with
``psi = -sum beta_b phi_b`` and ``eta = -sum alpha_b phi_b``, and the xi
reduced costs give ``grad psi . f >= nu - xi_cost`` where ``nu <= 0`` is the
cap dual.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .basis import Basis, ExprFunction, LinearCombination, basis_for_system
from .dynamics import integrate_feedback
from .errors import OccLPError
from .lp import LpStandardForm, OPTIMAL, solve_simplex
from .occupation import NONNEGATIVE, PROBABILITY, OccMeasure, cesaro_measure, integrate_against
from .report import Report
from .values import StateGrid

DEFAULT_DEGREE = 4
DEFAULT_EPS_C = 1e-3
DEFAULT_XI_CAP = 1e3
TOL_CERT_CLOSED = 1e-6
TOL_CERT_EXTRACTED = 1e-3
TOL_OPT = 1e-8
VERIFY_REFINE = 4


@dataclass
class IdlpDiscretization:
    """Grids, basis and relaxation parameters of one finite LP instance.

    ``perturbation = (eps, T)`` charges ``2 M_k / T + M_k eps`` per unit of xi
    mass; ``None`` leaves xi free of cost and bounded only by ``xi_cap``.
    """

    state_nodes: np.ndarray
    controls: np.ndarray
    basis: Basis
    y0: np.ndarray
    eps_c: float = DEFAULT_EPS_C
    xi_cap: float = DEFAULT_XI_CAP
    perturbation: Optional[tuple] = None
    grid: Optional[StateGrid] = None

    def __post_init__(self):
        self.state_nodes = np.atleast_2d(np.asarray(self.state_nodes, dtype=float))
        self.controls = np.asarray(self.controls, dtype=float).reshape(-1)
        self.y0 = np.asarray(self.y0, dtype=float).reshape(-1)
        if self.xi_cap <= 0:
            raise OccLPError("xi_cap must be positive")
        if self.eps_c < 0:
            raise OccLPError("eps_c must be nonnegative")

    def xi_cost(self, system):
        if self.perturbation is None:
            return 0.0
        eps, T = self.perturbation
        return 2 * system.M_k / T + system.M_k * eps

    def describe(self):
        d = {"state_nodes": int(len(self.state_nodes)), "controls": self.controls.tolist(),
             "y0": self.y0.tolist(), "epsilon_c": self.eps_c, "xi_cap": self.xi_cap,
             "perturbation": None if self.perturbation is None else
             {"epsilon": self.perturbation[0], "T": self.perturbation[1]},
             "basis": self.basis.describe()}
        if self.grid is not None:
            d["grid"] = self.grid.describe()
        return d


def make_discretization(system, y0, nodes=41, degree=DEFAULT_DEGREE, controls=None, eps_c=DEFAULT_EPS_C,
                        xi_cap=DEFAULT_XI_CAP, perturbation=None, basis=None):
    """Uniform grid over the bounding box of Y, keeping nodes inside Y."""
    lo, hi = system.y_box
    grid = StateGrid(lo, hi, nodes)
    grid.active = system.dist(grid.nodes) <= 1e-12
    y0 = np.asarray(y0, dtype=float)
    if system.dist(y0)[0] > 1e-12:
        raise OccLPError(f"y0 = {y0.tolist()} is outside Y")
    if np.min(np.max(np.abs(grid.nodes[grid.active] - y0) / grid.spacing, axis=1)) > 1 + 1e-9:
        raise OccLPError("y0 is not within one cell of an active node")
    basis = basis if basis is not None else basis_for_system(system, degree)
    ctrl = system.control_grid if controls is None else np.asarray(controls, dtype=float)
    return IdlpDiscretization(grid.nodes[grid.active], ctrl, basis, y0, eps_c, xi_cap, perturbation, grid)


class _Cells:
    """All (node, control) pairs with the quantities the LP needs."""

    def __init__(self, system, disc):
        Yn, U = disc.state_nodes, disc.controls
        self.Y = np.repeat(Yn, len(U), axis=0)
        self.U = np.tile(U, len(Yn))
        self.k = system.k(self.Y, self.U)
        F = system.f(self.Y, self.U)
        # lie[c, b] = grad phi_b(y_c) . f(y_c, u_c)
        self.lie = disc.basis.lie(self.Y, F)
        self.phi = disc.basis.values(self.Y)
        self.phi0 = disc.basis.values(disc.y0[None, :])[0]


@dataclass
class PrimalLP:
    problem: LpStandardForm
    n_cells: int
    n_basis: int
    w_scale: np.ndarray
    omega_scale: np.ndarray
    cells: _Cells = field(repr=False)

    # row layout: [normalization, W upper (B), W lower (B), Omega upper (B), Omega lower (B), xi cap]
    @property
    def row_norm(self):
        return 0

    def w_rows(self):
        B = self.n_basis
        return slice(1, 1 + B), slice(1 + B, 1 + 2 * B)

    def omega_rows(self):
        B = self.n_basis
        return slice(1 + 2 * B, 1 + 3 * B), slice(1 + 3 * B, 1 + 4 * B)

    @property
    def row_cap(self):
        return 1 + 4 * self.n_basis


def _row_scale(M):
    s = np.abs(M).max(axis=0) if M.size else np.zeros(M.shape[1])
    return np.where(s > 1e-300, s, 1.0)


def build_primal(system, disc) -> PrimalLP:
    cells = _Cells(system, disc)
    N = len(cells.k)
    B = len(disc.basis)
    W = cells.lie                            # (N, B)
    G_om = cells.phi0[None, :] - cells.phi
    X_om = cells.lie
    w_scale = _row_scale(W)
    om_scale = _row_scale(np.vstack([G_om, X_om])) if B else np.zeros(0)
    Wn = (W / w_scale).T
    Gn = (G_om / om_scale).T
    Xn = (X_om / om_scale).T
    zeros = np.zeros((B, N))
    rows = [np.concatenate([np.ones(N), np.zeros(N)])[None, :]]
    rows += [np.hstack([Wn, zeros]), np.hstack([-Wn, zeros])]
    rows += [np.hstack([Gn, Xn]), np.hstack([-Gn, -Xn])]
    rows += [np.concatenate([np.zeros(N), np.ones(N)])[None, :]]
    A = np.vstack(rows)
    e = disc.eps_c
    b = np.concatenate([[1.0], np.full(4 * B, e), [disc.xi_cap]])
    senses = ["="] + ["<="] * (4 * B + 1)
    c = np.concatenate([cells.k, np.full(N, disc.xi_cost(system))])
    return PrimalLP(LpStandardForm(c, A, senses, b), N, B, w_scale, om_scale, cells)


@dataclass
class KStarResult:
    value: float
    gamma: OccMeasure
    xi: OccMeasure
    solution: object
    primal: PrimalLP = field(repr=False)
    disc: IdlpDiscretization = field(repr=False)

    def report(self):
        sol = self.solution
        return {"kstar": self.value, "dual_objective": sol.dual_objective, "gap": sol.gap,
                "xi_mass": self.xi.mass, "iterations": sol.iterations}


def solve_kstar(system, disc) -> KStarResult:
    """Solve the discretized primal; returns k*_h with the optimal gamma and xi."""
    primal = build_primal(system, disc)
    sol = solve_simplex(primal.problem)
    if sol.status != OPTIMAL:
        raise OccLPError(f"discretized primal is {sol.status} at eps_c = {disc.eps_c}; "
                         "raise eps_c or refine the grids")
    N = primal.n_cells
    cells = primal.cells
    g = np.maximum(sol.x[:N], 0.0)
    slack = abs(g.sum() - 1.0)
    if slack > 1e-9:
        raise OccLPError(f"gamma mass deviates from 1 by {slack:.3g}")
    g = g / g.sum()
    xi = np.maximum(sol.x[N:], 0.0)
    gm = _measure(cells, g, PROBABILITY)
    xm = _measure(cells, xi, NONNEGATIVE)
    return KStarResult(sol.objective, gm, xm, sol, primal, disc)


def _measure(cells, w, kind):
    keep = w > 0
    if kind == PROBABILITY:
        w = w / w[keep].sum()
    return OccMeasure(cells.Y[keep], cells.U[keep], w[keep], kind)


# --------------------------------------------------------------------------
# certificates


@dataclass
class Certificate:
    """A candidate dual point ``(mu, psi, eta)`` for initial state ``y0``."""

    mu: float
    psi: object
    eta: object
    y0: np.ndarray
    provenance: str = "user-supplied closed form"
    metadata: dict = field(default_factory=dict)

    def to_dict(self):
        d = {"mu": self.mu, "y0": np.asarray(self.y0).tolist(), "provenance": self.provenance,
             "psi": self.psi.to_dict(), "eta": self.eta.to_dict()}
        d.update({k: v for k, v in self.metadata.items() if k not in d})
        return d


def _signed_band_duals(duals, upper, lower, scale):
    # two <= rows a.x <= e and -a.x <= e on a scaled row: the original-row dual is (y_up - y_lo) / scale
    return (duals[upper] - duals[lower]) / scale


def extract_certificate(result: KStarResult) -> Certificate:
    """Dual certificate read off an optimal primal solve.

    ``mu`` is the dual objective value: the normalization dual minus the
    band penalties ``eps_c * |duals|`` (and the cap term), which keeps the
    on-grid inequality valid and equals k*_h up to the solver gap.
    """
    sol = result.solution
    if sol.status != OPTIMAL:
        raise OccLPError("certificate extraction needs an optimal solution")
    primal = result.primal
    basis = result.disc.basis
    y = sol.duals
    w_up, w_lo = primal.w_rows()
    o_up, o_lo = primal.omega_rows()
    alpha = _signed_band_duals(y, w_up, w_lo, primal.w_scale)
    beta = _signed_band_duals(y, o_up, o_lo, primal.omega_scale)
    psi = LinearCombination(basis, -beta)
    eta = LinearCombination(basis, -alpha)
    meta = {"mu_normalization": float(y[primal.row_norm]), "cap_dual": float(y[primal.row_cap]),
            "kstar": result.value, "dual_objective": sol.dual_objective, "gap": sol.gap,
            "epsilon_c": result.disc.eps_c,
            "xi_cost": float(primal.problem.c[primal.n_cells]) if primal.n_cells else 0.0}
    return Certificate(float(sol.dual_objective), psi, eta, result.disc.y0, "extracted-from-LP", meta)


def closed_form_certificate(mu, psi_value, psi_grad, eta_value, eta_grad, y0, state_names):
    return Certificate(float(mu), ExprFunction(psi_value, psi_grad, state_names),
                       ExprFunction(eta_value, eta_grad, state_names), np.asarray(y0, dtype=float))


def rotation_certificate(y0):
    """Closed-form maximizers for the polar rotation example."""
    r0 = float(y0[0])
    return closed_form_certificate(
        (1 - r0) ** 2,
        "(1 - r)^2", ["-2*(1 - r)", "0"],
        "2*r*abs(th - sin(th))", ["2*abs(th - sin(th))", "2*r*sgn(th - sin(th))*(1 - cos(th))"],
        y0, ("r", "th"),
    )


def verification_grid(system, nodes=41, refine=VERIFY_REFINE):
    """Grid over Y, ``refine`` times finer per axis than a ``nodes``-per-axis grid."""
    lo, hi = system.y_box
    fine = (nodes - 1) * refine + 1
    grid = StateGrid(lo, hi, fine)
    grid.active = system.dist(grid.nodes) <= 1e-12
    return grid.nodes[grid.active]


def _margins(cert, system, Y, controls):
    Yc = np.repeat(Y, len(controls), axis=0)
    Uc = np.tile(controls, len(Y))
    F = system.f(Yc, Uc)
    k = system.k(Yc, Uc)
    psi0 = float(cert.psi.value(np.atleast_2d(cert.y0))[0])
    psi_y = np.repeat(cert.psi.value(Y), len(controls))
    grad_eta = np.repeat(cert.eta.grad(Y), len(controls), axis=0)
    grad_psi = np.repeat(cert.psi.grad(Y), len(controls), axis=0)
    m13 = k + (psi0 - psi_y) + np.einsum("in,in->i", grad_eta, F) - cert.mu
    m14 = np.einsum("in,in->i", grad_psi, F)
    return Yc, Uc, m13, m14


def verify_certificate(cert, system, points=None, controls=None, tol=None):
    """Minimum dual-feasibility margins over a verification grid.

    Certificates extracted from a perturbed solve only satisfy the monotonicity
    condition up to the xi cost ``2 M_k / T + M_k eps`` (the perturbed dual);
    that slack is read from the certificate metadata and reported.
    """
    if tol is None:
        tol = TOL_CERT_EXTRACTED if cert.provenance == "extracted-from-LP" else TOL_CERT_CLOSED
    slack = float(cert.metadata.get("xi_cost") or 0.0)
    Y = verification_grid(system) if points is None else np.atleast_2d(points)
    ctrl = system.control_grid if controls is None else np.asarray(controls, dtype=float)
    Yc, Uc, m13, m14 = _margins(cert, system, Y, ctrl)
    i13, i14 = int(np.argmin(m13)), int(np.argmin(m14))
    passed = m13[i13] >= -tol and m14[i14] >= -tol - slack
    return Report("verify_certificate", bool(passed), {
        "mu": cert.mu, "min_margin_value": float(m13[i13]), "min_margin_monotone": float(m14[i14]),
        "worst_value_at": {"y": Yc[i13].tolist(), "u": float(Uc[i13])},
        "worst_monotone_at": {"y": Yc[i14].tolist(), "u": float(Uc[i14])},
        "tol": tol, "monotone_slack": slack, "points": int(len(Y)), "controls": int(len(ctrl)),
    })


# --------------------------------------------------------------------------
# auxiliary LP over W


def aux_w_lp(system, disc, psi):
    """``min over discretized W of sum gamma (k - psi)`` and the eta read off its duals.

    Returns ``(value, eta)``; the value is the dual objective, which lower
    bounds ``min_(y,u) {k - psi + grad eta . f}`` on the grid.
    """
    cells = _Cells(system, disc)
    N = len(cells.k)
    B = len(disc.basis)
    W = cells.lie
    scale = _row_scale(W)
    Wn = (W / scale).T
    A = np.vstack([np.ones((1, N)), Wn, -Wn])
    b = np.concatenate([[1.0], np.full(2 * B, disc.eps_c)])
    c = cells.k - psi.value(cells.Y)
    sol = solve_simplex(LpStandardForm(c, A, ["="] + ["<="] * (2 * B), b))
    if sol.status != OPTIMAL:
        raise OccLPError(f"auxiliary W-problem is {sol.status}")
    alpha = (sol.duals[1:1 + B] - sol.duals[1 + B:]) / scale
    eta = LinearCombination(disc.basis, -alpha)
    return float(sol.dual_objective), eta


# --------------------------------------------------------------------------
# optimality and feedback


def optimality_residual(cert, traj, system, tol=TOL_OPT):
    """Residual of ``k + (psi(y0) - psi(y)) + grad eta . f - mu`` along a trajectory."""
    Y, U = traj.states, traj.controls
    F = system.f(Y, U)
    psi0 = float(cert.psi.value(np.atleast_2d(cert.y0))[0])
    res = system.k(Y, U) + psi0 - cert.psi.value(Y) + np.einsum("in,in->i", cert.eta.grad(Y), F) - cert.mu
    i = int(np.argmax(np.abs(res)))
    return Report("optimality_residual", bool(abs(res[i]) <= tol), {
        "max_abs_residual": float(abs(res[i])), "at_time": float(traj.times[i]), "tol": tol,
        "samples": int(len(res)),
    })


TIE_RULES = ("smallest-index", "smallest-magnitude")


class FeedbackLaw:
    """``u(y) = argmin_u {k(y,u) + grad eta(y) . f(y,u)}`` over the control grid.

    Exact ties go to the smallest control index by default; with
    ``tie_rule="smallest-magnitude"`` they go to the control closest to zero
    (then the smallest index), which avoids chattering at points where all
    controls tie.
    """

    def __init__(self, eta, system, controls=None, tie_rule="smallest-index"):
        if tie_rule not in TIE_RULES:
            raise OccLPError(f"unknown tie rule {tie_rule!r}; choose one of {TIE_RULES}")
        self.eta = eta
        self.system = system
        self.controls = system.control_grid if controls is None else np.asarray(controls, dtype=float)
        self.tie_rule = tie_rule

    def scores(self, Y):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        G = self.eta.grad(Y)
        out = np.empty((len(Y), len(self.controls)))
        for j, u in enumerate(self.controls):
            U = np.full(len(Y), u)
            out[:, j] = self.system.k(Y, U) + np.einsum("in,in->i", G, self.system.f(Y, U))
        return out

    def indices(self, Y):
        S = self.scores(Y)
        if self.tie_rule == "smallest-index":
            return np.argmin(S, axis=1)
        tied = S == S.min(axis=1, keepdims=True)
        order = np.argsort(np.abs(self.controls), kind="stable")
        return order[np.argmax(tied[:, order], axis=1)]

    def batch(self, Y):
        return self.controls[self.indices(Y)]

    def argmin_sets(self, Y, tol=1e-12):
        """Boolean ``(N, m)`` mask of controls within ``tol`` of the minimum score."""
        S = self.scores(Y)
        return S <= S.min(axis=1, keepdims=True) + tol

    def __call__(self, y):
        return float(self.batch(np.atleast_2d(y))[0])


def synthesize_feedback(cert, system, controls=None, tie_rule="smallest-index"):
    return FeedbackLaw(cert.eta, system, controls, tie_rule)


def closed_loop_rollout(feedback, system, y0, T, h_t=1e-2, delta=0.0):
    """Integrate under the feedback law; returns the trajectory and its average cost.

    Angular coordinates are wrapped back into their period.
    """
    traj = integrate_feedback(system, y0, feedback, T, h_t, delta, wrap_angles=bool(system.angle_axes))
    return traj, integrate_against(cesaro_measure(traj), system.k)


def alt_maximizer_check(cert, system, y0, V, points=None, controls=None, tol=1e-6):
    """Characterization of dual maximizers when the limit value V is C^1.

    ``(psi, eta)`` maximize iff ``grad psi . f >= 0`` and
    ``min {k - psi + grad eta . f} = V(y0) - psi(y0)``. ``V`` is a batched
    callable (closed form or :class:`ValueTable`).
    """
    Y = verification_grid(system) if points is None else np.atleast_2d(points)
    ctrl = system.control_grid if controls is None else np.asarray(controls, dtype=float)
    Yc = np.repeat(Y, len(ctrl), axis=0)
    Uc = np.tile(ctrl, len(Y))
    F = system.f(Yc, Uc)
    mono = np.einsum("in,in->i", np.repeat(cert.psi.grad(Y), len(ctrl), axis=0), F)
    val = system.k(Yc, Uc) - np.repeat(cert.psi.value(Y), len(ctrl)) \
        + np.einsum("in,in->i", np.repeat(cert.eta.grad(Y), len(ctrl), axis=0), F)
    y0 = np.atleast_2d(np.asarray(y0, dtype=float))
    target = float(np.asarray(V(y0)).reshape(-1)[0]) - float(cert.psi.value(y0)[0])
    min_val = float(val.min())
    mono_min = float(mono.min())
    ok_mono = mono_min >= -tol
    ok_min = abs(min_val - target) <= tol
    return Report("alt_maximizer_check", bool(ok_mono and ok_min), {
        "min_grad_psi_dot_f": mono_min, "min_value": min_val, "target_V_minus_psi_at_y0": target,
        "monotone_ok": bool(ok_mono), "min_ok": bool(ok_min), "tol": tol,
    })


def refine_eta(cert, system, disc, stop_weight=0.3, coef_bound=1e3):
    """Replace a degenerate eta by the largest grid subsolution.

    Dual feasibility only asks ``grad eta . f >= -g`` with
    ``g = k + psi(y0) - psi(y) - mu``, which ``eta = 0`` often satisfies, and
    then the feedback law carries no information. This picks the feasible
    eta with the largest node sum subject to the stopping bound
    ``eta(y_i) <= stop_weight * (min_u g_i - min g)``. Without it eta would be
    free along directions where f can vanish; with it eta approximates the
    cost-to-go of ``g`` towards the cheapest nodes. The LP is solved through
    its dual, which has one row per basis function.
    """
    cells = _Cells(system, disc)
    B = len(disc.basis)
    nU = len(disc.controls)
    psi0 = float(cert.psi.value(np.atleast_2d(cert.y0))[0])
    g = cells.k + psi0 - cert.psi.value(cells.Y) - cert.mu
    gmin = g.reshape(-1, nU).min(axis=1)
    shift = -min(0.0, float(g.min()))
    # band relaxation can leave g slightly negative; shifting keeps c = 0 feasible
    g_eff = g + shift
    stop = stop_weight * (gmin - gmin.min())
    Phi = disc.basis.values(disc.state_nodes)
    # primal: max sum(Phi) c  s.t.  -lie c <= g_eff,  Phi c <= stop,  |c| <= coef_bound
    # dual:   min g_eff.lam + stop.kap + C sum(s)  s.t.  -lie^T lam + Phi^T kap + s+ - s- = sum(Phi)
    cols = np.hstack([-cells.lie.T, Phi.T, np.eye(B), -np.eye(B)])
    cost = np.concatenate([g_eff, stop, np.full(2 * B, coef_bound)])
    sol = solve_simplex(LpStandardForm(cost, cols, ["="] * B, Phi.sum(axis=0)))
    if sol.status != OPTIMAL:
        raise OccLPError(f"eta refinement LP is {sol.status}")
    eta = LinearCombination(disc.basis, sol.duals)
    meta = dict(cert.metadata)
    meta.update({"eta_refined": True, "eta_stop_weight": stop_weight,
                 "eta_coef_bound_active": bool(np.max(np.abs(sol.duals)) >= coef_bound * (1 - 1e-9)),
                 "eta_shift": shift})
    return Certificate(cert.mu, cert.psi, eta, cert.y0, cert.provenance, meta)


# --------------------------------------------------------------------------
# grid-scale checks of the structural inequalities


def w_value_check(gamma, value_table, system, tol=5e-2):
    """``sum gamma V_T <= sum gamma k + tol`` for a measure in (discretized) W."""
    lhs = float(gamma.weights @ value_table(gamma.states))
    rhs = integrate_against(gamma, system.k)
    if not math.isfinite(lhs):
        return Report("w_value_check", False, {"note": "measure support leaves the value grid"})
    return Report("w_value_check", bool(lhs <= rhs + tol), {
        "integral_V_T": lhs, "integral_k": rhs, "excess": lhs - rhs, "tol": tol,
    })


def kstar_perturbed_sweep(system, y0, eps_list, T_list, nodes=21, degree=DEFAULT_DEGREE, tol_gap=1e-6, **kw):
    """k*(eps, T) on a shared grid; PASS iff non-increasing as T grows and as eps shrinks."""
    values = {}
    for eps in eps_list:
        for T in T_list:
            disc = make_discretization(system, y0, nodes=nodes, degree=degree, perturbation=(eps, T), **kw)
            values[(eps, T)] = solve_kstar(system, disc).value
    worst = 0.0
    eps_sorted = sorted(eps_list)
    T_sorted = sorted(T_list)
    for eps in eps_sorted:
        for a, b in zip(T_sorted, T_sorted[1:]):
            worst = max(worst, values[(eps, b)] - values[(eps, a)])
    for T in T_sorted:
        for a, b in zip(eps_sorted, eps_sorted[1:]):
            worst = max(worst, values[(a, T)] - values[(b, T)])
    return Report("kstar_perturbed_monotone", bool(worst <= tol_gap), {
        "values": [{"epsilon": e, "T": t, "kstar": v} for (e, t), v in sorted(values.items())],
        "worst_increase": worst, "tol": tol_gap,
    })


def w_grid_measures(system, disc, count, rng):
    """Extreme points of the discretized W reached by minimizing random costs."""
    cells = _Cells(system, disc)
    N = len(cells.k)
    B = len(disc.basis)
    scale = _row_scale(cells.lie)
    Wn = (cells.lie / scale).T
    A = np.vstack([np.ones((1, N)), Wn, -Wn])
    b = np.concatenate([[1.0], np.full(2 * B, disc.eps_c)])
    out = []
    for _ in range(count):
        sol = solve_simplex(LpStandardForm(rng.standard_normal(N), A, ["="] + ["<="] * (2 * B), b))
        if sol.status != OPTIMAL:
            raise OccLPError(f"W sampling LP is {sol.status}")
        w = np.maximum(sol.x, 0.0)
        out.append(_measure(cells, w / w.sum(), PROBABILITY))
    return out
