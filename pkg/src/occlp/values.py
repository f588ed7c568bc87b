"""Finite-horizon and discounted optimal values by dynamic programming on a grid.

The state grid is uniform over the bounding box of Y^delta; nodes outside
Y^delta are inactive. Off-grid states are evaluated by multilinear
interpolation restricted to active nodes. A (node, control) pair whose
one-step RK4 image leaves Y^delta is inadmissible, it is never projected
back, so the computed values are upper bounds for the constrained problem
on the grid.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dynamics import ControlSignal, TOL_VIAB, integrate, rk4_step
from .errors import DPError, IntegrationError
from .occupation import cesaro_measure, integrate_against
from .report import Report

DEFAULT_NODES = 41
DEFAULT_H_T = 1e-2
TOL_VI = 1e-9
TOL_PER = 1e-6
TOL_DPP = 0.1
BRUTE_FORCE_BUDGET = 10 ** 6


class StateGrid:
    """Uniform tensor grid with an active-node mask."""

    def __init__(self, lower, upper, nodes_per_axis, active=None):
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        counts = np.broadcast_to(np.asarray(nodes_per_axis, dtype=int), lower.shape)
        if np.any(counts < 2):
            raise DPError("need at least two nodes per axis")
        self.axes = [np.linspace(a, b, c) for a, b, c in zip(lower, upper, counts)]
        self.shape = tuple(int(c) for c in counts)
        self.lower, self.upper = lower, upper
        self.spacing = (upper - lower) / (counts - 1)
        mesh = np.meshgrid(*self.axes, indexing="ij")
        self.nodes = np.stack([m.ravel() for m in mesh], axis=1)
        self.active = np.ones(len(self.nodes), bool) if active is None else np.asarray(active, bool)

    @property
    def dim(self):
        return len(self.axes)

    def interpolation(self, points):
        """Stencil indices, weights and a found-flag for each point.

        Weights on inactive nodes are dropped and the rest renormalized; a
        point is not found if it lies outside the grid box or no active node
        carries positive weight.
        """
        P = np.atleast_2d(np.asarray(points, dtype=float))
        n = self.dim
        rel = (P - self.lower) / self.spacing
        tol = 1e-9
        inside = np.all((rel >= -tol) & (rel <= np.asarray(self.shape) - 1 + tol), axis=1)
        rel = np.clip(rel, 0, np.asarray(self.shape) - 1)
        base = np.minimum(np.floor(rel).astype(int), np.asarray(self.shape) - 2)
        frac = rel - base
        corners = np.array(list(itertools.product((0, 1), repeat=n)))
        strides = np.array([int(np.prod(self.shape[i + 1:])) for i in range(n)])
        idx = np.empty((len(P), len(corners)), dtype=int)
        wts = np.empty((len(P), len(corners)))
        for c, corner in enumerate(corners):
            idx[:, c] = (base + corner) @ strides
            wts[:, c] = np.prod(np.where(corner == 1, frac, 1 - frac), axis=1)
        wts = wts * self.active[idx]
        total = wts.sum(axis=1)
        found = inside & (total > 1e-12)
        wts = np.where(found[:, None], wts / np.where(total > 0, total, 1)[:, None], 0.0)
        return idx, wts, found

    def describe(self):
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist(), "nodes_per_axis": list(self.shape),
                "active_nodes": int(self.active.sum()), "interpolation": "multilinear"}


def make_grid(system, delta, nodes=DEFAULT_NODES):
    """Grid over Y^delta whose nodes include the ``nodes``-per-axis grid of Y.

    The relaxed grid extends the unrelaxed one by whole cells, so tables for
    different delta share their nodes on Y and compare node by node.
    """
    lo, hi = (np.asarray(b, dtype=float) for b in system.constraint.bounding_box(0.0))
    counts = np.broadcast_to(np.asarray(nodes, dtype=int), lo.shape)
    if delta > 0:
        spacing = (hi - lo) / (counts - 1)
        ext = np.ceil(delta / spacing - 1e-9).astype(int)
        lo, hi, counts = lo - ext * spacing, hi + ext * spacing, counts + 2 * ext
    grid = StateGrid(lo, hi, counts)
    grid.active = system.dist(grid.nodes) <= delta + 1e-12
    return grid


@dataclass
class ValueTable:
    grid: StateGrid
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __call__(self, points):
        """Interpolated values; NaN where the point is off the active grid."""
        idx, wts, found = self.grid.interpolation(points)
        v = np.where(np.isfinite(self.values), self.values, 0.0)
        out = np.einsum("pc,pc->p", wts, v[idx])
        return np.where(found, out, np.nan)

    def at(self, y):
        return float(self(np.atleast_2d(y))[0])

    def as_array(self):
        return self.values.reshape(self.grid.shape)

    def to_csv(self, state_names=None):
        n = self.grid.dim
        names = list(state_names) if state_names else [f"y{i + 1}" for i in range(n)]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([*names, "value"])
        for y, v, a in zip(self.grid.nodes, self.values, self.grid.active):
            if a:
                w.writerow([*(repr(float(c)) for c in y), repr(float(v))])
        return buf.getvalue()

    def describe(self):
        return {**self.metadata, "grid": self.grid.describe()}


class _OneStep:
    """Sparse one-step transition for every (control, active node) pair."""

    def __init__(self, system, grid, delta, h, controls):
        self.controls = np.asarray(controls, dtype=float)
        act = np.flatnonzero(grid.active)
        self.active_index = act
        self.n_act = len(act)
        remap = -np.ones(len(grid.nodes), dtype=int)
        remap[act] = np.arange(len(act))
        Y = grid.nodes[act]
        rows, cols, vals = [], [], []
        costs, admissible = [], []
        for j, u in enumerate(self.controls):
            U = np.full(len(Y), u)
            Y1 = rk4_step(system, Y, U, h)
            ok = system.dist(Y1) <= delta + TOL_VIAB
            idx, wts, found = grid.interpolation(Y1)
            ok &= found
            r = np.repeat(np.arange(len(Y)) + j * len(Y), idx.shape[1])
            c = remap[idx.ravel()]
            v = wts.ravel() * np.repeat(ok, idx.shape[1])
            keep = (v > 0) & (c >= 0)
            rows.append(r[keep])
            cols.append(c[keep])
            vals.append(v[keep])
            costs.append(system.k(Y, U))
            admissible.append(ok)
        m = len(self.controls)
        self.P = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                               shape=(m * len(Y), len(Y)))
        self.k = np.concatenate(costs)
        self.admissible = np.concatenate(admissible)
        self.nodes = Y
        self.m = m

    def blocked(self):
        """Active nodes without any admissible control."""
        ok = self.admissible.reshape(self.m, self.n_act).any(axis=0)
        return np.flatnonzero(~ok)

    def q_values(self, running, v, discount=1.0):
        Q = running + discount * (self.P @ v)
        Q[~self.admissible] = np.inf
        return Q.reshape(self.m, self.n_act)


def _resolve_controls(system, controls):
    return system.control_grid if controls is None else np.asarray(controls, dtype=float)


def _full(grid, step, v):
    out = np.full(len(grid.nodes), np.nan)
    out[step.active_index] = v
    return out


def _check_blocked(step, what):
    blocked = step.blocked()
    if len(blocked):
        loc = step.nodes[blocked[0]]
        raise DPError(f"{what}: no admissible control at grid node {loc.tolist()} "
                      f"({len(blocked)} node(s) affected)", location=loc)


def cesaro_value_dp(system, T, delta=0.0, nodes=DEFAULT_NODES, h_t=DEFAULT_H_T, controls=None):
    """``V_T`` (or ``V_T^delta``) on a grid by backward dynamic programming."""
    if T <= 0:
        raise DPError("horizon T must be positive")
    n_steps = max(1, int(round(T / h_t)))
    h = T / n_steps
    grid = make_grid(system, delta, nodes)
    step = _OneStep(system, grid, delta, h, _resolve_controls(system, controls))
    _check_blocked(step, "viability failure at grid scale")
    running = step.k * h
    W = np.zeros(step.n_act)
    for _ in range(n_steps):
        W = step.q_values(running, W).min(axis=0)
    meta = {"kind": "cesaro", "T": T, "delta": delta, "h_t": h, "steps": n_steps,
            "controls": step.controls.tolist(), "interpolation": "multilinear",
            "constraint_handling": "one-step images leaving Y^delta are excluded, not projected"}
    return ValueTable(grid, _full(grid, step, W / T), meta)


def abel_value_dp(system, lam, delta=0.0, nodes=DEFAULT_NODES, h_t=DEFAULT_H_T, controls=None,
                  tol_vi=TOL_VI, max_iters=100_000):
    """``h_lambda`` on a grid as the fixed point of the discounted Bellman operator.

    ``v = min_u [(1 - b) k + b v(step(y, u))]`` with ``b = exp(-lam h)``.
    Policy iteration reaches the fixed point; value-iteration sweeps then
    confirm that the sup-norm change is below ``tol_vi``.
    """
    if lam <= 0:
        raise DPError("discount rate must be positive")
    grid = make_grid(system, delta, nodes)
    step = _OneStep(system, grid, delta, h_t, _resolve_controls(system, controls))
    _check_blocked(step, "viability failure at grid scale")
    beta = math.exp(-lam * h_t)
    running = (1 - beta) * step.k
    n = step.n_act
    Q0 = running.reshape(step.m, n).copy()
    Q0[~step.admissible.reshape(step.m, n)] = np.inf
    policy = Q0.argmin(axis=0)
    v = None
    for _ in range(200):
        rows = policy * n + np.arange(n)
        P_pi = step.P[rows]
        A = sp.identity(n, format="csc") - beta * P_pi.tocsc()
        v = spla.spsolve(A, running[rows])
        Q = step.q_values(running, v, beta)
        best = Q.min(axis=0)
        current = Q[policy, np.arange(n)]
        improve = best < current - 1e-13
        if not improve.any():
            break
        policy = np.where(improve, Q.argmin(axis=0), policy)
    sweeps = 0
    while True:
        v_new = step.q_values(running, v, beta).min(axis=0)
        change = float(np.max(np.abs(v_new - v)))
        v = v_new
        sweeps += 1
        if change <= tol_vi:
            break
        if sweeps >= max_iters:
            raise DPError(f"discounted value iteration did not converge (change {change:.3g})")
    meta = {"kind": "abel", "lambda": lam, "delta": delta, "h_t": h_t, "discount_per_step": beta,
            "controls": step.controls.tolist(), "final_sup_change": change, "sweeps": sweeps,
            "interpolation": "multilinear",
            "constraint_handling": "one-step images leaving Y^delta are excluded, not projected"}
    return ValueTable(grid, _full(grid, step, v), meta)


def _trapezoid_cost(system, states, controls, h):
    """Batched trapezoid integral of k along trajectories ``(B, n+1, dim)``."""
    B, n1, d = states.shape
    Y0 = states[:, :-1].reshape(-1, d)
    Y1 = states[:, 1:].reshape(-1, d)
    U = controls.reshape(-1)
    vals = 0.5 * (system.k(Y0, U) + system.k(Y1, U)) * h
    return vals.reshape(B, n1 - 1).sum(axis=1)


def brute_force_value(system, y0, T, h_t=DEFAULT_H_T, max_switches=3, controls=None, delta=0.0):
    """Minimal average cost over all piecewise-constant controls with
    ``max_switches + 1`` equal slots, by exhaustive enumeration.

    An upper bound for ``V_T(y0)`` and an exact oracle when the optimal
    control switches only on slot boundaries.
    """
    ctrl = _resolve_controls(system, controls)
    slots = max_switches + 1
    count = len(ctrl) ** slots
    if count > BRUTE_FORCE_BUDGET:
        raise DPError(f"{count} control sequences exceed the enumeration budget {BRUTE_FORCE_BUDGET}")
    per_slot = max(1, int(round(T / slots / h_t)))
    h = T / (slots * per_slot)
    seqs = np.array(list(itertools.product(ctrl, repeat=slots)))
    steps = np.repeat(seqs, per_slot, axis=1)
    best = np.inf
    chunk = max(1, 200_000 // (steps.shape[1] + 1))
    y0 = np.asarray(y0, dtype=float)
    for s in range(0, len(steps), chunk):
        C = steps[s:s + chunk]
        Y = np.repeat(y0[None, :], len(C), axis=0)
        states = _batch_states(system, Y, C, h)
        dist = system.dist(states.reshape(-1, states.shape[-1])).reshape(states.shape[:2])
        ok = np.all(dist <= delta + TOL_VIAB, axis=1)
        if ok.any():
            cost = _trapezoid_cost(system, states[ok], C[ok], h) / T
            best = min(best, float(cost.min()))
    if not np.isfinite(best):
        raise DPError("no admissible control sequence")
    return best


def _batch_states(system, Y, C, h):
    out = np.empty((Y.shape[0], C.shape[1] + 1, Y.shape[1]))
    out[:, 0] = Y
    for i in range(C.shape[1]):
        Y = rk4_step(system, Y, C[:, i], h)
        out[:, i + 1] = Y
    return out


# --------------------------------------------------------------------------
# periodic processes


@dataclass
class PeriodicOrbit:
    """A periodic admissible process and how ``y0`` reaches its start.

    ``reach_signal is None`` marks an orbit that starts at ``y0`` itself.
    """

    period: float
    signal: ControlSignal
    start: np.ndarray
    reach_signal: Optional[ControlSignal] = None
    reach_time: float = 0.0
    label: str = ""


def _state_gap(system, a, b):
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    for ax in system.angle_axes:
        d[ax] = (d[ax] + math.pi) % (2 * math.pi) - math.pi
    return float(np.linalg.norm(d))


def _fitted_step(duration, h_t):
    n = max(1, int(math.ceil(duration / h_t - 1e-9)))
    return duration / n


def periodic_orbit_average(system, orbit, h_t=DEFAULT_H_T, tol_per=TOL_PER):
    """``(1/period) * integral of k`` over one period of the orbit."""
    if orbit.period <= 0:
        raise IntegrationError("orbit period must be positive")
    h = _fitted_step(orbit.period, h_t)
    traj = integrate(system, orbit.start, orbit.signal, orbit.period, h, wrap_angles=True)
    gap = _state_gap(system, traj.states[-1], traj.states[0])
    if gap > tol_per:
        raise IntegrationError(f"orbit does not close: |y(T) - y(0)| = {gap:.3g} > {tol_per}")
    return integrate_against(cesaro_measure(traj), system.k)


def check_reachable(system, y0, orbit, h_t=DEFAULT_H_T, tol_per=TOL_PER):
    if orbit.reach_signal is None:
        gap = _state_gap(system, y0, orbit.start)
        if gap > tol_per:
            raise IntegrationError(f"orbit {orbit.label!r} is marked as starting at y0 but starts {gap:.3g} away")
        return
    h = _fitted_step(orbit.reach_time, h_t)
    traj = integrate(system, y0, orbit.reach_signal, orbit.reach_time, h)
    gap = _state_gap(system, traj.states[-1], orbit.start)
    if gap > tol_per:
        raise IntegrationError(f"orbit {orbit.label!r} not reached: final gap {gap:.3g}")


def vper_search(system, y0, family, h_t=DEFAULT_H_T, tol_per=TOL_PER):
    """Smallest periodic average over a family of orbits reachable from ``y0``.

    The family is user supplied, so the result is an upper bound on the
    infimum over all reachable periodic processes. Returns ``(value, report)``.
    """
    if not family:
        raise IntegrationError("empty orbit family")
    averages = []
    for orbit in family:
        check_reachable(system, y0, orbit, h_t, tol_per)
        averages.append(periodic_orbit_average(system, orbit, h_t, tol_per))
    best = int(np.argmin(averages))
    info = {
        "value": float(averages[best]),
        "argmin": family[best].label or best,
        "averages": {(o.label or str(i)): float(a) for i, (o, a) in enumerate(zip(family, averages))},
        "note": "upper bound on V_per(y0): infimum restricted to the supplied orbit family",
    }
    return float(averages[best]), info


def equilibrium_orbit(y_eq, u_eq, reach_signal=None, reach_time=0.0, period=1.0, label=""):
    return PeriodicOrbit(period, ControlSignal.constant(u_eq), np.asarray(y_eq, dtype=float),
                         reach_signal, reach_time, label or f"equilibrium {list(map(float, y_eq))}")


def rotation_family(y0):
    """For the polar rotation example: the equilibrium (r0, 0) reached with
    ``u = -sgn(theta0)``, plus full rotations in both directions through y0."""
    r0, th0 = float(y0[0]), float(y0[1])
    if th0 == 0.0:
        eq = equilibrium_orbit((r0, 0.0), 0.0)
    else:
        eq = equilibrium_orbit((r0, 0.0), 0.0, ControlSignal.constant(-math.copysign(1.0, th0)), abs(th0))
    fam = [eq]
    for u in (1.0, -1.0):
        fam.append(PeriodicOrbit(2 * math.pi, ControlSignal.constant(u), np.array([r0, th0]),
                                 label=f"rotation u={u:+g} r={r0:g}"))
    return fam


# --------------------------------------------------------------------------
# diagnostics


def dpp_gradient_diagnostic(table, system, tol_dpp=TOL_DPP):
    """Check ``grad V_T^delta . f >= -2 M_k / T`` at interior nodes (central differences)."""
    T = table.metadata.get("T")
    if T is None:
        raise DPError("table carries no horizon T")
    grid = table.grid
    V = table.as_array()
    act = grid.active.reshape(grid.shape)
    n = grid.dim
    interior = act.copy()
    grads = []
    for ax in range(n):
        sl_int = [slice(None)] * n
        interior_ax = np.zeros_like(act)
        sl_int[ax] = slice(1, -1)
        plus = [slice(None)] * n
        minus = [slice(None)] * n
        plus[ax] = slice(2, None)
        minus[ax] = slice(None, -2)
        interior_ax[tuple(sl_int)] = act[tuple(plus)] & act[tuple(minus)]
        interior &= interior_ax
        g = np.zeros_like(V)
        g[tuple(sl_int)] = (V[tuple(plus)] - V[tuple(minus)]) / (2 * grid.spacing[ax])
        grads.append(g)
    G = np.stack([g.ravel() for g in grads], axis=1)
    sel = np.flatnonzero(interior.ravel())
    if len(sel) == 0:
        raise DPError("no interior nodes")
    Y = grid.nodes[sel]
    bound = 2 * system.M_k / T
    worst, where, which = np.inf, None, None
    for u in system.control_grid:
        prod = np.einsum("in,in->i", G[sel], system.f(Y, np.full(len(Y), u)))
        i = int(np.argmin(prod))
        if prod[i] < worst:
            worst, where, which = float(prod[i]), Y[i], float(u)
    margin = worst + bound
    return Report("dpp_gradient", margin >= -tol_dpp, {
        "min_grad_dot_f": worst, "bound_2M_over_T": bound, "margin": margin, "tol_dpp": tol_dpp,
        "at_state": where.tolist(), "at_control": which, "interior_nodes": int(len(sel)),
    })
