"""Discrete occupational measures on Y x U and the diagnostics built on them."""
from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass

import numpy as np

from .errors import OccLPError

PROBABILITY = "probability"
NONNEGATIVE = "nonnegative"
NORMALIZATION_TOL = 1e-12


@dataclass
class OccMeasure:
    """Atoms ``(states[i], controls[i])`` carrying ``weights[i] >= 0``."""

    states: np.ndarray
    controls: np.ndarray
    weights: np.ndarray
    kind: str = PROBABILITY

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.controls = np.asarray(self.controls, dtype=float).reshape(-1)
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if not (len(self.states) == len(self.controls) == len(self.weights)):
            raise OccLPError("atom arrays have inconsistent lengths")
        if np.any(self.weights < 0):
            raise OccLPError("measure weights must be nonnegative")
        if self.kind not in (PROBABILITY, NONNEGATIVE):
            raise OccLPError(f"unknown measure kind {self.kind!r}")
        if self.kind == PROBABILITY and abs(self.weights.sum() - 1.0) > NORMALIZATION_TOL:
            raise OccLPError(f"probability measure has total mass {self.weights.sum()!r}")

    @property
    def mass(self):
        return float(self.weights.sum())

    def __len__(self):
        return len(self.weights)

    def to_csv(self, state_names=None):
        n = self.states.shape[1]
        names = list(state_names) if state_names else [f"y{i + 1}" for i in range(n)]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([*names, "u", "w"])
        for y, u, wt in zip(self.states, self.controls, self.weights):
            w.writerow([*(repr(float(v)) for v in y), repr(float(u)), repr(float(wt))])
        return buf.getvalue()


def dirac(y, u):
    return OccMeasure(np.atleast_2d(y), [u], [1.0])


def _merged(states, controls, weights, kind):
    """Sum weights of identical atoms; drop zero weights."""
    keep = weights > 0
    rows = np.column_stack([states[keep], controls[keep]])
    uniq, inverse = np.unique(rows, axis=0, return_inverse=True)
    w = np.bincount(inverse.reshape(-1), weights=weights[keep], minlength=len(uniq))
    if kind == PROBABILITY:
        w = w / w.sum()
    return OccMeasure(uniq[:, :-1], uniq[:, -1], w, kind)


def cesaro_measure(traj):
    """Occupational measure of a trajectory: (1/T) times time spent, trapezoid weights."""
    n = len(traj.times) - 1
    if n < 1 or traj.T <= 0:
        raise OccLPError("trajectory is empty")
    w = np.full(n + 1, traj.h_t / traj.T)
    w[0] *= 0.5
    w[-1] *= 0.5
    return _merged(traj.states, traj.controls, w, PROBABILITY)


def discounted_measure(traj, lam, horizon_T=None):
    """Discounted occupational measure ``lam * exp(-lam t) dt``, truncated at ``horizon_T``.

    The horizon must satisfy ``horizon_T >= 10 / lam``; the neglected tail mass
    ``exp(-lam * horizon_T)`` is absorbed by renormalization.
    """
    if lam <= 0:
        raise OccLPError("discount rate must be positive")
    horizon_T = traj.T if horizon_T is None else horizon_T
    if horizon_T * lam < 10 * (1 - 1e-12):
        raise OccLPError(f"horizon {horizon_T} too short for rate {lam}: need at least {10 / lam}")
    if horizon_T > traj.T * (1 + 1e-12):
        raise OccLPError(f"trajectory of length {traj.T} is shorter than horizon {horizon_T}")
    m = int(round(horizon_T / traj.h_t))
    t = traj.times[: m + 1]
    w = lam * np.exp(-lam * t) * traj.h_t
    w[0] *= 0.5
    w[-1] *= 0.5
    return _merged(traj.states[: m + 1], traj.controls[: m + 1], w, PROBABILITY)


def integrate_against(m, q):
    """``sum_i w_i q(y_i, u_i)`` for a batched evaluator ``q(Y, U)``."""
    if len(m) == 0:
        return 0.0
    vals = np.broadcast_to(np.asarray(q(m.states, m.controls), dtype=float), m.weights.shape)
    return float(m.weights @ vals)


# --------------------------------------------------------------------------
# metric


class MetricConfig:
    """Truncated weak-* metric: test functions ``q_j`` with weights ``2^-j``."""

    def __init__(self, functions, names=None, description=None):
        if len(functions) < 1:
            raise OccLPError("metric needs at least one test function")
        self.functions = list(functions)
        self.names = list(names) if names else [f"q{j + 1}" for j in range(len(functions))]
        self.weights = 0.5 ** np.arange(1, len(functions) + 1)
        self.description = description or {}

    def __len__(self):
        return len(self.functions)

    def features(self, m):
        return np.array([integrate_against(m, q) for q in self.functions])

    def check_sup_norm(self, states, controls, tol=1e-12):
        for name, q in zip(self.names, self.functions):
            if np.max(np.abs(q(states, controls))) > 1 + tol:
                raise OccLPError(f"test function {name} exceeds unit sup-norm")

    def to_dict(self):
        return {"J": len(self), "functions": self.names, "weights": "2^-j", **self.description}


def default_metric(system, J=16):
    """Normalized monomials in (y, u) over ``y_box x U``, ordered by degree."""
    lo, hi = system.y_box
    ulo, uhi = float(system.control_grid.min()), float(system.control_grid.max())
    lo = np.append(lo, ulo)
    hi = np.append(hi, uhi)
    center = 0.5 * (lo + hi)
    scale = np.where(hi > lo, 0.5 * (hi - lo), 1.0)
    dim = lo.size
    var_names = list(system.state_names) + ["u"]
    funcs, names = [], []
    degree = 1
    while len(funcs) < J:
        for combo in itertools.combinations_with_replacement(range(dim), degree):
            if len(funcs) == J:
                break
            alpha = np.bincount(combo, minlength=dim)
            funcs.append(_metric_monomial(alpha, center, scale))
            names.append("*".join(f"z_{var_names[i]}" + (f"^{a}" if a > 1 else "") for i, a in enumerate(alpha) if a))
        degree += 1
    return MetricConfig(funcs, names, {"family": "monomials in (y,u) rescaled to [-1,1] over y_box x U"})


def _metric_monomial(alpha, center, scale):
    def q(Y, U):
        Z = (np.column_stack([np.atleast_2d(Y), np.asarray(U, dtype=float).reshape(-1)]) - center) / scale
        return np.prod(Z ** alpha, axis=1)

    return q


def rho_distance(m1, m2, cfg):
    return float(cfg.weights @ np.abs(cfg.features(m1) - cfg.features(m2)))


def w_residual(m, basis, system):
    """``sum_i w_i grad phi_b(y_i) . f(y_i, u_i)`` for each basis function."""
    if len(m) == 0 or len(basis) == 0:
        return np.zeros(len(basis))
    F = system.f(m.states, m.controls)
    return m.weights @ basis.lie(m.states, F)


# --------------------------------------------------------------------------
# Hausdorff proxy


def _weighted_l1(weights, v):
    return float(weights @ np.abs(v))


def _best_step(weights, current, target, candidate):
    """Minimize ``|W((1-t) current + t candidate - target)|_1`` over t in [0, 1]."""
    d = candidate - current
    r = current - target
    ts = [0.0, 1.0]
    nz = np.abs(d) > 1e-15
    bp = -r[nz] / d[nz]
    ts.extend(bp[(bp > 0) & (bp < 1)].tolist())
    best_t, best_val = 0.0, _weighted_l1(weights, r)
    for t in ts:
        val = _weighted_l1(weights, r + t * d)
        if val < best_val - 1e-15:
            best_t, best_val = t, val
    return best_t, best_val


def distance_to_hull(point, vertices, weights, max_components=64):
    """Greedy convex-combination fit of ``point`` from ``vertices`` (feature vectors).

    Returns an upper estimate of the weighted-l1 distance from ``point`` to the
    convex hull of ``vertices``.
    """
    V = np.asarray(vertices)
    dists = np.array([_weighted_l1(weights, v - point) for v in V])
    current = V[int(np.argmin(dists))].copy()
    best = float(dists.min())
    for _ in range(max_components - 1):
        step = None
        for v in V:
            t, val = _best_step(weights, current, point, v)
            if t > 0 and val < best - 1e-14 and (step is None or val < step[1]):
                step = (t, val, v)
        if step is None:
            break
        t, best, v = step
        current = (1 - t) * current + t * v
    return best


def hausdorff_diagnostic(sampled_measures, w_grid_measures, cfg, max_components=64, one_sided=False):
    """Empirical two-sided proxy for the Hausdorff distance between convex hulls.

    Only a trend diagnostic: greedy fits overestimate hull distances and the
    measure lists are finite samples, so the number bounds nothing. With
    ``one_sided=True`` the two directed distances (sampled to W-hull, W to
    sampled-hull) are returned instead of their maximum.
    """
    if not sampled_measures or not w_grid_measures:
        raise OccLPError("both measure lists must be nonempty")
    A = np.array([cfg.features(m) for m in sampled_measures])
    B = np.array([cfg.features(m) for m in w_grid_measures])
    w = cfg.weights
    ab = max(distance_to_hull(a, B, w, max_components) for a in A)
    ba = max(distance_to_hull(b, A, w, max_components) for b in B)
    return max(ab, ba) if not one_sided else (ab, ba)


# --------------------------------------------------------------------------
# W-residual bound along trajectories


def _lie_derivative_bounds(basis, system, nodes=41, fd=1e-5):
    """``S_b = sup |grad phi_b . f|`` and ``L_b = sup |d/dt (grad phi_b . f)|`` on a sample grid of Y x U."""
    lo, hi = system.y_box
    axes = [np.linspace(a, b, nodes) for a, b in zip(lo, hi)]
    Y = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    Y = Y[system.dist(Y) <= 1e-12]
    S = np.zeros(len(basis))
    L = np.zeros(len(basis))
    for u in system.control_grid:
        U = np.full(len(Y), u)
        F = system.f(Y, U)
        g = basis.lie(Y, F)
        S = np.maximum(S, np.abs(g).max(axis=0))
        dg = np.zeros_like(g)
        for i in range(Y.shape[1]):
            e = np.zeros(Y.shape[1])
            e[i] = fd
            gp = basis.lie(Y + e, system.f(Y + e, U))
            gm = basis.lie(Y - e, system.f(Y - e, U))
            dg += (gp - gm) / (2 * fd) * F[:, i:i + 1]
        L = np.maximum(L, np.abs(dg).max(axis=0))
    return S, L


def w_residual_bound(traj, basis, system, switches, sup_phi=None, bounds=None):
    """Per-basis bound ``2 sup|phi_b| / T + C_b h_t`` on the W-residual of a Cesàro measure.

    The exact time average of ``grad phi_b . f`` telescopes to
    ``(phi_b(y(T)) - phi_b(y(0))) / T``. The trapezoid weights deviate from it
    by at most ``h_t L_b / 4`` on smooth stretches and ``h_t S_b / T`` per
    control switch, so ``C_b = 2 (L_b / 4 + switches * S_b / T)``; the factor 2
    covers sampling ``S_b`` and ``L_b`` on a finite grid. The trajectory must
    not have been angle-wrapped.
    """
    S, L = bounds if bounds is not None else _lie_derivative_bounds(basis, system)
    if sup_phi is None:
        lo, hi = system.y_box
        axes = [np.linspace(a, b, 41) for a, b in zip(lo, hi)]
        Y = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        sup_phi = np.abs(basis.values(Y[system.dist(Y) <= 1e-12])).max(axis=0)
    C = 2 * (L / 4 + switches * S / traj.T)
    return 2 * sup_phi / traj.T + C * traj.h_t


def random_signal(rng, controls, T, switches, h_t=1e-2):
    """Piecewise-constant signal with at most ``switches`` switch times drawn on the time grid."""
    from .dynamics import ControlSignal

    steps = int(round(T / h_t))
    if steps < 2:
        raise OccLPError("horizon too short for a switching signal")
    k = min(switches, steps - 1)
    idx = np.sort(rng.choice(np.arange(1, steps), size=k, replace=False)) if k else np.zeros(0, dtype=int)
    breakpoints = (0.0, *(float(i * T / steps) for i in idx))
    values = tuple(float(v) for v in rng.choice(controls, size=k + 1))
    return ControlSignal(breakpoints, values)


def sample_viable_trajectories(system, count, T, switches, rng, h_t=1e-2, max_attempts=None):
    """Trajectories from random starts in Y under random signals, rejecting those leaving Y."""
    from .dynamics import integrate
    from .errors import ViabilityError

    lo, hi = system.y_box
    out = []
    attempts = 0
    limit = max_attempts if max_attempts is not None else 200 * count
    while len(out) < count:
        if attempts >= limit:
            raise OccLPError(f"only {len(out)} of {count} sampled trajectories stayed in Y after {attempts} tries")
        attempts += 1
        y0 = rng.uniform(lo, hi)
        if system.dist(y0)[0] > 0:
            continue
        sig = random_signal(rng, system.control_grid, T, switches, h_t)
        try:
            out.append(integrate(system, y0, sig, T, h_t))
        except ViabilityError:
            continue
    return out
