"""Controlled dynamics y' = f(y, u) with a state constraint y in Y.

States are handled in batches: ``f(Y, U)`` takes ``Y`` of shape ``(B, n)``
and ``U`` of shape ``(B,)`` and returns ``(B, n)``; ``k(Y, U)`` returns
``(B,)``. Controls are scalars drawn from a finite grid of ``U``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import expr as ex
from .errors import IntegrationError, SystemSpecError, ViabilityError

TOL_VIAB = 1e-7
TOL_CONS = 1e-9
TOL_PROJ = 0.1
DEFAULT_H_T = 1e-2


# --------------------------------------------------------------------------
# constraint sets


@dataclass(frozen=True)
class BoxSet:
    lower: tuple
    upper: tuple
    kind: str = field(default="box", init=False)

    def dist(self, Y):
        """Signed Euclidean distance to the box (negative inside)."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        q = np.maximum(lo - Y, Y - hi)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return outside + inside

    def project(self, Y, delta):
        """Nearest point of the delta-inflated box."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        P = np.clip(Y, self.lower, self.upper)
        d = Y - P
        nd = np.linalg.norm(d, axis=1)
        scale = np.where(nd > delta, delta / np.where(nd > 0, nd, 1.0), 1.0)
        return P + d * scale[:, None]

    def bounding_box(self, delta=0.0):
        return (np.asarray(self.lower) - delta, np.asarray(self.upper) + delta)

    def to_dict(self):
        return {"type": "box", "lower": list(self.lower), "upper": list(self.upper)}


@dataclass(frozen=True)
class DiskSet:
    center: tuple
    radius: float
    kind: str = field(default="disk", init=False)

    def dist(self, Y):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        return np.linalg.norm(Y - np.asarray(self.center), axis=1) - self.radius

    def project(self, Y, delta):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        c = np.asarray(self.center)
        d = Y - c
        nd = np.linalg.norm(d, axis=1)
        R = self.radius + delta
        scale = np.where(nd > R, R / np.where(nd > 0, nd, 1.0), 1.0)
        return c + d * scale[:, None]

    def bounding_box(self, delta=0.0):
        c = np.asarray(self.center)
        r = self.radius + delta
        return (c - r, c + r)

    def to_dict(self):
        return {"type": "disk", "center": list(self.center), "radius": self.radius}


# --------------------------------------------------------------------------
# system


@dataclass(frozen=True)
class SystemSpec:
    name: str
    state_dim: int
    state_names: tuple
    f: Callable
    k: Callable
    control_grid: np.ndarray
    constraint: object
    M_f: float
    M_k: float
    delta0: float
    angle_axes: tuple = ()
    source: Optional[dict] = None

    @property
    def y_box(self):
        return self.constraint.bounding_box(0.0)

    def dist(self, Y):
        return self.constraint.dist(Y)

    def f1(self, y, u):
        """f at a single point."""
        return self.f(np.atleast_2d(np.asarray(y, dtype=float)), np.atleast_1d(float(u)))[0]

    def k1(self, y, u):
        return float(self.k(np.atleast_2d(np.asarray(y, dtype=float)), np.atleast_1d(float(u)))[0])

    def describe(self):
        return {
            "name": self.name,
            "dim": self.state_dim,
            "states": list(self.state_names),
            "controls": [float(u) for u in self.control_grid],
            "constraint": self.constraint.to_dict(),
            "Mf": self.M_f,
            "Mk": self.M_k,
            "delta0": self.delta0,
            "angle_axes": list(self.angle_axes),
            "source": self.source,
        }


def control_grid(lo, hi, count):
    if count < 1:
        raise SystemSpecError("control grid must be nonempty")
    if count == 1:
        return np.array([0.5 * (lo + hi)])
    return np.linspace(lo, hi, count)


def _expr_evaluators(f_exprs, k_expr, state_names):
    n = len(state_names)

    def env(Y, U):
        e = {"u": U}
        for i, name in enumerate(state_names):
            e[name] = Y[:, i]
            e[f"y{i + 1}"] = Y[:, i]
        return e

    def f(Y, U):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        U = np.broadcast_to(np.asarray(U, dtype=float), (Y.shape[0],))
        e = env(Y, U)
        out = np.empty((Y.shape[0], n))
        for i, fe in enumerate(f_exprs):
            out[:, i] = ex.evaluate(fe, e)
        return out

    def k(Y, U):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        U = np.broadcast_to(np.asarray(U, dtype=float), (Y.shape[0],))
        return np.broadcast_to(ex.evaluate(k_expr, env(Y, U)), (Y.shape[0],)).astype(float)

    return f, k


def system_from_expressions(f_sources, k_source, constraint, controls, M_f, M_k, delta0,
                            state_names=None, name="custom", angle_axes=(), check=True):
    """Build a :class:`SystemSpec` from expression strings."""
    n = len(f_sources)
    if n < 1:
        raise SystemSpecError("system needs at least one state")
    names = tuple(state_names) if state_names else tuple(f"y{i + 1}" for i in range(n))
    if len(names) != n:
        raise SystemSpecError(f"{len(names)} state names for {n} states")
    f_exprs = [ex.parse_expression(s) for s in f_sources]
    k_expr = ex.parse_expression(k_source)
    allowed = set(names) | {f"y{i + 1}" for i in range(n)} | {"u"} | set(ex.CONSTANTS)
    for src, e in zip(list(f_sources) + [k_source], f_exprs + [k_expr]):
        unknown = ex.free_variables(e) - allowed
        if unknown:
            raise SystemSpecError(f"expression {src!r} uses undeclared variable(s) {sorted(unknown)}")
    f, k = _expr_evaluators(f_exprs, k_expr, names)
    controls = np.asarray(controls, dtype=float)
    if controls.ndim != 1 or controls.size == 0:
        raise SystemSpecError("control grid must be a nonempty list of scalars")
    spec = SystemSpec(
        name=name, state_dim=n, state_names=names, f=f, k=k, control_grid=controls,
        constraint=constraint, M_f=float(M_f), M_k=float(M_k), delta0=float(delta0),
        angle_axes=tuple(angle_axes),
        source={"f": list(f_sources), "k": k_source},
    )
    if check:
        check_bounds(spec)
    return spec


def check_bounds(system, nodes_per_axis=21):
    """Sample Y^delta0 x U and confirm M_f, M_k dominate |f|, |k|."""
    if system.M_f <= 0 or system.M_k <= 0:
        raise SystemSpecError("bounds Mf and Mk must be positive")
    if system.delta0 <= 0:
        raise SystemSpecError("delta0 must be positive")
    lo, hi = system.constraint.bounding_box(system.delta0)
    axes = [np.linspace(a, b, nodes_per_axis) for a, b in zip(lo, hi)]
    Y = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    Y = Y[system.dist(Y) <= system.delta0 + 1e-12]
    for u in system.control_grid:
        U = np.full(Y.shape[0], u)
        fn = np.linalg.norm(system.f(Y, U), axis=1).max()
        kn = np.abs(system.k(Y, U)).max()
        if fn > system.M_f * (1 + 1e-9):
            raise SystemSpecError(f"|f| reaches {fn:.6g} > Mf = {system.M_f} at u = {u}")
        if kn > system.M_k * (1 + 1e-9):
            raise SystemSpecError(f"|k| reaches {kn:.6g} > Mk = {system.M_k} at u = {u}")


def builtin_system(name, control_count=11, delta0=0.1):
    """The rotation example in Cartesian or polar coordinates."""
    controls = control_grid(-1.0, 1.0, control_count)
    # sup of (1 - y1)^2 + y2^2 over the delta0-inflated unit disk
    mk = (2.0 + delta0) ** 2
    if name == "rotation-cartesian":
        return system_from_expressions(
            ["y2*u", "-y1*u"], "(1 - y1)^2 + y2^2",
            DiskSet((0.0, 0.0), 1.0), controls, M_f=1.0 + delta0, M_k=mk, delta0=delta0,
            name=name,
        )
    if name == "rotation-polar":
        return system_from_expressions(
            ["0", "u"], "1 - 2*r*cos(th) + r^2",
            BoxSet((0.0, -math.pi), (1.0, math.pi)), controls, M_f=1.0, M_k=mk, delta0=delta0,
            state_names=("r", "th"), name=name, angle_axes=(1,),
        )
    raise SystemSpecError(f"unknown builtin system {name!r}; choose rotation-cartesian or rotation-polar")


BUILTIN_SYSTEMS = ("rotation-cartesian", "rotation-polar")


# --------------------------------------------------------------------------
# controls and trajectories


@dataclass(frozen=True)
class ControlSignal:
    """Piecewise-constant control: ``values[i]`` on ``[breakpoints[i], breakpoints[i+1])``."""

    breakpoints: tuple
    values: tuple

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        if len(self.breakpoints) != len(self.values) or len(bp) == 0:
            raise IntegrationError("breakpoints and values must have equal nonzero length")
        if bp[0] != 0.0:
            raise IntegrationError("first breakpoint must be 0")
        if np.any(np.diff(bp) <= 0):
            raise IntegrationError("breakpoints must be strictly increasing")

    @classmethod
    def constant(cls, u):
        return cls((0.0,), (float(u),))

    def at(self, t):
        bp = np.asarray(self.breakpoints)
        idx = np.searchsorted(bp, np.asarray(t) + 1e-12, side="right") - 1
        return np.asarray(self.values)[np.clip(idx, 0, len(bp) - 1)]

    def min_spacing(self):
        bp = np.asarray(self.breakpoints)
        return np.inf if len(bp) < 2 else float(np.diff(bp).min())

    def check_values(self, grid, tol=1e-12):
        grid = np.asarray(grid)
        for v in self.values:
            if np.min(np.abs(grid - v)) > tol:
                raise IntegrationError(f"control value {v} is not on the control grid")


@dataclass
class Trajectory:
    h_t: float
    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    y0: np.ndarray
    delta: float

    @property
    def T(self):
        return float(self.times[-1])

    def to_csv(self, state_names=None):
        n = self.states.shape[1]
        names = list(state_names) if state_names else [f"y{i + 1}" for i in range(n)]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", *names, "u"])
        for t, y, u in zip(self.times, self.states, self.controls):
            w.writerow([repr(float(t)), *(repr(float(v)) for v in y), repr(float(u))])
        return buf.getvalue()


def rk4_step(system, Y, U, h):
    """One classic RK4 step with the control frozen over the step (batched)."""
    f = system.f
    k1 = f(Y, U)
    k2 = f(Y + 0.5 * h * k1, U)
    k3 = f(Y + 0.5 * h * k2, U)
    k4 = f(Y + h * k3, U)
    return Y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def wrap_angle_axes(system, Y):
    if not system.angle_axes:
        return Y
    Y = np.array(Y, dtype=float, copy=True)
    for ax in system.angle_axes:
        Y[..., ax] = (Y[..., ax] + math.pi) % (2 * math.pi) - math.pi
    return Y


def _steps(T, h_t):
    if T <= 0 or h_t <= 0:
        raise IntegrationError("T and h_t must be positive")
    n = max(1, int(round(T / h_t)))
    return n, T / n


def enforce_viability(system, y, delta, tol_proj=TOL_PROJ):
    """Return ``y`` if it lies in Y^delta, else its projection onto Y^delta.

    Points farther than ``delta + tol_proj`` from Y are treated as an
    integration failure rather than silently repaired.
    """
    y = np.asarray(y, dtype=float)
    d = float(system.dist(y)[0])
    if d <= delta:
        return y
    if d > delta + tol_proj:
        raise IntegrationError(f"state {y.tolist()} is {d:.3g} from Y, beyond delta + tol_proj")
    return system.constraint.project(y, delta)[0]


def _check_start(system, y0, delta):
    y0 = np.asarray(y0, dtype=float)
    if y0.shape != (system.state_dim,):
        raise IntegrationError(f"initial state must have dimension {system.state_dim}")
    if system.dist(y0)[0] > delta + TOL_VIAB:
        raise ViabilityError(f"initial state {y0.tolist()} lies outside Y^delta (delta={delta})", 0.0, y0)
    return y0


def _advance(system, y, u, h, t_next, delta, project, wrap):
    y_next = rk4_step(system, y[None, :], np.array([u]), h)[0]
    if wrap:
        y_next = wrap_angle_axes(system, y_next)
    d = float(system.dist(y_next)[0])
    if d > delta + TOL_VIAB:
        if not project:
            raise ViabilityError(
                f"state constraint violated at t = {t_next:.6g} (distance {d:.3g} > delta = {delta})",
                t_next, y_next)
        y_next = enforce_viability(system, y_next, delta)
    return y_next


def integrate(system, y0, signal, T, h_t=DEFAULT_H_T, delta=0.0, project=False, wrap_angles=False):
    """Integrate under a piecewise-constant control with fixed-step RK4.

    The control is sampled at the start of every step and held over it. A
    state leaving Y^delta raises :class:`ViabilityError` with the first
    violating time unless ``project`` is set.
    """
    y0 = _check_start(system, y0, delta)
    n, h = _steps(T, h_t)
    if signal.min_spacing() < h * (1 - 1e-9):
        raise IntegrationError(f"step {h:.3g} exceeds the control breakpoint spacing {signal.min_spacing():.3g}")
    times = np.arange(n + 1) * h
    controls = np.asarray(signal.at(times), dtype=float)
    states = np.empty((n + 1, system.state_dim))
    states[0] = y0
    for i in range(n):
        states[i + 1] = _advance(system, states[i], controls[i], h, times[i + 1], delta, project, wrap_angles)
    controls[-1] = controls[-2] if n >= 1 else controls[-1]
    return Trajectory(h, times, states, controls, y0, delta)


def integrate_feedback(system, y0, feedback, T, h_t=DEFAULT_H_T, delta=0.0, project=False, wrap_angles=False):
    """Closed-loop integration; ``feedback(y)`` is re-evaluated at every step."""
    y0 = _check_start(system, y0, delta)
    n, h = _steps(T, h_t)
    times = np.arange(n + 1) * h
    states = np.empty((n + 1, system.state_dim))
    controls = np.empty(n + 1)
    states[0] = y0
    for i in range(n):
        controls[i] = feedback(states[i])
        states[i + 1] = _advance(system, states[i], controls[i], h, times[i + 1], delta, project, wrap_angles)
    controls[n] = controls[n - 1]
    return Trajectory(h, times, states, controls, y0, delta)


def integrate_batch(system, Y0, control_steps, h):
    """Integrate B initial states under per-step controls ``(B, n_steps)``.

    Returns the states ``(B, n_steps + 1, n)``; no constraint checking.
    """
    Y = np.atleast_2d(np.asarray(Y0, dtype=float))
    C = np.atleast_2d(np.asarray(control_steps, dtype=float))
    out = np.empty((Y.shape[0], C.shape[1] + 1, Y.shape[1]))
    out[:, 0] = Y
    for i in range(C.shape[1]):
        Y = rk4_step(system, Y, C[:, i], h)
        out[:, i + 1] = Y
    return out
