"""Dense two-phase revised simplex.

Problems have few rows and many columns, so the basis inverse is kept
explicitly (rank-one updates, refactorized every ``REFACTOR_EVERY`` pivots)
and pricing is a single matrix-vector product over all columns. Pricing is
Dantzig's rule with a Harris ratio test; after ``STALL_LIMIT`` consecutive
non-improving pivots the solver switches to Bland's rule until the objective
improves again, which rules out cycling.

Dual values follow the convention ``reduced cost = c - A^T y >= 0`` at an
optimum of a minimization problem, so a ``<=`` row has ``y <= 0`` and a
``>=`` row has ``y >= 0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import LPError

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

TOL_FEAS = 1e-9
TOL_GAP = 1e-8
TOL_OPT = 1e-9
TOL_PIVOT = 1e-9
REFACTOR_EVERY = 64
STALL_LIMIT = 50
MAX_CONDITION = 1e13

_SENSES = {"=": "=", "==": "=", "E": "=", "<=": "<=", "L": "<=", ">=": ">=", "G": ">="}


@dataclass
class LpStandardForm:
    """``min c.x`` subject to row constraints ``A x (sense) b`` and ``lb <= x <= ub``."""

    c: np.ndarray
    A: np.ndarray
    senses: Sequence[str]
    b: np.ndarray
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None

    def __post_init__(self):
        if hasattr(self.A, "toarray"):
            self.A = self.A.toarray()
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        m, n = self.A.shape
        if self.A.size == 0:
            m, n = len(self.b), len(self.c)
            self.A = np.zeros((m, n))
        try:
            self.senses = [_SENSES[s] for s in self.senses]
        except KeyError as exc:
            raise LPError(f"unknown row sense {exc.args[0]!r}") from None
        self.lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, dtype=float).reshape(-1)
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).reshape(-1)
        if self.c.shape != (n,) or self.b.shape != (m,) or len(self.senses) != m:
            raise LPError(f"inconsistent dimensions: A {self.A.shape}, c {self.c.shape}, b {self.b.shape}, "
                          f"{len(self.senses)} senses")
        if self.lb.shape != (n,) or self.ub.shape != (n,):
            raise LPError("bounds must have one entry per variable")
        for name, arr in (("A", self.A), ("b", self.b), ("c", self.c)):
            if not np.all(np.isfinite(arr)):
                raise LPError(f"{name} contains NaN or Inf")
        if np.any(np.isnan(self.lb)) or np.any(np.isnan(self.ub)) or np.any(self.lb == np.inf) \
                or np.any(self.ub == -np.inf):
            raise LPError("invalid variable bounds")
        if np.any(self.lb > self.ub):
            raise LPError("lower bound exceeds upper bound")

    @property
    def shape(self):
        return self.A.shape


@dataclass
class LpSolution:
    status: str
    x: Optional[np.ndarray] = None
    objective: float = float("nan")
    duals: Optional[np.ndarray] = None
    reduced_costs: Optional[np.ndarray] = None
    dual_objective: float = float("nan")
    iterations: int = 0
    phase1_iterations: int = 0
    basis: Optional[tuple] = None
    info: dict = field(default_factory=dict)

    @property
    def optimal(self):
        return self.status == OPTIMAL

    @property
    def gap(self):
        return abs(self.objective - self.dual_objective)


# --------------------------------------------------------------------------
# standardization: min c.x, A x = b, x >= 0, b >= 0


class _Standard:
    def __init__(self, p: LpStandardForm):
        m, n = p.A.shape
        cols, costs, self.recover = [], [], []
        shift = np.zeros(n)
        ub_rows = []
        for j in range(n):
            lo, hi = p.lb[j], p.ub[j]
            a = p.A[:, j]
            if np.isfinite(lo):
                shift[j] = lo
                self.recover.append([(len(cols), 1.0)])
                cols.append(a)
                costs.append(p.c[j])
                if np.isfinite(hi):
                    ub_rows.append((len(cols) - 1, hi - lo))
            elif np.isfinite(hi):
                shift[j] = hi
                self.recover.append([(len(cols), -1.0)])
                cols.append(-a)
                costs.append(-p.c[j])
            else:
                self.recover.append([(len(cols), 1.0), (len(cols) + 1, -1.0)])
                cols.extend([a, -a])
                costs.extend([p.c[j], -p.c[j]])
        n_struct = len(cols)
        A = np.column_stack(cols) if cols else np.zeros((m, 0))
        b = p.b - p.A @ shift
        senses = list(p.senses)
        if ub_rows:
            extra = np.zeros((len(ub_rows), n_struct))
            for r, (j, width) in enumerate(ub_rows):
                extra[r, j] = 1.0
            A = np.vstack([A, extra])
            b = np.concatenate([b, [w for _, w in ub_rows]])
            senses += ["<="] * len(ub_rows)
        ms = A.shape[0]
        slack_cols, slack_sign = [], np.zeros(ms)
        for i, s in enumerate(senses):
            if s != "=":
                sign = 1.0 if s == "<=" else -1.0
                e = np.zeros(ms)
                e[i] = sign
                slack_cols.append(e)
                slack_sign[i] = sign
        S = np.column_stack(slack_cols) if slack_cols else np.zeros((ms, 0))
        flip = np.where(b < 0, -1.0, 1.0)
        A = A * flip[:, None]
        S = S * flip[:, None]
        b = b * flip
        slack_index = {}
        for col, i in enumerate(np.flatnonzero(slack_sign)):
            slack_index[int(i)] = n_struct + col
        need_art = [i for i in range(ms) if not (i in slack_index and S[i, slack_index[i] - n_struct] > 0)]
        Art = np.zeros((ms, len(need_art)))
        for c_, i in enumerate(need_art):
            Art[i, c_] = 1.0
        self.A = np.hstack([A, S, Art])
        self.b = b
        self.c = np.concatenate([costs, np.zeros(S.shape[1] + Art.shape[1])])
        self.n_struct = n_struct
        self.n_slack = S.shape[1]
        self.n_art = len(need_art)
        self.art_start = n_struct + self.n_slack
        self.flip = flip
        self.m_orig = m
        self.shift = shift
        self.const = float(p.c @ shift)
        basis = []
        art_pos = {i: self.art_start + c_ for c_, i in enumerate(need_art)}
        for i in range(ms):
            basis.append(art_pos[i] if i in art_pos else slack_index[i])
        self.initial_basis = np.array(basis, dtype=int)

    def to_original(self, xs, p):
        x = self.shift.copy()
        for j, parts in enumerate(self.recover):
            x[j] += sum(sign * xs[col] for col, sign in parts)
        return x


# --------------------------------------------------------------------------
# core iteration


class _State:
    def __init__(self, A, b, basis):
        self.A = A
        self.b = b
        self.basis = np.array(basis, dtype=int)
        self.refactor()

    def refactor(self):
        B = self.A[:, self.basis]
        cond = np.linalg.cond(B) if B.size else 1.0
        if not np.isfinite(cond) or cond > MAX_CONDITION:
            raise LPError(f"basis matrix is numerically singular (condition estimate {cond:.3g})", cond)
        self.Binv = np.linalg.inv(B)
        self.xB = self.Binv @ self.b
        self.since_refactor = 0

    def pivot(self, r, j, col):
        pr = self.Binv[r] / col[r]
        self.Binv -= np.outer(col, pr)
        self.Binv[r] = pr
        self.basis[r] = j
        self.since_refactor += 1
        if self.since_refactor >= REFACTOR_EVERY:
            self.refactor()


def _run_phase(state, c, allowed, max_iter, counter):
    """Iterate to optimality for cost ``c`` over ``allowed`` columns."""
    A = state.A
    bland = False
    stall = 0
    while True:
        if counter[0] >= max_iter:
            raise LPError(f"iteration limit {max_iter} reached")
        y = c[state.basis] @ state.Binv
        d = c - y @ A
        d[~allowed] = 0.0
        d[state.basis] = 0.0
        cand = np.flatnonzero(d < -TOL_OPT)
        if len(cand) == 0:
            return OPTIMAL
        j = int(cand[0]) if bland else int(cand[np.argmin(d[cand])])
        col = state.Binv @ A[:, j]
        pos = np.flatnonzero(col > TOL_PIVOT)
        if len(pos) == 0:
            return UNBOUNDED
        xb = np.maximum(state.xB, 0.0)
        if bland:
            ratios = xb[pos] / col[pos]
            theta = ratios.min()
            ties = pos[ratios <= theta + 1e-12 * (1 + theta)]
            r = int(ties[np.argmin(state.basis[ties])])
        else:
            bound = ((xb[pos] + TOL_FEAS) / col[pos]).min()
            ratios = xb[pos] / col[pos]
            ok = pos[ratios <= bound]
            r = int(ok[np.argmax(col[ok])])
        theta = xb[r] / col[r]
        improving = theta * (-d[j]) > 1e-12
        state.xB = state.xB - theta * col
        state.xB[r] = theta
        state.pivot(r, j, col)
        counter[0] += 1
        if improving:
            stall = 0
            bland = False
        else:
            stall += 1
            if stall >= STALL_LIMIT:
                bland = True


def _drive_out_artificials(state, std, allowed):
    """Pivot zero-level artificials out of the basis; drop redundant rows."""
    r = 0
    removed = []
    keep_rows = list(range(len(state.b)))
    while r < len(state.basis):
        if state.basis[r] >= std.art_start:
            row = state.Binv[r] @ state.A
            row[~allowed] = 0.0
            row[state.basis] = 0.0
            j = int(np.argmax(np.abs(row)))
            if abs(row[j]) > 1e-7:
                col = state.Binv @ state.A[:, j]
                state.xB[r] = 0.0
                state.pivot(r, j, col)
            else:
                removed.append(keep_rows[r])
                del keep_rows[r]
                state.A = np.delete(state.A, r, axis=0)
                state.b = np.delete(state.b, r)
                state.basis = np.delete(state.basis, r)
                state.refactor()
                continue
        r += 1
    return removed, keep_rows


def solve_simplex(problem: LpStandardForm, basis=None, max_iter=50_000) -> LpSolution:
    """Solve ``problem`` by two-phase revised simplex.

    ``basis`` (column indices of a previous solution's standardized problem)
    warm-starts phase 2 when it is primal feasible.
    """
    std = _Standard(problem)
    counter = [0]
    n_all = std.A.shape[1]
    allowed2 = np.ones(n_all, bool)
    allowed2[std.art_start:] = False
    removed, keep_rows = [], list(range(len(std.b)))
    state = None
    phase1 = 0
    if basis is not None:
        try:
            cand = _State(std.A, std.b, basis)
            if len(cand.basis) == len(std.b) and np.all(cand.basis < std.art_start) \
                    and np.all(cand.xB >= -TOL_FEAS * (1 + np.abs(std.b).max(initial=0))):
                state = cand
        except (LPError, IndexError, ValueError):
            state = None
    if state is None:
        state = _State(std.A.copy(), std.b.copy(), std.initial_basis)
        if std.n_art:
            c1 = np.zeros(n_all)
            c1[std.art_start:] = 1.0
            _run_phase(state, c1, np.ones(n_all, bool), max_iter, counter)
            infeas = float(np.maximum(state.xB, 0) @ c1[state.basis])
            if infeas > TOL_FEAS * max(1.0, np.abs(std.b).max(initial=0.0)) * 10:
                return LpSolution(INFEASIBLE, iterations=counter[0], phase1_iterations=counter[0],
                                  info={"phase1_infeasibility": infeas})
            removed, keep_rows = _drive_out_artificials(state, std, allowed2)
        phase1 = counter[0]
    status = _run_phase(state, std.c, allowed2, max_iter, counter)
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, iterations=counter[0], phase1_iterations=phase1)
    state.refactor()
    xs = np.zeros(n_all)
    xs[state.basis] = np.maximum(state.xB, 0.0)
    x = std.to_original(xs, problem)
    ys_kept = std.c[state.basis] @ state.Binv
    ys = np.zeros(len(std.b))
    ys[keep_rows] = ys_kept
    ys = ys * std.flip
    duals = ys[: std.m_orig]
    objective = float(problem.c @ x)
    dual_objective = float(ys_kept @ state.b) + std.const
    reduced = problem.c - problem.A.T @ duals
    return LpSolution(
        OPTIMAL, x=x, objective=objective, duals=duals, reduced_costs=reduced,
        dual_objective=dual_objective, iterations=counter[0], phase1_iterations=phase1,
        basis=tuple(int(v) for v in state.basis),
        info={"removed_rows": removed, "rows": int(std.A.shape[0]), "columns": int(n_all)},
    )


# --------------------------------------------------------------------------
# plain-text instance dump
#
#   LPDUMP 1
#   DIMS <m> <n>
#   SENSES <E|L|G> ...           one per row
#   RHS <b_1> ... <b_m>
#   OBJ <c_1> ... <c_n>
#   LB <...>  /  UB <...>        'inf' / '-inf' allowed
#   NNZ <k>
#   <row> <col> <value>          k lines, 0-based indices
#   END

_SENSE_CODE = {"=": "E", "<=": "L", ">=": "G"}


def write_lp_dump(problem: LpStandardForm, fh):
    m, n = problem.A.shape
    fh.write("LPDUMP 1\n")
    fh.write(f"DIMS {m} {n}\n")
    fh.write("SENSES " + " ".join(_SENSE_CODE[s] for s in problem.senses) + "\n")
    fh.write("RHS " + " ".join(repr(float(v)) for v in problem.b) + "\n")
    fh.write("OBJ " + " ".join(repr(float(v)) for v in problem.c) + "\n")
    fh.write("LB " + " ".join(repr(float(v)) for v in problem.lb) + "\n")
    fh.write("UB " + " ".join(repr(float(v)) for v in problem.ub) + "\n")
    rows, cols = np.nonzero(problem.A)
    fh.write(f"NNZ {len(rows)}\n")
    for i, j in zip(rows, cols):
        fh.write(f"{i} {j} {float(problem.A[i, j])!r}\n")
    fh.write("END\n")


def read_lp_dump(fh) -> LpStandardForm:
    lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "LPDUMP 1":
        raise LPError("not an LPDUMP 1 file")
    fields = {}
    i = 1
    while i < len(lines) and not lines[i].startswith("NNZ"):
        key, _, rest = lines[i].partition(" ")
        fields[key] = rest.split()
        i += 1
    m, n = (int(v) for v in fields["DIMS"])
    k = int(lines[i].split()[1])
    A = np.zeros((m, n))
    for ln in lines[i + 1:i + 1 + k]:
        r, c, v = ln.split()
        A[int(r), int(c)] = float(v)
    if lines[i + 1 + k] != "END":
        raise LPError("LPDUMP missing END marker")
    code = {v: s for s, v in _SENSE_CODE.items()}
    return LpStandardForm(
        c=[float(v) for v in fields.get("OBJ", [])], A=A,
        senses=[code[s] for s in fields.get("SENSES", [])],
        b=[float(v) for v in fields.get("RHS", [])],
        lb=[float(v) for v in fields["LB"]], ub=[float(v) for v in fields["UB"]],
    )
