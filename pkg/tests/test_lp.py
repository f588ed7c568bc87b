import io
import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from occlp.errors import LPError
from occlp.lp import INFEASIBLE, OPTIMAL, UNBOUNDED, LpStandardForm, read_lp_dump, solve_simplex, write_lp_dump


# ---------------------------------------------------------------------------
# oracle: enumerate every vertex of the feasible polytope


def vertex_oracle(c, A, senses, b, lb, ub, chunk=20000):
    """Minimum of c.x over all vertices; inf when there are none."""
    n = len(c)
    E, f, G, h = [], [], [], []
    for a, s, bi in zip(A, senses, b):
        if s == "=":
            E.append(a)
            f.append(bi)
        elif s == "<=":
            G.append(a)
            h.append(bi)
        else:
            G.append(-a)
            h.append(-bi)
    for j in range(n):
        e = np.eye(n)[j]
        G.append(-e)
        h.append(-lb[j])
        if np.isfinite(ub[j]):
            G.append(e)
            h.append(ub[j])
    E, f = np.array(E).reshape(-1, n), np.array(f)
    G, h = np.array(G), np.array(h)
    k = n - len(E)
    best = np.inf
    combos = np.array(list(itertools.combinations(range(len(G)), k)), dtype=int).reshape(-1, k) if k \
        else np.zeros((1, 0), dtype=int)
    for start in range(0, len(combos), chunk):
        S = combos[start:start + chunk]
        M = np.concatenate([np.broadcast_to(E, (len(S),) + E.shape), G[S]], axis=1)
        r = np.concatenate([np.broadcast_to(f, (len(S), len(f))), h[S]], axis=1)
        ok = np.abs(np.linalg.det(M)) > 1e-10
        if not ok.any():
            continue
        x = np.linalg.solve(M[ok], r[ok][..., None])[..., 0]
        feas = np.all(x @ G.T <= h + 1e-9, axis=1)
        if len(E):
            feas &= np.all(np.abs(x @ E.T - f) <= 1e-9, axis=1)
        if feas.any():
            best = min(best, float(np.min(x[feas] @ c)))
    return best


def random_lp(rng, round_to=2):
    m, n = int(rng.integers(1, 7)), int(rng.integers(1, 9))
    A = rng.normal(size=(m, n)).round(round_to)
    x0 = rng.uniform(0, 10, n)
    senses = rng.choice(["<=", ">=", "="], size=m, p=[0.5, 0.3, 0.2])
    if (senses == "=").sum() > n:
        senses[:] = "<="
    s = A @ x0
    b = np.where(senses == "<=", s + rng.uniform(0, 3, m), np.where(senses == ">=", s - rng.uniform(0, 3, m), s))
    c = rng.normal(size=n).round(round_to)
    return LpStandardForm(c, A, list(senses), b, np.zeros(n), np.full(n, 10.0))


def test_against_vertex_enumeration():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(500):
        p = random_lp(rng)
        sol = solve_simplex(p)
        assert sol.status == OPTIMAL
        worst = max(worst, abs(sol.objective - vertex_oracle(p.c, p.A, p.senses, p.b, p.lb, p.ub)))
    assert worst <= 1e-9


# ---------------------------------------------------------------------------
# examples


def test_single_equality():
    sol = solve_simplex(LpStandardForm([1.0], [[1.0]], ["="], [1.0]))
    assert sol.status == OPTIMAL
    assert sol.x[0] == pytest.approx(1.0) and sol.duals[0] == pytest.approx(1.0)


def test_face_of_optima_has_unique_objective():
    sol = solve_simplex(LpStandardForm([-1.0, -1.0], [[1.0, 1.0]], ["<="], [1.0]))
    assert sol.objective == pytest.approx(-1.0, abs=1e-12)


def test_infeasible_and_unbounded():
    assert solve_simplex(LpStandardForm([1.0], [[1.0], [1.0]], ["<=", ">="], [1.0, 2.0])).status == INFEASIBLE
    assert solve_simplex(LpStandardForm([-1.0], [[1.0]], [">="], [0.0])).status == UNBOUNDED


def test_free_and_bounded_variables():
    # min x - y, -2 <= x <= 3, y free, x + y = 1, y <= 4
    p = LpStandardForm([1.0, -1.0], [[1.0, 1.0], [0.0, 1.0]], ["=", "<="], [1.0, 4.0],
                       [-2.0, -np.inf], [3.0, np.inf])
    sol = solve_simplex(p)
    np.testing.assert_allclose(sol.x, [-2.0, 3.0], atol=1e-12)


def test_input_validation():
    with pytest.raises(LPError):
        LpStandardForm([1.0, np.nan], [[1.0, 1.0]], ["<="], [1.0])
    with pytest.raises(LPError):
        LpStandardForm([1.0], [[1.0]], ["<"], [1.0])
    with pytest.raises(LPError):
        LpStandardForm([1.0, 2.0], [[1.0]], ["<="], [1.0])


# ---------------------------------------------------------------------------
# invariants


def _slack_ok(p, x, tol=1e-8):
    r = p.A @ x - p.b
    for ri, s in zip(r, p.senses):
        if s == "=" and abs(ri) > tol or s == "<=" and ri > tol or s == ">=" and ri < -tol:
            return False
    return np.all(x >= p.lb - tol) and np.all(x <= p.ub + tol)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_feasibility_and_duality(seed):
    p = random_lp(np.random.default_rng(seed))
    sol = solve_simplex(p)
    assert sol.status == OPTIMAL
    assert _slack_ok(p, sol.x)
    assert sol.dual_objective <= sol.objective + 1e-8
    assert sol.gap <= 1e-8 * max(1.0, abs(sol.objective))
    # dual signs for a minimization
    for y, s in zip(sol.duals, p.senses):
        assert s != "<=" or y <= 1e-9
        assert s != ">=" or y >= -1e-9
    # complementary slackness on rows
    r = p.A @ sol.x - p.b
    assert np.all(np.abs(sol.duals * r) <= 1e-7)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_resolve_from_basis_takes_no_pivots(seed):
    p = random_lp(np.random.default_rng(seed))
    first = solve_simplex(p)
    again = solve_simplex(p, basis=first.basis)
    assert again.iterations == 0
    assert again.objective == pytest.approx(first.objective, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.01, 100.0))
def test_objective_scaling_keeps_basis(seed, alpha):
    p = random_lp(np.random.default_rng(seed), round_to=12)
    first = solve_simplex(p)
    scaled = solve_simplex(LpStandardForm(alpha * p.c, p.A, p.senses, p.b, p.lb, p.ub))
    assert scaled.objective == pytest.approx(alpha * first.objective, rel=1e-9, abs=1e-9)
    assert set(scaled.basis) == set(first.basis)


def test_dump_round_trip():
    rng = np.random.default_rng(5)
    p = random_lp(rng)
    p.ub[0] = np.inf
    buf = io.StringIO()
    write_lp_dump(p, buf)
    q = read_lp_dump(io.StringIO(buf.getvalue()))
    for name in ("c", "A", "b", "lb", "ub"):
        np.testing.assert_array_equal(getattr(p, name), getattr(q, name))
    assert list(p.senses) == list(q.senses)
    assert solve_simplex(q).objective == solve_simplex(p).objective


def test_dump_rejects_garbage():
    with pytest.raises(LPError):
        read_lp_dump(io.StringIO("hello\n"))
