import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import box_eq_qp, grid_search_box_qp
from oascen.errors import ValidationError
from oascen.qpsolver import QpProblem, QpStatus, kkt_residual, solve_qp, solve_qp_batch

INF = np.inf


def _random_box_eq(rng, n):
    """Strictly convex QP with a box and one equality, feasible by construction."""
    M = rng.normal(size=(n, n))
    Q = M @ M.T + 0.1 * np.eye(n)
    q = rng.normal(scale=3.0, size=n)
    lo = rng.uniform(-3, 0, n)
    hi = lo + rng.uniform(0.5, 4, n)
    a = rng.choice([-1.0, 1.0], n) * rng.uniform(0.5, 2, n)
    x0 = rng.uniform(lo, hi)
    return Q, q, a, float(a @ x0), lo, hi


def _as_problem(Q, q, a, beta, lo, hi):
    return QpProblem(Q, q, A_eq=a[None, :], b_eq=[beta], A_in=np.eye(len(q)), lb=lo, ub=hi)


def _dual_value(p, s):
    """Lagrangian at (x*, nu, mu); equals the dual function for convex p."""
    x = s.x_star
    val = 0.5 * x @ p.Q @ x + p.q @ x + s.nu @ (p.A_eq @ x - p.b_eq)
    Ax = p.A_in @ x
    hi = np.isfinite(p.ub)
    lo = np.isfinite(p.lb)
    val += s.mu_hi[hi] @ (Ax[hi] - p.ub[hi]) + s.mu_lo[lo] @ (p.lb[lo] - Ax[lo])
    return val


def test_lower_bound_example():
    s = solve_qp(QpProblem([[2.0]], [0.0], A_in=[[1.0]], lb=[1.0], ub=[INF]))
    assert s.status is QpStatus.OPTIMAL
    assert s.x_star[0] == pytest.approx(1.0, abs=1e-9)
    assert s.obj == pytest.approx(1.0, abs=1e-9)
    assert s.mu_lo[0] == pytest.approx(2.0, abs=1e-9)
    grid = np.linspace(0, 5, 50001)
    feas = grid[grid >= 1]
    assert s.obj == pytest.approx(np.min(feas ** 2), abs=1e-9)


def test_equality_example_sign_convention():
    s = solve_qp(QpProblem(2 * np.eye(2), [0.0, 0.0], A_eq=[[1.0, 1.0]], b_eq=[2.0]))
    assert s.status is QpStatus.OPTIMAL
    np.testing.assert_allclose(s.x_star, [1.0, 1.0], atol=1e-9)
    assert s.obj == pytest.approx(2.0, abs=1e-9)
    assert s.nu[0] == pytest.approx(-2.0, abs=1e-9)


def test_unbounded():
    assert solve_qp(QpProblem([[0.0]], [-1.0])).status is QpStatus.UNBOUNDED


def test_infeasible():
    p = QpProblem([[0.0]], [1.0], A_in=[[1.0], [1.0]], lb=[2.0, -INF], ub=[INF, 1.0])
    assert solve_qp(p).status is QpStatus.INFEASIBLE


def test_degenerate_flag():
    # constraint active exactly at the unconstrained minimiser
    s = solve_qp(QpProblem([[2.0]], [-2.0], A_in=[[1.0]], ub=[1.0]))
    assert s.status is QpStatus.OPTIMAL and s.degenerate
    s = solve_qp(QpProblem([[2.0]], [-4.0], A_in=[[1.0]], ub=[1.0]))
    assert not s.degenerate and s.mu_hi[0] == pytest.approx(2.0)


def test_lp_path():
    s = solve_qp(QpProblem(np.zeros((2, 2)), [1.0, 2.0], A_eq=[[1.0, 1.0]], b_eq=[3.0],
                           A_in=np.eye(2), lb=[0.0, 0.0], ub=[2.0, 2.0]))
    np.testing.assert_allclose(s.x_star, [2.0, 1.0], atol=1e-9)
    assert s.obj == pytest.approx(4.0)
    assert s.kkt_residual <= 1e-6


@pytest.mark.parametrize("kw, match", [
    (dict(Q=[[1.0, 2.0], [0.0, 1.0]], q=[0, 0]), "symmetric"),
    (dict(Q=[[-1.0]], q=[0.0]), "semidefinite"),
    (dict(Q=[[1.0]], q=[0.0], A_in=[[1.0]], lb=[2.0], ub=[1.0]), "lb > ub"),
    (dict(Q=[[1.0]], q=[0.0, 1.0]), "shape"),
    (dict(Q=[[1.0]], q=[0.0], A_eq=[[1.0, 1.0]], b_eq=[1.0]), "columns"),
])
def test_problem_validation(kw, match):
    with pytest.raises(ValidationError, match=match):
        QpProblem(**kw)


def test_batch_matches_single(rng):
    Q, q, a, beta, lo, hi = _random_box_eq(rng, 4)
    qs = np.column_stack([q, -q, 2 * q])
    batch = solve_qp_batch(Q, qs, a[None, :], [beta], np.eye(4), lo, hi)
    for j, s in enumerate(batch):
        single = solve_qp(QpProblem(Q, qs[:, j], a[None, :], [beta], np.eye(4), lo, hi))
        np.testing.assert_allclose(s.x_star, single.x_star, atol=1e-9)


def test_random_instances_match_oracle():
    """200 box-plus-equality instances against active-set enumeration."""
    rng = np.random.default_rng(2024)
    for _ in range(200):
        n = int(rng.integers(1, 7))
        Q, q, a, beta, lo, hi = _random_box_eq(rng, n)
        p = _as_problem(Q, q, a, beta, lo, hi)
        s = solve_qp(p)
        f_ref, _ = box_eq_qp(Q, q, a, beta, lo, hi)
        assert s.status is QpStatus.OPTIMAL
        assert abs(s.obj - f_ref) <= 1e-5 * max(1.0, abs(f_ref))
        assert kkt_residual(p, s.x_star, s.nu, s.mu_lo, s.mu_hi) <= 1e-6


def test_enumeration_oracle_against_grid_search():
    # the enumeration oracle itself is never beaten by a fine lattice
    rng = np.random.default_rng(7)
    for _ in range(20):
        Q, q, a, beta, lo, hi = _random_box_eq(rng, 3)
        f_ref, _ = box_eq_qp(Q, q, a, beta, lo, hi)
        f_grid = grid_search_box_qp(Q, q, a, beta, lo, hi)
        assert f_grid >= f_ref - 1e-9
        assert f_grid - f_ref <= 0.05 * max(1.0, abs(f_ref))


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 6))
def test_strong_duality_and_dual_signs(seed, n):
    rng = np.random.default_rng(seed)
    p = _as_problem(*_random_box_eq(rng, n))
    s = solve_qp(p)
    assert s.status is QpStatus.OPTIMAL
    assert np.all(s.mu_lo >= 0) and np.all(s.mu_hi >= 0)
    assert abs(_dual_value(p, s) - s.obj) <= 1e-6 * max(1.0, abs(s.obj))
    assert s.kkt_residual <= 1e-6


@settings(max_examples=25)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 5))
def test_cost_scaling(seed, n):
    rng = np.random.default_rng(seed)
    Q, q, a, beta, lo, hi = _random_box_eq(rng, n)
    s1 = solve_qp(_as_problem(Q, q, a, beta, lo, hi))
    s10 = solve_qp(_as_problem(10 * Q, 10 * q, a, beta, lo, hi))
    np.testing.assert_allclose(s10.x_star, s1.x_star, atol=1e-7)
    np.testing.assert_allclose(s10.nu, 10 * s1.nu, atol=1e-6 * max(1, np.abs(s10.nu).max()))
    np.testing.assert_allclose(s10.mu_lo - s10.mu_hi, 10 * (s1.mu_lo - s1.mu_hi),
                               atol=1e-6 * max(1.0, np.abs(s10.mu_lo).max(), np.abs(s10.mu_hi).max()))
