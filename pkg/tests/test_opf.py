import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings, strategies as st
from scipy.optimize import linprog

from conftest import random_grid, toy_a
from oracles import lp_vertex_opf, qp_face_opf
from pipeline import binding_pattern as _binding_pattern, same_pattern as _same_pattern
from oascen.errors import InfeasibleDispatch, InfeasibleReserve, ValidationError
from oascen.grid import GeneratorSpec, GridModel, Line
from oascen.opf import (DEFAULT_SCALE, ScaleConstants, scaled_cost, solve_dcopf,
                        solve_reserve_opf)


# -- plain DC-OPF ----------------------------------------------------------

def test_toy_a(grid_a):
    sol = solve_dcopf(grid_a, [0.0, 80.0])
    np.testing.assert_allclose(sol.p_star.ravel(), [50.0, 30.0], atol=1e-6)
    assert sol.cost == pytest.approx(1100.0, abs=1e-6)
    np.testing.assert_allclose(sol.lmp.ravel(), [10.0, 20.0], atol=1e-6)
    beta_lo, beta_hi = sol.flow_duals
    assert beta_hi[0, 0] == pytest.approx(10.0, abs=1e-6)   # congestion rent per MW
    assert beta_lo[0, 0] == pytest.approx(0.0, abs=1e-9)
    assert sol.flows[0, 0] == pytest.approx(50.0, abs=1e-6)
    assert not sol.degenerate.any()


def test_toy_a_matches_vertex_enumeration(grid_a):
    assert lp_vertex_opf(grid_a, [0.0, 80.0]) == pytest.approx(1100.0)


def test_toy_b(grid_b):
    sol = solve_dcopf(grid_b, [30.0])
    np.testing.assert_allclose(sol.p_star.ravel(), [20.0, 10.0], atol=1e-6)
    assert sol.cost == pytest.approx(600.0, abs=1e-6)
    assert sol.lmp[0, 0] == pytest.approx(40.0, abs=1e-6)
    assert qp_face_opf(grid_b, [30.0])[0] == pytest.approx(600.0)


def test_zero_load(grid_a):
    sol = solve_dcopf(grid_a, np.zeros((2, 3)))
    np.testing.assert_allclose(sol.p_star, 0.0, atol=1e-9)
    assert sol.cost == pytest.approx(0.0, abs=1e-9)
    assert np.all(np.isfinite(sol.lmp))


def test_infeasible_dispatch(grid_a):
    with pytest.raises(InfeasibleDispatch):
        solve_dcopf(grid_a, [0.0, 160.0])    # 100 local + 50 import < 160


def test_bad_load_shape(grid_a):
    with pytest.raises(ValidationError):
        solve_dcopf(grid_a, [1.0, 2.0, 3.0])
    with pytest.raises(ValidationError):
        solve_dcopf(grid_a, [1.0, np.nan])


def test_hours_are_independent(grid_a):
    loads = np.array([[0.0, 10.0, 5.0], [80.0, 20.0, 40.0]])
    joint = solve_dcopf(grid_a, loads)
    for t in range(3):
        single = solve_dcopf(grid_a, loads[:, t])
        np.testing.assert_allclose(joint.p_star[:, t], single.p_star[:, 0], atol=1e-9)
        np.testing.assert_allclose(joint.lmp[:, t], single.lmp[:, 0], atol=1e-9)


@given(st.integers(0, 2 ** 32 - 1), st.booleans())
def test_aggregate_balance_and_limits(seed, quadratic):
    rng = np.random.default_rng(seed)
    g = random_grid(rng, quadratic=quadratic)
    d = rng.uniform(0, 60, (g.n_nodes, 3))
    try:
        sol = solve_dcopf(g, d)
    except InfeasibleDispatch:
        return
    np.testing.assert_allclose(sol.p_star.sum(axis=0), d.sum(axis=0), atol=1e-6)
    pmax = np.array([x.p_max for x in g.generators])[:, None]
    assert np.all(sol.p_star >= -1e-6) and np.all(sol.p_star <= pmax + 1e-6)
    if g.lines:
        smax = np.array([ln.s_mw for ln in g.lines])[:, None]
        assert np.all(np.abs(sol.flows) <= smax + 1e-6)


@given(st.integers(0, 2 ** 32 - 1))
def test_uncongested_single_price(seed):
    rng = np.random.default_rng(seed)
    g = random_grid(rng, quadratic=bool(seed % 2))
    d = rng.uniform(0, 40, (g.n_nodes, 2))
    big = GridModel(g.nodes, g.ref, tuple(Line(ln.i, ln.j, ln.b_pu, 1e4) for ln in g.lines),
                    g.generators, g.base_mva)
    try:
        sol = solve_dcopf(big, d)
    except InfeasibleDispatch:
        return
    for t in range(d.shape[1]):
        assert np.ptp(sol.lmp[:, t]) <= 1e-6 * max(1.0, np.abs(sol.lmp[:, t]).max())


@settings(suppress_health_check=[HealthCheck.filter_too_much, HealthCheck.too_slow])
@given(st.integers(0, 2 ** 32 - 1))
def test_lmp_is_marginal_cost(seed):
    rng = np.random.default_rng(seed)
    g = random_grid(rng, quadratic=bool(seed % 2))
    d = rng.uniform(5, 50, g.n_nodes)
    i = int(rng.integers(0, g.n_nodes))
    h = 0.1
    e = np.zeros(g.n_nodes)
    e[i] = h
    try:
        base, up, dn = (solve_dcopf(g, d + s * e) for s in (0, 1, -1))
    except InfeasibleDispatch:
        assume(False)
    assume(not (base.degenerate.any() or up.degenerate.any() or dn.degenerate.any()))
    pat = _binding_pattern(g, base)
    assume(_same_pattern(pat, _binding_pattern(g, up)) and _same_pattern(pat, _binding_pattern(g, dn)))
    fd = (up.cost - dn.cost) / (2 * h)
    assert fd == pytest.approx(base.lmp[i, 0], rel=1e-3, abs=1e-6)


def test_scaled_cost_examples(grid_a):
    class _C:
        cost = 2.008e8
    assert scaled_cost(_C, DEFAULT_SCALE) == pytest.approx(1.0, rel=1e-12)
    _C.cost = 2.0008e8           # 8e4 above the shift is a tenth of the scale
    assert scaled_cost(_C, DEFAULT_SCALE) == pytest.approx(0.1, rel=1e-12)
    _C.cost = 2e8
    assert scaled_cost(_C, DEFAULT_SCALE) == 0.0
    sol = solve_dcopf(grid_a, [0.0, 80.0])
    assert scaled_cost(sol, ScaleConstants(0.0, 1000.0)) == pytest.approx(1.1, abs=1e-9)


def test_scale_constants_validation():
    with pytest.raises(ValidationError):
        ScaleConstants(0.0, 0.0)


# -- reserve OPF ----------------------------------------------------------

def test_reserve_toy_a_upward(grid_a):
    res = solve_reserve_opf(grid_a, [0.0, 80.0], [0.0, 10.0])
    np.testing.assert_allclose(res.r_up.ravel(), [0.0, 10.0], atol=1e-6)
    np.testing.assert_allclose(res.r_dn.ravel(), [0.0, 0.0], atol=1e-6)
    np.testing.assert_allclose(res.p_da.ravel(), [50.0, 30.0], atol=1e-6)
    assert res.cost == pytest.approx(1100.0, abs=1e-6)
    assert 0 < res.reg_cost < 1e-2


def test_reserve_toy_a_limits(grid_a):
    # node 2 can hold at most 100 MW of combined output with 50 MW imported
    solve_reserve_opf(grid_a, [0.0, 80.0], [0.0, 60.0])
    with pytest.raises(InfeasibleReserve):
        solve_reserve_opf(grid_a, [0.0, 80.0], [0.0, 80.0])


def test_reserve_zero_error_collapses(grid_a):
    d = np.array([[0.0, 20.0], [80.0, 40.0]])
    res = solve_reserve_opf(grid_a, d, np.zeros_like(d))
    plain = solve_dcopf(grid_a, d)
    np.testing.assert_allclose(res.r_up, 0.0, atol=1e-7)
    np.testing.assert_allclose(res.r_dn, 0.0, atol=1e-7)
    np.testing.assert_allclose(res.p_da, plain.p_star, atol=1e-6)
    assert res.cost == pytest.approx(plain.cost, rel=1e-9)


def test_reserve_shape_and_formulation_errors(grid_a):
    with pytest.raises(ValidationError):
        solve_reserve_opf(grid_a, [0.0, 80.0], np.zeros((2, 2)))
    with pytest.raises(ValidationError):
        solve_reserve_opf(grid_a, [0.0, 80.0], [0.0, 1.0], formulation="other")


def test_combined_formulation_relaxes_da_limits(grid_a):
    # without stand-alone DA limits the schedule can lean on the reserve flow
    combined = solve_reserve_opf(grid_a, [0.0, 80.0], [0.0, 0.0], formulation="combined")
    physical = solve_reserve_opf(grid_a, [0.0, 80.0], [0.0, 0.0])
    assert combined.cost <= physical.cost + 1e-6


def _reserve_lp(grid, d, eps):
    """Same physical reserve model as an LP in unscaled angles, via HiGHS."""
    G, N, L = grid.n_gens, grid.n_nodes, len(grid.lines)
    nodes = list(grid.nodes)
    M = np.zeros((N, G))
    for k, gen in enumerate(grid.generators):
        M[nodes.index(gen.node), k] = 1
    F = np.zeros((L, N))
    for k, ln in enumerate(grid.lines):
        y = grid.base_mva * ln.b_pu
        F[k, nodes.index(ln.i)], F[k, nodes.index(ln.j)] = y, -y
    C = np.zeros((L, N))
    for k, ln in enumerate(grid.lines):
        C[k, nodes.index(ln.i)], C[k, nodes.index(ln.j)] = 1, -1
    lap = C.T @ F
    n = 3 * G + 2 * N
    P, U, D, T, Tb = (slice(0, G), slice(G, 2 * G), slice(2 * G, 3 * G),
                      slice(3 * G, 3 * G + N), slice(3 * G + N, n))
    c = np.zeros(n)
    c[P] = [x.c1 for x in grid.generators]
    A_eq, b_eq = [], []
    for i in range(N):
        row = np.zeros(n); row[P] = M[i]; row[T] = -lap[i]; A_eq.append(row); b_eq.append(d[i])
        row = np.zeros(n); row[U] = M[i]; row[D] = -M[i]; row[Tb] = -lap[i]; A_eq.append(row); b_eq.append(eps[i])
    r = nodes.index(grid.ref)
    for off in (3 * G, 3 * G + N):
        row = np.zeros(n); row[off + r] = 1; A_eq.append(row); b_eq.append(0.0)
    pmax = np.array([x.p_max for x in grid.generators])
    smax = np.array([ln.s_mw for ln in grid.lines])
    A_ub, b_ub = [], []
    for g in range(G):
        row = np.zeros(n); row[g] = 1; row[G + g] = 1; row[2 * G + g] = -1
        A_ub += [row, -row]; b_ub += [pmax[g], 0.0]
    for k in range(L):
        row = np.zeros(n); row[T] = F[k]; row[Tb] = F[k]
        A_ub += [row, -row]; b_ub += [smax[k], smax[k]]
        row = np.zeros(n); row[T] = F[k]
        A_ub += [row, -row]; b_ub += [smax[k], smax[k]]
    bounds = [(0, pmax[g]) for g in range(G)] + [(0, None)] * (2 * G) + [(None, None)] * (2 * N)
    out = linprog(c, A_ub=np.array(A_ub) if A_ub else None, b_ub=b_ub or None,
                  A_eq=np.array(A_eq), b_eq=b_eq, bounds=bounds, method="highs")
    return out


@settings(max_examples=30)
@given(st.integers(0, 2 ** 32 - 1))
def test_reserve_matches_lp_oracle(seed):
    rng = np.random.default_rng(seed)
    g = random_grid(rng)
    d = rng.uniform(0, 50, g.n_nodes)
    eps = rng.uniform(-15, 30, g.n_nodes)
    lp = _reserve_lp(g, d, eps)
    try:
        res = solve_reserve_opf(g, d, eps)
    except (InfeasibleReserve, InfeasibleDispatch):
        assert lp.status == 2
        return
    assert lp.status == 0
    c0 = sum(x.c0 for x in g.generators)
    # DA cost is the LP optimum; the tie-break may not trade it away
    assert res.cost == pytest.approx(lp.fun + c0, rel=1e-7, abs=1e-6)


@pytest.mark.parametrize("allocation", ["tiebreak", "merit"])
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_reserve_invariants(allocation, seed):
    rng = np.random.default_rng(seed)
    g = random_grid(rng, quadratic=bool(seed % 2))
    d = rng.uniform(0, 40, (g.n_nodes, 2))
    eps = rng.uniform(-10, 20, d.shape)
    try:
        res = solve_reserve_opf(g, d, eps, allocation=allocation)
    except (InfeasibleReserve, InfeasibleDispatch):
        return
    pmax = np.array([x.p_max for x in g.generators])[:, None]
    assert np.all(res.r_up >= 0) and np.all(res.r_dn >= 0) and np.all(res.p_da >= 0)
    assert np.all(res.p_da + res.r_up - res.r_dn <= pmax + 1e-6)
    # reserves net to eps node by node, modulo network flows, so in total they sum to eps
    np.testing.assert_allclose((res.r_up - res.r_dn).sum(axis=0), eps.sum(axis=0), atol=1e-6)
    if g.lines:
        idx = {n: k for k, n in enumerate(g.nodes)}
        th = res.theta + res.theta_bar
        for ln in g.lines:
            f = g.base_mva * ln.b_pu * (th[idx[ln.i]] - th[idx[ln.j]])
            assert np.all(np.abs(f) <= ln.s_mw + 1e-6)
    # the reserve variables never constrain the stand-alone DA schedule
    assert res.cost == pytest.approx(solve_dcopf(g, d).cost, rel=1e-7, abs=1e-6)


def test_merit_allocation_toy_a(grid_a):
    # the down move lands on the dear unit only; the tie-break splits it
    merit = solve_reserve_opf(grid_a, [0.0, 80.0], [0.0, -10.0], allocation="merit")
    np.testing.assert_allclose(merit.r_dn.ravel(), [0.0, 10.0], atol=1e-6)
    np.testing.assert_allclose(merit.r_up.ravel(), [0.0, 0.0], atol=1e-6)
    even = solve_reserve_opf(grid_a, [0.0, 80.0], [0.0, -10.0])
    np.testing.assert_allclose(even.r_dn.ravel(), [5.0, 5.0], atol=1e-4)
    assert merit.cost == pytest.approx(even.cost) and merit.reg_cost == 0.0
    up = solve_reserve_opf(grid_a, [0.0, 80.0], [0.0, 10.0], allocation="merit")
    np.testing.assert_allclose(up.r_up.ravel(), [0.0, 10.0], atol=1e-6)
    with pytest.raises(InfeasibleReserve):
        solve_reserve_opf(grid_a, [0.0, 80.0], [0.0, 80.0], allocation="merit")
    with pytest.raises(ValidationError):
        solve_reserve_opf(grid_a, [0.0, 80.0], [0.0, 1.0], formulation="combined", allocation="merit")
    with pytest.raises(ValidationError):
        solve_reserve_opf(grid_a, [0.0, 80.0], [0.0, 1.0], allocation="cheapest")


@settings(max_examples=20)
@given(st.integers(0, 2 ** 32 - 1))
def test_merit_redispatch_is_economic(seed):
    rng = np.random.default_rng(seed)
    g = random_grid(rng, quadratic=True)
    d = rng.uniform(0, 40, g.n_nodes)
    eps = rng.uniform(-10, 20, g.n_nodes)
    try:
        res = solve_reserve_opf(g, d, eps, allocation="merit")
    except InfeasibleReserve:
        return
    tie = solve_reserve_opf(g, d, eps)
    rt = solve_dcopf(g, d + eps)
    np.testing.assert_allclose(res.p_da + res.r_up - res.r_dn, rt.p_star, atol=1e-6)
    assert res.cost == pytest.approx(tie.cost, rel=1e-7, abs=1e-6)
