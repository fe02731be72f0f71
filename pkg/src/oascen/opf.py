"""DC optimal power flow and reserve-allocation OPF.

Net-load profiles are arrays of shape ``(n_nodes, T)`` in MW, rows ordered as
``grid.nodes``. Hours are independent (no ramping), so every hour is its own
QP; all hours share the constraint matrices and are solved as one batch.

Line flows are ``base_mva * b_pu * (theta_i - theta_j)`` in MW with angles in
radians.
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleDispatch, InfeasibleReserve, SolverFailure, ValidationError
from .grid import GridModel
from .qpsolver import TOL_KKT, QpStatus, solve_qp_batch

log = logging.getLogger(__name__)

RESERVE_REG = 1e-4     # $/MWh tie-break on reserve volume
RESERVE_REG_Q = 1e-6   # $/MW^2h; makes the split of reserve across units unique


@dataclass(frozen=True)
class ScaleConstants:
    delta_shift: float
    delta_scale: float

    def __post_init__(self):
        if not self.delta_scale > 0:
            raise ValidationError("delta_scale must be positive")


DEFAULT_SCALE = ScaleConstants(2e8, 8e5)


@dataclass
class OpfSolution:
    p_star: np.ndarray        # (G, T) MW
    theta: np.ndarray         # (N, T) rad
    cost: float               # $ over the horizon, including c0
    lmp: np.ndarray           # (N, T) $/MWh
    gen_duals: tuple          # (rho_lo, rho_hi), each (G, T)
    flow_duals: tuple         # (beta_lo, beta_hi), each (L, T)
    ref_dual: np.ndarray      # (T,)
    degenerate: np.ndarray    # (T,) bool
    flows: np.ndarray         # (L, T) MW
    hourly_cost: np.ndarray = None
    kkt_residual: float = 0.0

    @property
    def any_degenerate(self) -> bool:
        return bool(self.degenerate.any())


@dataclass
class ReserveSolution:
    p_da: np.ndarray          # (G, T)
    r_up: np.ndarray          # (G, T)
    r_dn: np.ndarray          # (G, T)
    theta: np.ndarray         # (N, T)
    theta_bar: np.ndarray     # (N, T)
    cost: float               # DA energy cost, regulariser excluded
    reg_cost: float
    degenerate: np.ndarray    # (T,)


def _as_profile(grid: GridModel, load) -> np.ndarray:
    d = np.asarray(getattr(load, "values", load), dtype=float)
    if d.ndim == 1:
        d = d[:, None]
    if d.shape[0] != grid.n_nodes or d.shape[1] == 0:
        raise ValidationError(f"load profile shape {d.shape} does not match {grid.n_nodes} nodes")
    if not np.all(np.isfinite(d)):
        raise ValidationError("load profile contains non-finite values")
    return d


@functools.lru_cache(maxsize=64)
def _dcopf_matrices(grid: GridModel):
    G, N = grid.n_gens, grid.n_nodes
    c0, c1, c2, pmax = grid.cost_arrays()
    C = grid.incidence()
    w, smax, ang = _line_weights(grid)
    lap = C.T @ (w[:, None] * C)
    Q = np.zeros((G + N, G + N))
    Q[:G, :G] = np.diag(2.0 * c2)
    q = np.concatenate([c1, np.zeros(N)])
    ref = np.zeros(G + N)
    ref[G + grid.node_index(grid.ref)] = 1.0
    A_eq = np.vstack([np.hstack([grid.gen_map(), -lap]), ref])
    flow = np.hstack([np.zeros((len(grid.lines), G)), w[:, None] * C])
    A_in = np.vstack([np.hstack([np.eye(G), np.zeros((G, N))]), flow])
    lb = np.concatenate([np.zeros(G), -smax])
    ub = np.concatenate([pmax, smax])
    return Q, q, A_eq, A_in, lb, ub, flow, ang


def _line_weights(grid: GridModel):
    # Angles are carried as ang * theta so that MW-per-angle coefficients are O(1);
    # without this the balance rows mix O(1) and O(base_mva * b) entries.
    w = grid.base_mva * np.array([ln.b_pu for ln in grid.lines])
    smax = np.array([ln.s_mw for ln in grid.lines])
    ang = float(np.mean(w)) if w.size else 1.0
    return w / ang, smax, ang


def solve_dcopf(grid: GridModel, load, tol: float = TOL_KKT) -> OpfSolution:
    """Least-cost dispatch of ``load`` (N x T MW) hour by hour.

    ``lmp`` is the marginal cost of one extra MW of net load at each node,
    i.e. the negated equality multiplier of the nodal balance rows.
    """
    d = _as_profile(grid, load)
    T = d.shape[1]
    G, N, L = grid.n_gens, grid.n_nodes, len(grid.lines)
    Q, q, A_eq, A_in, lb, ub, flow, ang = _dcopf_matrices(grid)
    b_eq = np.vstack([d, np.zeros((1, T))])
    sols = solve_qp_batch(Q, q, A_eq, b_eq, A_in, lb, ub, tol=tol)
    _raise_for(sols, InfeasibleDispatch, "net load cannot be served within generator and line limits")
    X = np.column_stack([s.x_star for s in sols])
    nu = np.column_stack([s.nu for s in sols])
    mu_lo = np.column_stack([s.mu_lo for s in sols])
    mu_hi = np.column_stack([s.mu_hi for s in sols])
    c0, c1, c2, _ = grid.cost_arrays()
    P = X[:G]
    hourly = (c0[:, None] + c1[:, None] * P + c2[:, None] * P ** 2).sum(axis=0)
    sol = OpfSolution(
        p_star=P,
        theta=X[G:] / ang,
        cost=float(hourly.sum()),
        lmp=-nu[:N],
        gen_duals=(mu_lo[:G], mu_hi[:G]),
        flow_duals=(mu_lo[G:], mu_hi[G:]),
        ref_dual=nu[N],
        degenerate=np.array([s.degenerate for s in sols]),
        flows=flow[:, G:] @ X[G:],
        hourly_cost=hourly,
        kkt_residual=max(s.kkt_residual for s in sols),
    )
    return sol


def _raise_for(sols, infeasible_exc, msg):
    bad = [t for t, s in enumerate(sols) if s.status is QpStatus.INFEASIBLE]
    if bad:
        raise infeasible_exc(f"{msg} (hours {[t + 1 for t in bad]})")
    bad = [t for t, s in enumerate(sols) if s.status is not QpStatus.OPTIMAL]
    if bad:
        raise SolverFailure(f"QP not solved to tolerance in hours {[t + 1 for t in bad]}: "
                            f"{sols[bad[0]].status.value}")


def scaled_cost(sol: OpfSolution, sc: ScaleConstants) -> float:
    """Operating cost mapped to the generator-loss scale: ``(C - shift) / scale``."""
    return (sol.cost - sc.delta_shift) / sc.delta_scale


@functools.lru_cache(maxsize=64)
def _reserve_matrices(grid: GridModel, formulation: str, reg: float, reg_q: float):
    G, N = grid.n_gens, grid.n_nodes
    L = len(grid.lines)
    c0, c1, c2, pmax = grid.cost_arrays()
    C = grid.incidence()
    w, smax, ang = _line_weights(grid)
    lap = C.T @ (w[:, None] * C)
    Mg = grid.gen_map()
    n = 3 * G + 2 * N
    iP, iU, iD = slice(0, G), slice(G, 2 * G), slice(2 * G, 3 * G)
    iT, iTb = slice(3 * G, 3 * G + N), slice(3 * G + N, n)

    Q = np.zeros((n, n))
    Q[iP, iP] = np.diag(2.0 * c2)
    Q[iU, iU] = 2.0 * reg_q * np.eye(G)
    Q[iD, iD] = 2.0 * reg_q * np.eye(G)
    q = np.zeros(n)
    q[iP] = c1
    q[iU] = reg
    q[iD] = reg

    def rows(k):
        return np.zeros((k, n))

    da_bal = rows(N)
    da_bal[:, iP] = Mg
    da_bal[:, iT] = -lap
    res_bal = rows(N)
    res_bal[:, iU] = Mg
    res_bal[:, iD] = -Mg
    res_bal[:, iTb] = -lap
    refs = rows(2)
    r = grid.node_index(grid.ref)
    refs[0, 3 * G + r] = 1.0
    refs[1, 3 * G + N + r] = 1.0
    A_eq = np.vstack([da_bal, res_bal, refs])

    combined = rows(G)
    combined[:, iP] = np.eye(G)
    combined[:, iU] = np.eye(G)
    combined[:, iD] = -np.eye(G)
    comb_flow = rows(L)
    comb_flow[:, iT] = w[:, None] * C
    comb_flow[:, iTb] = w[:, None] * C
    nonneg = np.eye(n)[: 3 * G]
    blocks = [combined, comb_flow, nonneg]
    lbs = [np.full(G, -np.inf), -smax, np.zeros(3 * G)]
    ubs = [pmax, smax, np.full(3 * G, np.inf)]
    if formulation == "physical":
        # DA schedule must be feasible on its own and combined output nonnegative
        lbs[0] = np.zeros(G)
        ubs[2] = np.concatenate([pmax, np.full(2 * G, np.inf)])
        da_flow = rows(L)
        da_flow[:, iT] = w[:, None] * C
        blocks.append(da_flow)
        lbs.append(-smax)
        ubs.append(smax)
    elif formulation != "combined":
        raise ValidationError(f"unknown reserve formulation {formulation!r}")
    A_in = np.vstack(blocks)
    return Q, q, A_eq, A_in, np.concatenate(lbs), np.concatenate(ubs), ang


def solve_reserve_opf(grid: GridModel, da_load, eps, formulation: str = "physical",
                      reg: float = RESERVE_REG, reg_q: float = RESERVE_REG_Q,
                      tol: float = TOL_KKT, allocation: str = "tiebreak") -> ReserveSolution:
    """DA dispatch plus up/down reserves that can deliver the error ``eps``.

    ``eps`` is in MW (extra net load to be covered in real time), same shape
    as ``da_load``. ``formulation="combined"`` drops the stand-alone DA
    generator/flow limits and keeps only the combined ones.

    The DA cost alone leaves the split of reserve across units open.
    ``allocation`` picks one optimum:

    * ``"tiebreak"`` (default): one QP with ``reg * (r_up + r_dn) + reg_q * (r_up^2 + r_dn^2)``
      added and reported as ``reg_cost``. The linear part stops up and down
      reserve cancelling; the quadratic part spreads reserve evenly across
      units that could equally provide it.
    * ``"merit"`` (physical model only): the redispatch point
      ``P + r_up - r_dn`` is the least-cost dispatch of ``da_load + eps``, so
      reserves are deployed in merit order. The redispatch point has its own
      feasible set, independent of ``P``, so this is two DC-OPF solves and the
      DA schedule is unaffected.
    """
    d = _as_profile(grid, da_load)
    e = _as_profile(grid, getattr(eps, "values", eps))
    if e.shape != d.shape:
        raise ValidationError(f"error field shape {e.shape} != load shape {d.shape}")
    if allocation == "merit":
        if formulation != "physical":
            raise ValidationError("merit-order allocation needs the physical formulation")
        return _merit_reserve(grid, d, e, tol)
    if allocation != "tiebreak":
        raise ValidationError(f"unknown reserve allocation {allocation!r}")
    T = d.shape[1]
    G, N = grid.n_gens, grid.n_nodes
    Q, q, A_eq, A_in, lb, ub, ang = _reserve_matrices(grid, formulation, float(reg), float(reg_q))
    b_eq = np.vstack([d, e, np.zeros((2, T))])
    sols = solve_qp_batch(Q, q, A_eq, b_eq, A_in, lb, ub, tol=tol)
    _raise_for(sols, InfeasibleReserve, "forecast error is not deliverable by reserves")
    X = np.column_stack([s.x_star for s in sols])
    P, ru, rd = (np.maximum(X[k * G:(k + 1) * G], 0.0) for k in range(3))
    c0, c1, c2, _ = grid.cost_arrays()
    cost = float((c0[:, None] + c1[:, None] * P + c2[:, None] * P ** 2).sum())
    return ReserveSolution(
        p_da=P,
        r_up=ru,
        r_dn=rd,
        theta=X[3 * G:3 * G + N] / ang,
        theta_bar=X[3 * G + N:] / ang,
        cost=cost,
        reg_cost=float(reg * (ru.sum() + rd.sum()) + reg_q * ((ru ** 2).sum() + (rd ** 2).sum())),
        degenerate=np.array([s.degenerate for s in sols]),
    )


def _merit_reserve(grid: GridModel, d, e, tol) -> ReserveSolution:
    try:
        da = solve_dcopf(grid, d, tol)
        rt = solve_dcopf(grid, d + e, tol)
    except InfeasibleDispatch as exc:
        raise InfeasibleReserve(f"forecast error is not deliverable by reserves: {exc}") from None
    pmax = grid.cost_arrays()[3][:, None]
    p_da = np.clip(da.p_star, 0.0, pmax)
    shift = np.clip(rt.p_star, 0.0, pmax) - p_da
    return ReserveSolution(
        p_da=p_da,
        r_up=np.maximum(shift, 0.0),
        r_dn=np.maximum(-shift, 0.0),
        theta=da.theta,
        theta_bar=rt.theta - da.theta,
        cost=da.cost,
        reg_cost=0.0,
        degenerate=da.degenerate | rt.degenerate,
    )
