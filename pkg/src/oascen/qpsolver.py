"""Dense convex QP solver with exact dual recovery.

Solves

    min  0.5 x'Qx + q'x
    s.t. A_eq x = b_eq
         lb <= A_in x <= ub

with an OSQP-style ADMM iteration on a Ruiz-equilibrated copy of the problem.
The ADMM iterate is only used to guess the active set; a primal-dual
active-set refinement ("polish") then solves the reduced KKT system exactly,
so optimal duals are accurate to machine precision rather than to the ADMM
tolerance.

Sign convention for multipliers (all returned in the original scaling):

    L = 0.5 x'Qx + q'x + nu'(A_eq x - b_eq)
        + mu_hi'(A_in x - ub) + mu_lo'(lb - A_in x)

so stationarity reads ``Qx + q + A_eq'nu + A_in'(mu_hi - mu_lo) = 0``.

Problems that share ``Q``, ``A_eq`` and ``A_in`` but differ in ``q`` and the
bounds (e.g. the hours of a dispatch horizon) can be solved together with
:func:`solve_qp_batch`, which factors the ADMM system once.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

TOL_KKT = 1e-6
MAX_ITER = 50_000
TOL_PSD = 1e-9

_SIGMA = 1e-6
_ALPHA = 1.6
_RHO0 = 0.1
_RHO_EQ_FACTOR = 1e3
_RHO_MIN = 1e-6
_CHECK_EVERY = 25
_EPS_INF = 1e-5
_RUIZ_ITERS = 15
_PROX = 1e-7
_POLISH_GATE = 1e-2
_GI_TRIES = 3
_GI_PROX = 1e-6


class QpStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    MAX_ITER = "MaxIter"


@dataclass(frozen=True)
class QpProblem:
    Q: np.ndarray
    q: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_in: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        q = np.asarray(self.q, dtype=float).reshape(-1)
        n = q.size
        if Q.shape != (n, n):
            raise ValidationError(f"Q has shape {Q.shape}, expected ({n}, {n})")
        if not np.allclose(Q, Q.T, atol=1e-12, rtol=1e-10):
            raise ValidationError("Q is not symmetric")
        if n and np.linalg.eigvalsh(Q).min() < -TOL_PSD * max(1.0, np.abs(Q).max()):
            raise ValidationError("Q is not positive semidefinite")
        A_eq, b_eq = _as_system(self.A_eq, self.b_eq, n, "A_eq")
        A_in, lb = _as_system(self.A_in, self.lb, n, "A_in", fill=-np.inf)
        ub = (np.full(A_in.shape[0], np.inf) if self.ub is None
              else np.asarray(self.ub, dtype=float).reshape(-1))
        if ub.size != A_in.shape[0]:
            raise ValidationError("ub length does not match A_in rows")
        if np.any(lb > ub):
            raise ValidationError("lb > ub for some inequality row")
        for name, val in (("Q", Q), ("q", q), ("A_eq", A_eq), ("b_eq", b_eq), ("A_in", A_in)):
            object.__setattr__(self, name, val)
        object.__setattr__(self, "lb", lb)
        object.__setattr__(self, "ub", ub)

    @property
    def n(self) -> int:
        return self.q.size


def _as_system(A, b, n, name, fill=None):
    if A is None:
        return np.zeros((0, n)), np.zeros(0)
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A.reshape(1, -1)
    if A.shape[1] != n:
        raise ValidationError(f"{name} has {A.shape[1]} columns, expected {n}")
    if b is None:
        if fill is None:
            raise ValidationError(f"{name} given without right-hand side")
        b = np.full(A.shape[0], fill)
    b = np.asarray(b, dtype=float).reshape(-1)
    if b.size != A.shape[0]:
        raise ValidationError(f"right-hand side of {name} has wrong length")
    return A, b


@dataclass
class QpSolution:
    x_star: np.ndarray
    obj: float
    nu: np.ndarray
    mu_lo: np.ndarray
    mu_hi: np.ndarray
    status: QpStatus
    kkt_residual: float
    degenerate: bool = False
    iterations: int = 0
    active_lo: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))
    active_hi: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))

    @property
    def optimal(self) -> bool:
        return self.status is QpStatus.OPTIMAL


def kkt_residual(p: QpProblem, x, nu, mu_lo, mu_hi) -> float:
    """Largest scaled KKT violation at ``(x, nu, mu)``.

    Each block is divided by ``max(1, magnitude of its terms)``, so for data
    of order one this is the plain infinity-norm residual.
    """
    Qx = p.Q @ x
    Ax_eq = p.A_eq @ x
    Ax_in = p.A_in @ x
    dual_terms = p.A_eq.T @ nu + p.A_in.T @ (mu_hi - mu_lo)
    stat = Qx + p.q + dual_terms
    scale = max(1.0, _inf(Qx), _inf(p.q), _inf(dual_terms))
    res = _inf(stat) / scale
    if p.A_eq.shape[0]:
        res = max(res, _inf(Ax_eq - p.b_eq) / max(1.0, _inf(p.b_eq), _inf(Ax_eq)))
    if p.A_in.shape[0]:
        fin_lb = np.where(np.isfinite(p.lb), p.lb, 0.0)
        fin_ub = np.where(np.isfinite(p.ub), p.ub, 0.0)
        bscale = max(1.0, _inf(fin_lb), _inf(fin_ub), _inf(Ax_in))
        viol = np.maximum(p.lb - Ax_in, 0.0) + np.maximum(Ax_in - p.ub, 0.0)
        res = max(res, _inf(viol) / bscale)
        res = max(res, _inf(np.minimum(mu_lo, 0.0)) / scale, _inf(np.minimum(mu_hi, 0.0)) / scale)
        slack_lo = np.where(np.isfinite(p.lb), Ax_in - fin_lb, 0.0)
        slack_hi = np.where(np.isfinite(p.ub), fin_ub - Ax_in, 0.0)
        comp = np.abs(mu_lo * slack_lo) + np.abs(mu_hi * slack_hi)
        res = max(res, _inf(comp) / (scale * bscale))
    return float(res)


def _inf(v) -> float:
    return float(np.max(np.abs(v))) if np.size(v) else 0.0


def solve_qp(p: QpProblem, tol: float = TOL_KKT, max_iter: int = MAX_ITER) -> QpSolution:
    return solve_qp_batch(p.Q, p.q, p.A_eq, p.b_eq, p.A_in, p.lb, p.ub,
                          tol=tol, max_iter=max_iter)[0]


def solve_qp_batch(Q, q, A_eq, b_eq, A_in, lb, ub, tol=TOL_KKT, max_iter=MAX_ITER):
    """Solve several QPs sharing ``Q, A_eq, A_in``.

    ``q``, ``b_eq``, ``lb`` and ``ub`` are either vectors (one problem) or
    2-D arrays with one column per problem. Returns a list of solutions in
    column order.
    """
    m = max(np.asarray(v).shape[1] if np.ndim(v) == 2 else 1
            for v in (q, b_eq, lb, ub) if v is not None)
    cols = lambda v: None if v is None else _col(v, m)  # noqa: E731
    qs, beqs, lbs, ubs = cols(q), cols(b_eq), cols(lb), cols(ub)
    probs = [
        QpProblem(Q, qs[:, j], A_eq, None if beqs is None else beqs[:, j], A_in,
                  None if lbs is None else lbs[:, j], None if ubs is None else ubs[:, j])
        for j in range(m)
    ]
    return _Admm(probs, tol, max_iter).run()


def _col(v, m):
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.shape[1] == 1 and m > 1:
        v = np.repeat(v, m, axis=1)
    return v


class _Admm:
    """ADMM state for a set of QPs with common matrices."""

    def __init__(self, probs: list[QpProblem], tol: float, max_iter: int):
        self.probs = probs
        self.tol = tol
        self.max_iter = max_iter
        p0 = probs[0]
        self.n = p0.n
        self.n_eq = p0.A_eq.shape[0]
        A = np.vstack([p0.A_eq, p0.A_in])
        self.m_rows = A.shape[0]
        l = np.column_stack([np.concatenate([p.b_eq, p.lb]) for p in probs])
        u = np.column_stack([np.concatenate([p.b_eq, p.ub]) for p in probs])
        q = np.column_stack([p.q for p in probs])
        self.eq = np.zeros(self.m_rows, bool)
        self.eq[: self.n_eq] = True
        self._tried = [set() for _ in probs]
        self._gi_budget = [_GI_TRIES] * len(probs)
        self._solved_sets: list[tuple] = []
        self._scale(p0.Q, A, q, l, u)

    def _scale(self, Q, A, q, l, u):
        n, mr = self.n, self.m_rows
        D = np.ones(n)
        E = np.ones(mr)
        P, Ab = Q.copy(), A.copy()
        for _ in range(_RUIZ_ITERS):
            col_norm = np.zeros(n)
            if n:
                col_norm = np.max(np.abs(P), axis=0)
            if mr:
                col_norm = np.maximum(col_norm, np.max(np.abs(Ab), axis=0))
                row_norm = np.max(np.abs(Ab), axis=1)
            else:
                row_norm = np.zeros(0)
            dn = 1.0 / np.sqrt(np.where(col_norm > 1e-12, col_norm, 1.0))
            em = 1.0 / np.sqrt(np.where(row_norm > 1e-12, row_norm, 1.0))
            P = dn[:, None] * P * dn[None, :]
            Ab = em[:, None] * Ab * dn[None, :]
            D *= dn
            E *= em
        qb = D[:, None] * q
        qnorm = np.max(np.abs(qb)) if qb.size else 0.0
        pnorm = np.mean(np.max(np.abs(P), axis=0)) if n else 0.0
        c = 1.0 / max(pnorm, qnorm, 1e-6)
        c = min(c, 1e6)
        self.D, self.E, self.c = D, E, c
        self.P = c * P
        self.A = Ab
        self.q = c * qb
        self.l = E[:, None] * l
        self.u = E[:, None] * u

    def _factor(self, rho_vec):
        M = self.P + _SIGMA * np.eye(self.n) + self.A.T @ (rho_vec[:, None] * self.A)
        return np.linalg.inv(M)

    def _rho_vec(self, rho):
        r = np.full(self.m_rows, rho)
        r[self.eq] = rho * _RHO_EQ_FACTOR
        loose = np.all(~np.isfinite(self.l), axis=1) & np.all(~np.isfinite(self.u), axis=1)
        r[loose] = _RHO_MIN
        return r

    def run(self) -> list[QpSolution]:
        n, mr = self.n, self.m_rows
        m = len(self.probs)
        x = np.zeros((n, m))
        z = np.clip(np.zeros((mr, m)), self.l, self.u)
        y = np.zeros((mr, m))
        rho = _RHO0
        rho_vec = self._rho_vec(rho)
        Minv = self._factor(rho_vec)
        results: list[QpSolution | None] = [None] * m
        pending = np.ones(m, bool)
        x_prev, y_prev = x.copy(), y.copy()
        it = 0
        while it < self.max_iter and pending.any():
            it += 1
            idx = np.flatnonzero(pending)
            xs, zs, ys = x[:, idx], z[:, idx], y[:, idx]
            rhs = _SIGMA * xs - self.q[:, idx] + self.A.T @ (rho_vec[:, None] * zs - ys)
            xt = Minv @ rhs
            zt = self.A @ xt
            x_new = _ALPHA * xt + (1 - _ALPHA) * xs
            z_rel = _ALPHA * zt + (1 - _ALPHA) * zs
            z_new = np.clip(z_rel + ys / rho_vec[:, None], self.l[:, idx], self.u[:, idx])
            y_new = ys + rho_vec[:, None] * (z_rel - z_new)
            if it % _CHECK_EVERY == 0 or it == 1:
                x_prev[:, idx], y_prev[:, idx] = xs, ys
            x[:, idx], z[:, idx], y[:, idx] = x_new, z_new, y_new
            if it % _CHECK_EVERY:
                continue
            close = self._near_optimal(x[:, idx], z[:, idx], y[:, idx], self.q[:, idx])
            for j, near in zip(idx, close):
                sol = self._try_finish(j, x[:, j], z[:, j], y[:, j],
                                       x[:, j] - x_prev[:, j], y[:, j] - y_prev[:, j], it, near)
                if sol is not None:
                    results[j] = sol
                    pending[j] = False
            new_rho = self._adapt_rho(rho, x[:, pending], z[:, pending], y[:, pending],
                                      self.q[:, pending])
            if new_rho != rho:
                rho = new_rho
                rho_vec = self._rho_vec(rho)
                Minv = self._factor(rho_vec)
        for j in np.flatnonzero(pending):
            sol = self._unscaled_solution(j, x[:, j], y[:, j], QpStatus.MAX_ITER, it)
            if sol.kkt_residual <= self.tol:
                sol.status = QpStatus.OPTIMAL
            results[j] = sol
        return results

    def _near_optimal(self, x, z, y, q):
        Ax = self.A @ x
        Px = self.P @ x
        Aty = self.A.T @ y
        big = lambda v: np.max(np.abs(v), axis=0, initial=0.0)  # noqa: E731
        prim = big(Ax - z) / np.maximum.reduce([big(Ax), big(z), np.full(x.shape[1], 1e-10)])
        dual = big(Px + q + Aty) / np.maximum.reduce([big(Px), big(Aty), big(q),
                                                       np.full(x.shape[1], 1e-10)])
        return np.maximum(prim, dual) < _POLISH_GATE

    def _adapt_rho(self, rho, x, z, y, q):
        if x.size == 0:
            return rho
        Ax = self.A @ x
        prim = _inf(Ax - z) / max(_inf(Ax), _inf(z), 1e-10)
        Px = self.P @ x
        Aty = self.A.T @ y
        dual = _inf(Px + q + Aty) / max(_inf(Px), _inf(Aty), _inf(q), 1e-10)
        if dual < 1e-14 or prim < 1e-14:
            return rho
        ratio = np.sqrt(prim / dual)
        if ratio > 5 or ratio < 0.2:
            return float(np.clip(rho * ratio, 1e-6, 1e6))
        return rho

    # -- termination -----------------------------------------------------

    def _try_finish(self, j, x, z, y, dx, dy, it, near=True):
        sol = self._polish(j, x, z, y, it, near)
        if sol is not None:
            return sol
        if self._primal_infeasible(j, dy):
            return self._status_only(j, QpStatus.INFEASIBLE, it)
        if self._dual_infeasible(j, dx):
            return self._status_only(j, QpStatus.UNBOUNDED, it)
        return None

    def _primal_infeasible(self, j, dy):
        nrm = _inf(dy)
        if nrm < 1e-12:
            return False
        l, u = self.l[:, j], self.u[:, j]
        dyp, dym = np.maximum(dy, 0), np.minimum(dy, 0)
        if np.any((dyp > _EPS_INF * nrm) & ~np.isfinite(u)) or \
                np.any((dym < -_EPS_INF * nrm) & ~np.isfinite(l)):
            return False
        support = np.sum(np.where(np.isfinite(u), u, 0) * dyp) + \
            np.sum(np.where(np.isfinite(l), l, 0) * dym)
        return _inf(self.A.T @ dy) <= _EPS_INF * nrm and support <= -_EPS_INF * nrm

    def _dual_infeasible(self, j, dx):
        nrm = _inf(dx)
        if nrm < 1e-12:
            return False
        if _inf(self.P @ dx) > _EPS_INF * nrm or self.q[:, j] @ dx > -_EPS_INF * nrm:
            return False
        Adx = self.A @ dx
        l, u = self.l[:, j], self.u[:, j]
        ok_hi = np.where(np.isfinite(u), Adx <= _EPS_INF * nrm, True)
        ok_lo = np.where(np.isfinite(l), Adx >= -_EPS_INF * nrm, True)
        return bool(np.all(ok_hi & ok_lo))

    def _status_only(self, j, status, it):
        p = self.probs[j]
        nan = np.full(p.n, np.nan)
        k_in = p.A_in.shape[0]
        return QpSolution(nan, np.nan, np.full(self.n_eq, np.nan), np.full(k_in, np.nan),
                          np.full(k_in, np.nan), status, np.inf, iterations=it)

    # -- polishing -------------------------------------------------------

    def _polish(self, j, x, z, y, it, near=True, max_steps=25):
        l, u = self.l[:, j], self.u[:, j]
        ineq = ~self.eq
        lower = ineq & (z - l < -y)
        upper = ineq & (u - z < y) & ~lower
        guesses = [(lower, upper)] if near else []
        if self._solved_sets:
            guesses.insert(0, self._solved_sets[-1])
        for lower, upper in guesses:
            key = (lower.tobytes(), upper.tobytes())
            if key in self._tried[j]:
                continue
            self._tried[j].add(key)
            sol = self._pdas(j, x, y, lower, upper, it, max_steps)
            if sol is not None:
                return sol
        if near and self._gi_budget[j] > 0:
            # PDAS can cycle on degenerate vertices; fall back to a method
            # with guaranteed termination
            self._gi_budget[j] -= 1
            return self._dual_active_set(j, x, y, it)
        return None

    def _dual_active_set(self, j, x, y, it, outer=8):
        """Goldfarb-Idnani dual active-set solve of a proximal copy of QP ``j``.

        The proximal term makes the Hessian positive definite. Centring it at
        the origin selects the minimum-norm optimum, which lands on a vertex
        whenever tiny tie-break costs would otherwise be swamped by the pull
        towards a poor ADMM iterate; the ADMM iterate is the second choice.
        The final active set is re-solved exactly and accepted only if the
        KKT check passes.
        """
        l, u, q = self.l[:, j], self.u[:, j], self.q[:, j]
        ineq = ~self.eq
        lo_rows = np.flatnonzero(ineq & np.isfinite(l))
        hi_rows = np.flatnonzero(ineq & np.isfinite(u))
        eq_rows = np.flatnonzero(self.eq)
        ne, nl = eq_rows.size, lo_rows.size
        R = np.vstack([self.A[eq_rows], self.A[lo_rows], -self.A[hi_rows]])
        rhs = np.concatenate([l[eq_rows], l[lo_rows], -u[hi_rows]])
        G = self.P + _GI_PROX * np.eye(self.n)
        for xc in (np.zeros(self.n), x):
            for _ in range(outer):
                res = _goldfarb_idnani(G, q - _GI_PROX * xc, R, rhs, ne)
                if res is None:
                    break
                xg, act, mult = res
                lower = np.zeros(self.m_rows, bool)
                upper = np.zeros(self.m_rows, bool)
                yg = np.zeros(self.m_rows)
                for a, w in zip(act, mult):
                    if a < ne:
                        yg[eq_rows[a]] = -w
                    elif a < ne + nl:
                        lower[lo_rows[a - ne]] = True
                        yg[lo_rows[a - ne]] = -w
                    else:
                        upper[hi_rows[a - ne - nl]] = True
                        yg[hi_rows[a - ne - nl]] = w
                xs, ys = self._reduced_kkt(q, l, u, lower, upper, xg, yg)
                if xs is not None:
                    sol = self._unscaled_solution(j, xs, ys, QpStatus.OPTIMAL, it)
                    if sol.kkt_residual <= self.tol:
                        self._solved_sets.append((lower, upper))
                        return sol
                if _inf(xg - xc) <= 1e-12 * max(1.0, _inf(xg)):
                    break
                xc = xg
        return None

    def _pdas(self, j, x, y, lower, upper, it, max_steps):
        """Primal-dual active-set iteration from a guessed active set.

        A fixed point of the set update satisfies primal feasibility and dual
        sign conditions by construction, so the full KKT check runs only there.
        """
        l, u, q = self.l[:, j], self.u[:, j], self.q[:, j]
        ineq = ~self.eq
        seen = set()
        for _ in range(max_steps):
            key = (lower.tobytes(), upper.tobytes())
            if key in seen:
                return None
            seen.add(key)
            xs, ys = self._reduced_kkt(q, l, u, lower, upper, x, y)
            if xs is None:
                return None
            Ax = self.A @ xs
            with np.errstate(invalid="ignore"):
                new_lower = ineq & np.isfinite(l) & ((-ys) + (l - Ax) > 0)
                new_upper = ineq & np.isfinite(u) & (ys + (Ax - u) > 0) & ~new_lower
            if np.array_equal(new_lower, lower) and np.array_equal(new_upper, upper):
                sol = self._unscaled_solution(j, xs, ys, QpStatus.OPTIMAL, it)
                if sol.kkt_residual <= self.tol:
                    self._solved_sets.append((lower, upper))
                    return sol
                return None
            lower, upper = new_lower, new_upper
        return None

    def _reduced_kkt(self, q, l, u, lower, upper, x_center, y_center, refine=60):
        """Equality-constrained QP on the active rows.

        Small proximal terms around ``(x_center, y_center)`` keep the system
        nonsingular on degenerate faces and with linearly dependent active
        rows; refinement passes re-centre at the previous answer so the bias
        vanishes. On dependent rows the multipliers stay closest to the centre,
        which keeps their signs consistent with the ADMM estimate. If the
        reduced problem is unbounded the passes drift until some inactive row is
        violated, which the active-set update then picks up.
        """
        act = self.eq | lower | upper
        idx = np.flatnonzero(act)
        Aa = self.A[idx]
        b = np.where(upper[idx], u[idx], l[idx])
        k, n = idx.size, self.n
        K = np.zeros((n + k, n + k))
        K[:n, :n] = self.P + _PROX * np.eye(n)
        K[:n, n:] = Aa.T
        K[n:, :n] = Aa
        K[n:, n:] = -_PROX * np.eye(k)
        try:
            lu = np.linalg.inv(K)
        except np.linalg.LinAlgError:
            lu = np.linalg.pinv(K)
        xc, yc = x_center, y_center[idx]
        for _ in range(refine):
            sol = lu @ np.concatenate([-q + _PROX * xc, b - _PROX * yc])
            if not np.all(np.isfinite(sol)):
                return None, None
            step = max(_inf(sol[:n] - xc), _inf(sol[n:] - yc))
            xc, yc = sol[:n], sol[n:]
            if step <= 1e-13 * max(1.0, _inf(xc), _inf(yc)):
                break
            Ax = self.A @ xc
            if np.any(Ax < l - 1e-9 * max(1.0, _inf(Ax))) or np.any(Ax > u + 1e-9 * max(1.0, _inf(Ax))):
                break
        ys = np.zeros(self.m_rows)
        ys[idx] = yc
        return xc, ys

    def _unscaled_solution(self, j, xs, ys, status, it):
        p = self.probs[j]
        x = self.D * xs
        yy = self.E * ys / self.c
        nu = yy[: self.n_eq]
        y_in = yy[self.n_eq:]
        mu_hi = np.maximum(y_in, 0.0)
        mu_lo = np.maximum(-y_in, 0.0)
        res = kkt_residual(p, x, nu, mu_lo, mu_hi)
        obj = float(0.5 * x @ p.Q @ x + p.q @ x)
        sol = QpSolution(x, obj, nu, mu_lo, mu_hi, status, res, iterations=it)
        if status is QpStatus.OPTIMAL:
            self._flag_degeneracy(p, sol)
        return sol

    def _flag_degeneracy(self, p: QpProblem, sol: QpSolution):
        Ax = p.A_in @ sol.x_star
        scale = max(1.0, _inf(Ax))
        with np.errstate(invalid="ignore"):
            at_lo = np.isfinite(p.lb) & (np.abs(Ax - p.lb) <= 1e-7 * scale)
            at_hi = np.isfinite(p.ub) & (np.abs(p.ub - Ax) <= 1e-7 * scale)
        sol.active_lo, sol.active_hi = at_lo, at_hi
        mu_scale = max(1.0, _inf(p.q), _inf(sol.nu))
        weak = (at_lo & (sol.mu_lo <= self.tol * mu_scale)) | \
            (at_hi & (sol.mu_hi <= self.tol * mu_scale))
        rows = np.vstack([p.A_eq, p.A_in[at_lo | at_hi]])
        dependent = rows.shape[0] > 0 and np.linalg.matrix_rank(rows) < rows.shape[0]
        sol.degenerate = bool(weak.any() or dependent)


def _goldfarb_idnani(G, a, R, b, n_eq, max_steps=None):
    """Dual active-set method for ``min 0.5 x'Gx + a'x`` with ``R x = b`` on
    the first ``n_eq`` rows and ``R x >= b`` on the rest; ``G`` positive definite.

    Returns ``(x, active_rows, multipliers)`` with ``Gx + a = R[act]' mult``,
    or ``None`` if the constraints are infeasible or the step budget runs out.
    """
    n, m = G.shape[0], R.shape[0]
    max_steps = max_steps or 10 * (n + m) + 50
    x = np.linalg.solve(G, -a)
    act: list[int] = []
    mult: list[float] = []
    norms = np.maximum(np.max(np.abs(R), axis=1), 1e-300)
    vtol = 1e-11 * max(1.0, _inf(b))

    def direction(nrm):
        k = len(act)
        if k:
            Na = R[act]
            # dependence test independent of the conditioning of G
            c, *_ = np.linalg.lstsq(Na.T, nrm, rcond=None)
            dependent = _inf(nrm - Na.T @ c) <= 1e-9 * _inf(nrm)
        else:
            Na, dependent = np.zeros((0, n)), False
        K = np.zeros((n + k, n + k))
        K[:n, :n] = G
        K[:n, n:] = Na.T
        K[n:, :n] = Na
        sol = np.linalg.solve(K, np.concatenate([nrm, np.zeros(k)]))
        z = np.zeros(n) if dependent else sol[:n]
        r = c if (dependent and k) else sol[n:]
        return z, r, dependent

    for i in range(n_eq):
        nrm = R[i]
        s = nrm @ x - b[i]
        z, r, dep = direction(nrm)
        if dep:
            if abs(s) <= vtol * 10:
                continue
            return None
        t = -s / (z @ nrm)
        x = x + t * z
        mult = [w - t * rr for w, rr in zip(mult, r)]
        act.append(i)
        mult.append(t)

    steps = 0
    while True:
        s = (R @ x - b) / norms
        s[:n_eq] = np.inf
        s[act] = np.inf
        p = int(np.argmin(s))
        if s[p] >= -vtol:
            return x, act, mult
        nrm = R[p]
        up = 0.0
        while True:
            steps += 1
            if steps > max_steps:
                return None
            z, r, dep = direction(nrm)
            t1, drop = np.inf, None
            for idx, (c_row, rr) in enumerate(zip(act, r)):
                if c_row >= n_eq and rr > 1e-14:
                    cand = mult[idx] / rr
                    if cand < t1:
                        t1, drop = cand, idx
            sp = nrm @ x - b[p]
            t2 = np.inf if dep else -sp / (z @ nrm)
            t = min(t1, t2)
            if not np.isfinite(t):
                return None
            mult = [w - t * rr for w, rr in zip(mult, r)]
            up += t
            if not dep:
                x = x + t * z
            if t2 <= t1:
                act.append(p)
                mult.append(up)
                break
            del act[drop]
            del mult[drop]
