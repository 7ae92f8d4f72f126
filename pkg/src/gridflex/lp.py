"""Dense linear programming layer.

Hosts the problem container, a bounded-variable revised simplex with a
Bland's-rule anti-cycling fallback, and solution certificates (primal,
dual, Farkas).  All numeric tolerances live in :class:`Tolerances`.

Problems are minimized unless ``maximize=True``.  Canonical form:

    min c'x   s.t.   a_ub x <= b_ub,   a_eq x = b_eq,   lower <= x <= upper

with infinite bounds allowed.  Reported duals follow the minimization
convention (nonnegative multipliers on the inequality rows) regardless of
sense; :meth:`LpSolution.dual_objective` converts back for max problems.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Protocol, runtime_checkable

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
FAILED = "failed"

_AT_LOWER = 0
_AT_UPPER = 1
_FREE = 2
_BASIC = 3


class LpError(ValueError):
    """Malformed problem data (dimension mismatch, non-finite entries)."""


class _NumericalTrouble(RuntimeError):
    pass


@dataclass(frozen=True)
class Tolerances:
    """Central numeric tolerances; feasibility checks scale by row norms."""

    primal: float = 1e-8
    dual: float = 1e-9
    pivot: float = 1e-10
    gap: float = 1e-7
    degenerate_step: float = 1e-11
    # consecutive degenerate pivots before Bland's rule takes over
    degeneracy_trip: int = 300
    refactor_every: int = 150
    max_iterations: int = 200_000


DEFAULT_TOLS = Tolerances()


def _as_2d(a, ncols, name):
    if a is None:
        return np.zeros((0, ncols))
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2 or a.shape[1] != ncols:
        raise LpError(f"{name} must be 2-d with {ncols} columns, got {a.shape}")
    return a


def _as_1d(v, n, name, fill=None):
    if v is None:
        if fill is None:
            return np.zeros(n)
        return np.full(n, fill, dtype=float)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape != (n,):
        raise LpError(f"{name} must have length {n}, got {v.shape}")
    return v


@dataclass
class LinearProgram:
    """Dense LP container: cost, inequality system, equality system, bounds."""

    c: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    maximize: bool = False
    names: list[str] = field(default_factory=list)

    @classmethod
    def build(cls, c, a_ub=None, b_ub=None, a_eq=None, b_eq=None,
              lower=None, upper=None, maximize=False, names=None):
        c = np.atleast_1d(np.asarray(c, dtype=float))
        n = c.shape[0]
        if n == 0:
            raise LpError("problem needs at least one variable")
        a_ub = _as_2d(a_ub, n, "a_ub")
        a_eq = _as_2d(a_eq, n, "a_eq")
        b_ub = _as_1d(b_ub, a_ub.shape[0], "b_ub")
        b_eq = _as_1d(b_eq, a_eq.shape[0], "b_eq")
        lower = _as_1d(lower, n, "lower", fill=-np.inf)
        upper = _as_1d(upper, n, "upper", fill=np.inf)
        for arr, nm in ((c, "c"), (a_ub, "a_ub"), (b_ub, "b_ub"),
                        (a_eq, "a_eq"), (b_eq, "b_eq")):
            if arr.size and not np.all(np.isfinite(arr)):
                raise LpError(f"non-finite entries in {nm}")
        if np.any(lower > upper):
            raise LpError("lower bound exceeds upper bound")
        if names is None:
            names = [f"x{i}" for i in range(n)]
        if len(names) != n:
            raise LpError("names length mismatch")
        return cls(c=c, a_ub=a_ub, b_ub=b_ub, a_eq=a_eq, b_eq=b_eq,
                   lower=lower, upper=upper, maximize=bool(maximize),
                   names=list(names))

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]


@dataclass
class LpSolution:
    """Solve outcome plus certificates.

    ``duals_ub``/``duals_eq`` are multipliers in the minimization convention
    (``duals_ub >= 0``); ``reduced_costs = c_min + a_ub'duals_ub +
    a_eq'duals_eq`` where ``c_min`` is the internally minimized cost.  For
    infeasible problems ``farkas`` stacks row multipliers [ub rows; eq rows]
    proving emptiness, checkable with :func:`verify_farkas`.
    """

    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    duals_ub: np.ndarray | None = None
    duals_eq: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    farkas: np.ndarray | None = None
    iterations: int = 0
    message: str = ""
    basis: np.ndarray | None = None
    var_status: np.ndarray | None = None

    def dual_objective(self, lp: LinearProgram) -> float:
        if self.duals_ub is None:
            raise ValueError("no duals available")
        r = self.reduced_costs
        lo = np.where(np.isfinite(lp.lower), lp.lower, 0.0)
        up = np.where(np.isfinite(lp.upper), lp.upper, 0.0)
        bound_term = np.where(r > 0.0, r * lo, r * up)
        val = (-self.duals_ub @ lp.b_ub - self.duals_eq @ lp.b_eq
               + float(np.sum(bound_term)))
        return -val if lp.maximize else val


def validate_certificates(lp: LinearProgram, sol: LpSolution,
                          tols: Tolerances = DEFAULT_TOLS) -> dict:
    """Check primal feasibility, dual sign, complementary slackness, gap."""
    rep: dict = {"ok": False}
    if sol.status != OPTIMAL:
        rep["ok"] = sol.status in (INFEASIBLE, UNBOUNDED)
        return rep
    x = sol.x
    scale_ub = 1.0 + np.abs(lp.b_ub) + (np.abs(lp.a_ub).sum(axis=1)
                                        if lp.a_ub.size else 0.0)
    scale_eq = 1.0 + np.abs(lp.b_eq) + (np.abs(lp.a_eq).sum(axis=1)
                                        if lp.a_eq.size else 0.0)
    viol_ub = ((lp.a_ub @ x - lp.b_ub) / scale_ub) if lp.a_ub.size else np.zeros(0)
    viol_eq = (np.abs(lp.a_eq @ x - lp.b_eq) / scale_eq) if lp.a_eq.size else np.zeros(0)
    lo_viol = np.where(np.isfinite(lp.lower), lp.lower - x, 0.0)
    up_viol = np.where(np.isfinite(lp.upper), x - lp.upper, 0.0)
    rep["primal_infeas"] = max(
        float(viol_ub.max(initial=0.0)), float(viol_eq.max(initial=0.0)),
        float(lo_viol.max(initial=0.0)), float(up_viol.max(initial=0.0)))
    rep["dual_infeas"] = float(-sol.duals_ub.min(initial=0.0)) \
        if sol.duals_ub.size else 0.0
    if lp.a_ub.size:
        slack = lp.b_ub - lp.a_ub @ x
        rep["comp_slack"] = float(np.abs(sol.duals_ub * slack).max(initial=0.0)
                                  / (1.0 + abs(sol.objective)))
    else:
        rep["comp_slack"] = 0.0
    rep["gap"] = abs(sol.objective - sol.dual_objective(lp)) / (1.0 + abs(sol.objective))
    rep["ok"] = (rep["primal_infeas"] <= 1e3 * tols.primal
                 and rep["dual_infeas"] <= 1e3 * tols.dual
                 and rep["gap"] <= tols.gap)
    return rep


def verify_farkas(lp: LinearProgram, y: np.ndarray, tol: float = 1e-7) -> bool:
    """Verify an infeasibility certificate by multiplication.

    ``y`` stacks multipliers for [a_ub rows; a_eq rows] with y_ub >= 0; the
    aggregated row (y_ub'a_ub + y_eq'a_eq) x <= y'b must exclude the whole
    bound box.
    """
    m_ub = lp.a_ub.shape[0]
    y_ub, y_eq = y[:m_ub], y[m_ub:]
    if y_ub.size and float(y_ub.min(initial=0.0)) < -tol:
        return False
    coef = np.zeros(lp.n_vars)
    if lp.a_ub.size:
        coef += lp.a_ub.T @ y_ub
    if lp.a_eq.size:
        coef += lp.a_eq.T @ y_eq
    rhs = float(y_ub @ lp.b_ub + y_eq @ lp.b_eq)
    with np.errstate(invalid="ignore"):
        lo_term = np.where(coef > 0.0, coef * lp.lower,
                           np.where(coef < 0.0, coef * lp.upper, 0.0))
    if not np.all(np.isfinite(lo_term)):
        return False
    scale = 1.0 + abs(rhs) + float(np.abs(coef).sum())
    return float(lo_term.sum()) > rhs + tol * scale


class _Simplex:
    """Bounded-variable revised simplex on the slack-extended system."""

    def __init__(self, lp: LinearProgram, tols: Tolerances, bland_start=False,
                 warm=None):
        self.lp = lp
        self.tols = tols
        self.bland_start = bland_start
        self.warm = warm
        n = lp.n_vars
        m_ub, m_eq = lp.a_ub.shape[0], lp.a_eq.shape[0]
        self.m = m_ub + m_eq
        self.n_struct = n
        self.m_ub = m_ub
        self.nt = n + m_ub
        sign = -1.0 if lp.maximize else 1.0
        self.cost = np.concatenate([sign * lp.c, np.zeros(m_ub)])
        self.rhs = np.concatenate([lp.b_ub, lp.b_eq])
        self.lo = np.concatenate([lp.lower, np.zeros(m_ub)])
        self.hi = np.concatenate([lp.upper, np.full(m_ub, np.inf)])
        W = np.zeros((self.m, self.nt))
        if m_ub:
            W[:m_ub, :n] = lp.a_ub
            W[:m_ub, n:] = np.eye(m_ub)
        if m_eq:
            W[m_ub:, :n] = lp.a_eq
        self._W_base = W
        self.iterations = 0

    # -- basis linear algebra ------------------------------------------------

    def _refactor(self):
        try:
            self.b_inv = np.linalg.inv(self.Wx[:, self.basis])
        except np.linalg.LinAlgError as exc:
            raise _NumericalTrouble(f"singular basis: {exc}") from exc
        self.pivots_since_refactor = 0
        self.values[self.basis] = self._basic_values()

    def _ftran(self, col):
        return self.b_inv @ col

    def _btran(self, vec):
        return self.b_inv.T @ vec

    def _update_inverse(self, w, r):
        piv = w[r]
        if abs(piv) < 5e-11:
            raise _NumericalTrouble("tiny pivot element")
        adj = w / piv
        adj[r] = 1.0 - 1.0 / piv
        self.b_inv -= np.outer(adj, self.b_inv[r, :])
        self.pivots_since_refactor += 1
        if self.pivots_since_refactor >= self.tols.refactor_every:
            self._refactor()

    def _basic_values(self):
        x_n = self.values.copy()
        x_n[self.basis] = 0.0
        return self._ftran(self.rhs - self.Wx @ x_n)

    # -- main driver -----------------------------------------------------------

    def solve(self) -> LpSolution:
        m, nt = self.m, self.nt
        self.Wx = np.hstack([self._W_base, np.eye(m)]) if m \
            else self._W_base.copy()
        self.WxT = np.ascontiguousarray(self.Wx.T)
        self.lo = np.concatenate([self.lo, np.zeros(m)])
        self.hi = np.concatenate([self.hi, np.full(m, np.inf)])
        full_cost = np.concatenate([self.cost, np.zeros(m)])
        try:
            warm_state = self._setup_warm_basis() if self.warm is not None \
                else None
            if warm_state == "restore":
                self.lo[nt:] = 0.0
                self.hi[nt:] = 0.0
                if not self._dual_restore(full_cost):
                    warm_state = None
            if warm_state is None:
                self._cold_start()
                failure = self._phase1()
                if failure is not None:
                    return failure
            self.lo[nt:] = 0.0
            self.hi[nt:] = 0.0
            status = self._iterate(full_cost, phase=2)
        except _NumericalTrouble as exc:
            return LpSolution(status=FAILED, iterations=self.iterations,
                              message=str(exc))
        if status == UNBOUNDED:
            return LpSolution(status=UNBOUNDED, iterations=self.iterations)
        if status != OPTIMAL:
            return LpSolution(status=FAILED, iterations=self.iterations,
                              message="phase-2 did not converge")
        return self._extract(full_cost)

    def _cold_start(self):
        """All-artificial starting basis from the default nonbasic point."""
        m, nt = self.m, self.nt
        self.lo[nt:] = 0.0
        self.hi[nt:] = np.inf
        st = np.where(np.isfinite(self.lo[:nt]), _AT_LOWER,
                      np.where(np.isfinite(self.hi[:nt]), _AT_UPPER,
                               _FREE)).astype(np.int8)
        x_n = np.where(st == _AT_LOWER, self.lo[:nt],
                       np.where(st == _AT_UPPER, self.hi[:nt], 0.0))
        resid = self.rhs - self._W_base @ x_n if m else np.zeros(0)
        art_sign = np.where(resid >= 0.0, 1.0, -1.0)
        if m:
            self.Wx[:, nt:] = np.diag(art_sign)
            self.WxT[nt:, :] = self.Wx[:, nt:].T
        self.status_vec = np.concatenate([st, np.full(m, _BASIC,
                                                      dtype=np.int8)])
        self.values = np.concatenate([x_n, np.abs(resid)])
        self.basis = np.arange(nt, nt + m)
        self.b_inv = np.diag(1.0 / art_sign) if m else np.zeros((0, 0))
        self.pivots_since_refactor = 0

    def _phase1(self) -> LpSolution | None:
        """Drive artificials to zero; returns a terminal solution on failure."""
        m, nt = self.m, self.nt
        phase1_cost = np.concatenate([np.zeros(nt), np.ones(m)])
        status = self._iterate(phase1_cost, phase=1)
        if status != OPTIMAL:
            return LpSolution(status=FAILED, iterations=self.iterations,
                              message="phase-1 did not converge")
        art_vals = self.values[nt:nt + m] if m else np.zeros(0)
        row_scale = 1.0 + np.abs(self.rhs) + np.abs(self._W_base).sum(axis=1)
        infeas = float((art_vals / row_scale).max(initial=0.0)) if m else 0.0
        if infeas > 1e3 * self.tols.primal:
            y = self._btran(phase1_cost[self.basis])
            return LpSolution(
                status=INFEASIBLE, farkas=-y, iterations=self.iterations,
                message=f"phase-1 relative infeasibility {infeas:.3e}")
        self._expel_artificials()
        return None

    def _setup_warm_basis(self) -> str | None:
        """Adopt a previous basis; rows appended since then enter through
        their slacks.  Returns "feasible", "restore" (valid basis, primal
        infeasible, dual simplex applies), or None (unusable)."""
        if self.m == 0:
            return None
        basis, status = self.warm
        if basis is None or status is None:
            return None
        basis = np.asarray(basis, dtype=int)
        status = np.asarray(status, dtype=np.int8).copy()
        n_grow = self.nt - len(status)
        if n_grow < 0 or n_grow != self.m - len(basis):
            return None
        if n_grow:
            grown = np.arange(self.nt - n_grow, self.nt)
            basis = np.concatenate([basis, grown])
            status = np.concatenate([status,
                                     np.full(n_grow, _BASIC, dtype=np.int8)])
        if np.any(basis >= self.nt) or len(basis) != self.m:
            return None
        try:
            b_inv = np.linalg.inv(self.Wx[:, basis])
        except np.linalg.LinAlgError:
            return None
        # bounds may have moved: re-anchor nonbasic statuses to finite bounds
        at_up = status == _AT_UPPER
        status[at_up & ~np.isfinite(self.hi[:self.nt])] = _FREE
        at_lo = status == _AT_LOWER
        status[at_lo & ~np.isfinite(self.lo[:self.nt])] = _FREE
        st = np.concatenate([status, np.full(self.m, _AT_LOWER,
                                             dtype=np.int8)])
        vals = np.where(st == _AT_LOWER, self.lo,
                        np.where(st == _AT_UPPER, self.hi, 0.0))
        vals[~np.isfinite(vals)] = 0.0
        st[basis] = _BASIC
        x_n = vals.copy()
        x_n[basis] = 0.0
        x_b = b_inv @ (self.rhs - self.Wx @ x_n)
        self.basis = basis.copy()
        self.status_vec = st
        self.values = vals
        self.values[self.basis] = x_b
        self.b_inv = b_inv
        self.pivots_since_refactor = 0
        lo_b, hi_b = self.lo[basis], self.hi[basis]
        # acceptance must stay tighter than any separation tolerance layered
        # on top, or cutting-plane callers stall in the dead band
        tol = self.tols.primal * (1.0 + np.abs(x_b))
        if np.any(x_b < lo_b - tol) or np.any(x_b > hi_b + tol):
            return "restore"
        return "feasible"

    def _dual_restore(self, cost, max_iter: int | None = None) -> bool:
        """Bounded dual simplex: from a dual-feasible basis, pivot the
        bound-violating basics out until the point is primal feasible."""
        m, nt = self.m, self.nt
        tol = self.tols
        if max_iter is None:
            max_iter = 4 * m + 200
        y = self._btran(cost[self.basis])
        d = cost - self.WxT @ y
        st = self.status_vec
        thr = 1e-6 * (1.0 + float(np.abs(cost).max(initial=0.0)))
        bad = ((st == _AT_LOWER) & (d < -thr)) | ((st == _AT_UPPER) & (d > thr))
        bad[self.basis] = False
        if np.any(bad[:nt]):
            return False  # cost changed too much; dual start invalid
        for _ in range(max_iter):
            x_b = self.values[self.basis]
            lo_b, hi_b = self.lo[self.basis], self.hi[self.basis]
            below = lo_b - x_b
            above = x_b - hi_b
            viol = np.maximum(below, above)
            r = int(np.argmax(viol))
            if viol[r] <= 10.0 * tol.primal * (1.0 + abs(x_b[r])):
                return True
            self.iterations += 1
            leaving_below = below[r] >= above[r]
            e_r = np.zeros(m)
            e_r[r] = 1.0
            rho = self._btran(e_r)
            alpha = self.WxT @ rho
            st = self.status_vec
            sigma = np.where(st == _AT_LOWER, 1.0,
                             np.where(st == _AT_UPPER, -1.0, 0.0))
            effect = -alpha * sigma
            movable = (st != _BASIC)
            movable[nt:] = False
            movable &= (self.hi - self.lo) > tol.pivot
            is_free = st == _FREE
            if leaving_below:
                elig = movable & (((~is_free) & (effect > tol.pivot))
                                  | (is_free & (np.abs(alpha) > tol.pivot)))
            else:
                elig = movable & (((~is_free) & (effect < -tol.pivot))
                                  | (is_free & (np.abs(alpha) > tol.pivot)))
            cand = np.where(elig)[0]
            if cand.size == 0:
                return False
            y = self._btran(cost[self.basis])
            d = cost - self.WxT @ y
            ratios = np.abs(d[cand]) / np.abs(alpha[cand])
            rmin = float(ratios.min())
            near = cand[ratios <= rmin + 1e-7 * (1.0 + rmin)]
            q = int(near[np.argmax(np.abs(alpha[near]))])
            w = self._ftran(self.Wx[:, q])
            if abs(w[r]) < 5e-11:
                return False
            target = lo_b[r] if leaving_below else hi_b[r]
            delta_needed = target - x_b[r]
            if is_free[q]:
                sig_q = 1.0 if (delta_needed / (-w[r])) >= 0 else -1.0
            else:
                sig_q = sigma[q]
            step = delta_needed / (-w[r] * sig_q)
            if step < -1e-9:
                return False
            step = max(step, 0.0)
            self.values[self.basis] = x_b - step * sig_q * w
            new_q_val = self.values[q] + sig_q * step
            self._pivot(q, r, w,
                        leaving_to=_AT_LOWER if leaving_below else _AT_UPPER)
            self.values[q] = new_q_val
        return False

    def _expel_artificials(self):
        """Pivot artificials out of the basis; redundant rows keep theirs."""
        nt = self.nt
        for r in range(self.m):
            if self.basis[r] < nt:
                continue
            row = self.b_inv[r, :] @ self.Wx[:, :nt]
            usable = np.where(np.abs(row) > 1e3 * self.tols.pivot)[0]
            for q in usable:
                if self.status_vec[q] == _BASIC:
                    continue
                w = self._ftran(self.Wx[:, q])
                if abs(w[r]) <= 1e3 * self.tols.pivot:
                    continue
                self._pivot(int(q), r, w, leaving_to=_AT_LOWER)
                break

    def _pivot(self, entering, r, w, leaving_to):
        leaving = self.basis[r]
        self.status_vec[leaving] = leaving_to
        bound = self.lo[leaving] if leaving_to == _AT_LOWER else self.hi[leaving]
        self.values[leaving] = bound if np.isfinite(bound) else 0.0
        self.basis[r] = entering
        self.status_vec[entering] = _BASIC
        self._update_inverse(w, r)

    def _iterate(self, cost, phase):
        tol = self.tols
        degenerate_run = 0
        use_bland = self.bland_start
        if self.m == 0:
            # no rows: optimum is a bound vertex chosen by cost sign
            for j in range(self.nt):
                c_j = cost[j]
                if c_j < 0:
                    if not np.isfinite(self.hi[j]):
                        return UNBOUNDED
                    self.values[j] = self.hi[j]
                    self.status_vec[j] = _AT_UPPER
                elif c_j > 0:
                    if not np.isfinite(self.lo[j]):
                        return UNBOUNDED
                    self.values[j] = self.lo[j]
                    self.status_vec[j] = _AT_LOWER
            return OPTIMAL
        self.values[self.basis] = self._basic_values()
        thr = tol.dual * (1.0 + float(np.abs(cost).max(initial=0.0)))
        while True:
            self.iterations += 1
            if self.iterations > tol.max_iterations:
                return FAILED
            y = self._btran(cost[self.basis])
            d = cost - self.WxT @ y
            st = self.status_vec
            can_inc = ((st == _AT_LOWER) | (st == _FREE)) & (d < -thr)
            can_dec = ((st == _AT_UPPER) | (st == _FREE)) & (d > thr)
            if phase == 2:
                can_inc[self.nt:] = False
                can_dec[self.nt:] = False
            elig = np.where(can_inc | can_dec)[0]
            if elig.size == 0:
                return OPTIMAL
            if use_bland:
                q = int(elig[0])
            else:
                q = int(elig[np.argmax(np.abs(d[elig]))])
            direction = 1.0 if can_inc[q] else -1.0
            w = self._ftran(self.Wx[:, q])
            if self.pivots_since_refactor and self.iterations % 101 == 0:
                err = float(np.abs(self.Wx[:, self.basis] @ w
                                   - self.Wx[:, q]).max(initial=0.0))
                if err > 1e-7:
                    self._refactor()
                    w = self._ftran(self.Wx[:, q])

            x_b = self.values[self.basis]
            delta_b = direction * w
            lo_b, hi_b = self.lo[self.basis], self.hi[self.basis]
            with np.errstate(divide="ignore", invalid="ignore"):
                room = np.where(
                    delta_b > tol.pivot, (x_b - lo_b) / delta_b,
                    np.where(delta_b < -tol.pivot, (hi_b - x_b) / (-delta_b),
                             np.inf))
            room = np.where(np.isnan(room), np.inf, np.maximum(room, 0.0))
            # Harris two-pass ratio test: allow a sliver of bound slack to
            # pick the numerically largest pivot among near-minimal ratios
            if room.size:
                slack = 1e-9
                with np.errstate(divide="ignore", invalid="ignore"):
                    relaxed = np.where(
                        delta_b > tol.pivot,
                        (x_b - lo_b + slack) / delta_b,
                        np.where(delta_b < -tol.pivot,
                                 (hi_b - x_b + slack) / (-delta_b), np.inf))
                step_cap = float(np.min(relaxed))
                candidates = np.where(room <= step_cap)[0]
                if candidates.size:
                    leave_r = int(candidates[np.argmax(
                        np.abs(delta_b[candidates]))])
                    step = float(room[leave_r])
                else:
                    leave_r, step = -1, np.inf
            else:
                leave_r, step = -1, np.inf
            own_room = self.hi[q] - self.lo[q]
            bound_flip = bool(np.isfinite(own_room) and own_room < step)
            if bound_flip:
                step = float(own_room)
            if not np.isfinite(step):
                return UNBOUNDED if phase == 2 else FAILED
            if not bound_flip:
                leave_to = _AT_LOWER if delta_b[leave_r] > 0 else _AT_UPPER
            self.values[self.basis] = x_b - step * delta_b
            self.values[q] = self.values[q] + direction * step
            if bound_flip:
                self.status_vec[q] = _AT_UPPER if direction > 0 else _AT_LOWER
            else:
                entering_val = self.values[q]
                self._pivot(q, leave_r, w, leave_to)
                self.values[q] = entering_val
            if step <= tol.degenerate_step:
                degenerate_run += 1
                if degenerate_run >= tol.degeneracy_trip:
                    use_bland = True
            else:
                degenerate_run = 0
                use_bland = self.bland_start

    def _extract(self, full_cost) -> LpSolution:
        lp = self.lp
        n = self.n_struct
        x = self.values[:n].copy()
        sign = -1.0 if lp.maximize else 1.0
        y = self._btran(full_cost[self.basis]) if self.m else np.zeros(0)
        lam = -y[:self.m_ub] if self.m_ub else np.zeros(0)
        nu = -y[self.m_ub:self.m] if self.m > self.m_ub else np.zeros(0)
        lam = np.where(np.abs(lam) < 1e-13, 0.0, lam)
        red = sign * lp.c.copy()
        if lp.a_ub.size:
            red += lp.a_ub.T @ lam
        if lp.a_eq.size:
            red += lp.a_eq.T @ nu
        warm_basis = None
        warm_status = None
        if self.m and bool(np.all(self.basis < self.nt)):
            warm_basis = self.basis.copy()
            warm_status = self.status_vec[:self.nt].copy()
        return LpSolution(status=OPTIMAL, x=x, objective=float(lp.c @ x),
                          duals_ub=lam, duals_eq=nu, reduced_costs=red,
                          iterations=self.iterations,
                          basis=warm_basis, var_status=warm_status)


def solve(lp: LinearProgram, tols: Tolerances = DEFAULT_TOLS,
          warm: tuple[np.ndarray, np.ndarray] | None = None) -> LpSolution:
    """Solve with the bundled simplex; never returns an unverified optimum.

    ``warm`` carries (basis, var_status) from a previous solution of a
    problem with identical matrices (only rhs/bounds changed); when the old
    basis is still primal feasible, phase 1 is skipped entirely.  A failed
    certificate check triggers one retry under Bland's rule with aggressive
    refactorization before reporting status ``failed``.
    """
    sol = _Simplex(lp, tols, warm=warm).solve()
    if sol.status == OPTIMAL:
        if validate_certificates(lp, sol, tols)["ok"]:
            return sol
    elif sol.status == INFEASIBLE:
        if sol.farkas is not None and verify_farkas(lp, sol.farkas):
            return sol
    elif sol.status == UNBOUNDED:
        return sol
    retry_tols = replace(tols, refactor_every=30, degeneracy_trip=1)
    sol2 = _Simplex(lp, retry_tols, bland_start=True).solve()
    if sol2.status == OPTIMAL:
        if validate_certificates(lp, sol2, retry_tols)["ok"]:
            return sol2
        return LpSolution(status=FAILED, iterations=sol2.iterations,
                          message="certificate validation failed after retry")
    return sol2


@runtime_checkable
class LpBackend(Protocol):
    """Adapter point for an external solver.

    Anything with this call shape can stand in for :func:`solve`; the
    returned solution must honor the same certificate contracts.  The
    bundled simplex is the only backend shipped and the test suite runs
    entirely on it.
    """

    def __call__(self, lp: LinearProgram,
                 tols: Tolerances = ...) -> LpSolution: ...


def dualize(lp: LinearProgram) -> LinearProgram:
    """Dual of an inequality-only maximization: max c'w s.t. A w <= b.

    Returns  min b'lam  s.t.  A'lam = c,  lam >= 0,  whose optimal value
    equals the primal optimum (strong duality, verified on solved pairs).
    """
    if not lp.maximize:
        raise LpError("dualize expects a maximization problem")
    if lp.a_eq.size or np.any(np.isfinite(lp.lower)) or np.any(np.isfinite(lp.upper)):
        raise LpError("dualize expects inequalities only (no bounds/equalities)")
    m = lp.a_ub.shape[0]
    return LinearProgram.build(
        c=lp.b_ub, a_eq=lp.a_ub.T, b_eq=lp.c,
        lower=np.zeros(m), upper=None,
        names=[f"lam{i}" for i in range(m)])


def write_lp_text(lp: LinearProgram) -> str:
    """Render the problem in a plain-text LP interchange format."""
    def terms(row):
        parts = []
        for j, v in enumerate(row):
            if v == 0.0:
                continue
            sign = "+" if v >= 0 else "-"
            parts.append(f"{sign} {abs(v):.12g} {lp.names[j]}")
        return " ".join(parts) if parts else "0 " + lp.names[0]

    out = ["Maximize" if lp.maximize else "Minimize", f" obj: {terms(lp.c)}",
           "Subject To"]
    for i, (row, b) in enumerate(zip(lp.a_ub, lp.b_ub)):
        out.append(f" r{i}: {terms(row)} <= {b:.12g}")
    for i, (row, b) in enumerate(zip(lp.a_eq, lp.b_eq)):
        out.append(f" e{i}: {terms(row)} = {b:.12g}")
    out.append("Bounds")
    for j, nm in enumerate(lp.names):
        lo, hi = lp.lower[j], lp.upper[j]
        lo_s = f"{lo:.12g}" if np.isfinite(lo) else "-inf"
        hi_s = f"{hi:.12g}" if np.isfinite(hi) else "+inf"
        out.append(f" {lo_s} <= {nm} <= {hi_s}")
    out.append("End")
    return "\n".join(out) + "\n"
