"""Daily robust reserve scheduling for a building aggregation.

Solves, over the scheduling horizon,

    min  c'u - k'r    s.t.  max_{w in W} (G u + S Rtil(r) w) <= Q,   M r = 0

where ``Rtil(r)`` maps the horizon signal vector w to per-actuator flux
changes (block-diagonal in time: the reserve at step t reacts to w_t only).

Robust counterparts:

- box signals, sign-structured rows: the worst case of each row is the
  element-wise absolute row times r, one linear row each (fast default);
- box signals, general rows: one-norm epigraph with one auxiliary variable
  per step and row (small instances);
- box signals, asymmetric capacities: per-row worst case loads the capacity
  block matching the row sign;
- windowed (PEC) signals: either the exact dual reformulation (one
  multiplier block per uncertain row; small instances) or vertex cutting
  planes driven by the analytic per-window worst-case oracle (any scale).
  Input-bound rows touch a single step, so their PEC worst case collapses to
  a closed form either way.

Pure input-bound rows of actuators that carry no reserves are moved into
variable bounds; this is an identity rewrite that keeps the LP at its
natural size.

Ties among equally-optimal reserve allocations are broken toward smaller
capacities by a vanishing penalty on r (reported objectives exclude it);
beyond that the deterministic pivot rule decides, which is documented as
arbitrary.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import lp
from .thermal import (ROW_INPUT_LOWER, ROW_INPUT_UPPER, ROW_OUTPUT_LOWER,
                      ROW_OUTPUT_UPPER, StackedSystem)
from .uncertainty import (PC, UncertaintySet, build_pc, pec_row_duals,
                          worst_case_argmax, worst_case_rows)


class SchedulingError(RuntimeError):
    pass


class SignStructureError(SchedulingError):
    """A row of S mixes signs; use the general one-norm counterpart."""


class InfeasibleScheduleError(SchedulingError):
    """Comfort is unreachable even with zero reserves."""


class SolverFailureError(SchedulingError):
    """The LP engine failed numerically (distinct from model infeasibility)."""


# ---------------------------------------------------------------------------
# prices, product structure, schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PriceVectors:
    """Electricity cost per u column and capacity payment per r column,
    both in currency per step with COP, floor area, and step length folded
    in."""

    c: np.ndarray
    k: np.ndarray
    ratio: float
    tariff: np.ndarray
    step_hours: float

    def __post_init__(self):
        if np.any(self.c <= 0.0):
            raise SchedulingError("electricity cost must be positive")
        if np.any(self.k < 0.0):
            raise SchedulingError("capacity payment must be nonnegative")


def du_electric_factors(stacked: StackedSystem) -> np.ndarray:
    """kW electric per unit thermal capacity, per reserve column."""
    id_map = {bid: m for bid, m in zip(stacked.building_ids, stacked.models)}
    out = np.empty(stacked.dim_du)
    for col in range(stacked.dim_du):
        m = id_map[int(stacked.du_building[col])]
        slot = int(stacked.du_slot[col])
        out[col] = m.floor_area / (1000.0 * m.cop[slot])
    return out


def u_electric_factors(stacked: StackedSystem) -> np.ndarray:
    """kW electric per unit input, per u column."""
    id_map = {bid: m for bid, m in zip(stacked.building_ids, stacked.models)}
    out = np.empty(stacked.dim_u)
    for col in range(stacked.dim_u):
        m = id_map[int(stacked.u_building[col])]
        out[col] = (m.floor_area / 1000.0
                    * m.input_electric_factor[int(stacked.u_input[col])])
    return out


def build_prices(stacked: StackedSystem, tariff, ratio: float,
                 step_hours: float = 0.5) -> PriceVectors:
    """Fold tariff profile, COP, floor area, and step length into per-column
    cost/payment vectors.  ``tariff`` is currency per electric kWh, scalar or
    per step; ``ratio`` is the capacity payment as a multiple of the tariff
    (currency per electric kW per hour)."""
    tariff = np.broadcast_to(np.atleast_1d(np.asarray(tariff, dtype=float)),
                             (stacked.n_steps,)).copy()
    if np.any(tariff <= 0):
        raise SchedulingError("tariff must be positive")
    u_fac = u_electric_factors(stacked)
    du_fac = du_electric_factors(stacked)
    # zero-consumption actuators (e.g. blinds) get a vanishing positive cost
    # so the objective stays bounded and deterministic
    u_fac = np.where(u_fac <= 0.0, 1e-9, u_fac)
    c = tariff[stacked.u_step] * step_hours * u_fac
    k = ratio * tariff[stacked.du_step] * step_hours * du_fac
    return PriceVectors(c=c, k=k, ratio=float(ratio), tariff=tariff,
                        step_hours=step_hours)


def build_structure_matrix(layout, granularity: str, steps_per_day: int,
                           block_diagonal: bool = True) -> np.ndarray:
    """Equality rows forcing constant capacity within product blocks.

    ``layout`` is a StackedSystem (its du-column metadata is used) or an int
    for a plain one-capacity-per-step toy.  ``granularity`` is "daily",
    "hourly", or "per_step" (empty matrix).  With ``block_diagonal`` each
    (building, actuator) keeps its own capacity constant per block; without
    it only the aggregate total is held constant, letting the allocation
    shift among buildings inside a block.
    """
    if isinstance(layout, StackedSystem):
        n_steps = layout.n_steps
        du_building = layout.du_building
        du_step = layout.du_step
        du_slot = layout.du_slot
    else:
        n_steps = int(layout)
        du_building = np.zeros(n_steps, dtype=int)
        du_step = np.arange(n_steps)
        du_slot = np.zeros(n_steps, dtype=int)
    dim = len(du_step)
    if granularity == "per_step":
        return np.zeros((0, dim))
    if granularity == "daily":
        block = steps_per_day
    elif granularity == "hourly":
        if steps_per_day % 24:
            raise SchedulingError("steps_per_day must be divisible by 24")
        block = steps_per_day // 24
    else:
        raise SchedulingError(f"unknown granularity {granularity!r}")
    if n_steps % block:
        raise SchedulingError("product granularity must divide the horizon")

    def total_row(step):
        row = np.zeros(dim)
        row[du_step == step] = 1.0
        return row

    rows = []
    if block_diagonal:
        actuators = sorted({(int(b), int(s))
                            for b, s in zip(du_building, du_slot)})
        for b, s in actuators:
            mask = (du_building == b) & (du_slot == s)
            cols_by_step = {int(t): np.where(mask & (du_step == t))[0]
                            for t in range(n_steps)}
            for start in range(0, n_steps, block):
                for t in range(start, start + block - 1):
                    row = np.zeros(dim)
                    row[cols_by_step[t]] = 1.0
                    row[cols_by_step[t + 1]] = -1.0
                    rows.append(row)
    else:
        for start in range(0, n_steps, block):
            for t in range(start, start + block - 1):
                rows.append(total_row(t) - total_row(t + 1))
    if not rows:
        return np.zeros((0, dim))
    return np.vstack(rows)


def product_blocks(layout, granularity: str, steps_per_day: int) -> np.ndarray:
    """Block index per reserve column for per-actuator products.

    Columns sharing an index must carry equal capacity; substituting one
    variable per block is equivalent to the corresponding equality rows of
    :func:`build_structure_matrix` (block_diagonal form) and keeps the LPs at
    their natural size.  Aggregate-coupled products have no such collapse and
    keep the M-row formulation.
    """
    if isinstance(layout, StackedSystem):
        n_steps = layout.n_steps
        du_building = layout.du_building
        du_step = layout.du_step
        du_slot = layout.du_slot
    else:
        n_steps = int(layout)
        du_building = np.zeros(n_steps, dtype=int)
        du_step = np.arange(n_steps)
        du_slot = np.zeros(n_steps, dtype=int)
    if granularity == "per_step":
        block_of_step = np.arange(n_steps)
    elif granularity == "daily":
        if n_steps % steps_per_day:
            raise SchedulingError("product granularity must divide the horizon")
        block_of_step = np.arange(n_steps) // steps_per_day
    elif granularity == "hourly":
        if steps_per_day % 24:
            raise SchedulingError("steps_per_day must be divisible by 24")
        per_hour = steps_per_day // 24
        if n_steps % per_hour:
            raise SchedulingError("product granularity must divide the horizon")
        block_of_step = np.arange(n_steps) // per_hour
    else:
        raise SchedulingError(f"unknown granularity {granularity!r}")
    keys = {}
    out = np.empty(len(du_step), dtype=int)
    for col in range(len(du_step)):
        key = (int(du_building[col]), int(du_slot[col]),
               int(block_of_step[du_step[col]]))
        out[col] = keys.setdefault(key, len(keys))
    return out


class _RVars:
    """Capacity variables: identity over columns, or one per product block."""

    def __init__(self, dim_du: int, blocks: np.ndarray | None):
        if blocks is None:
            self.dim = dim_du
            self.expand = None
        else:
            blocks = np.asarray(blocks, dtype=int)
            if blocks.shape != (dim_du,):
                raise SchedulingError("blocks must map every reserve column")
            self.dim = int(blocks.max()) + 1 if dim_du else 0
            self.expand = np.zeros((dim_du, self.dim))
            self.expand[np.arange(dim_du), blocks] = 1.0

    def map_cols(self, coeffs: np.ndarray) -> np.ndarray:
        """Row coefficients over r -> coefficients over the LP variables."""
        return coeffs if self.expand is None else coeffs @ self.expand

    def to_r(self, x: np.ndarray) -> np.ndarray:
        return x if self.expand is None else self.expand @ x


@dataclass(frozen=True)
class ReserveSchedule:
    """Per-actuator, per-step committed capacities (thermal W/m2)."""

    n_steps: int
    r_up: np.ndarray
    r_down: np.ndarray
    symmetric: bool
    du_building: np.ndarray
    du_step: np.ndarray
    du_slot: np.ndarray
    electric_factor: np.ndarray

    def __post_init__(self):
        if np.any(self.r_up < -1e-9) or np.any(self.r_down < -1e-9):
            raise SchedulingError("capacities must be nonnegative")

    @property
    def r(self) -> np.ndarray:
        if not self.symmetric:
            raise SchedulingError("asymmetric schedule has no single r")
        return self.r_down

    def electric_kw_per_step(self) -> np.ndarray:
        """Total committed electric capacity (kW) per step, averaged over
        the up and down directions."""
        per_col = 0.5 * (self.r_up + self.r_down) * self.electric_factor
        out = np.zeros(self.n_steps)
        np.add.at(out, self.du_step, per_col)
        return out

    def average_electric_kw(self) -> float:
        return float(self.electric_kw_per_step().mean())

    def slice_building(self, building_id: int) -> "ReserveSchedule":
        mask = self.du_building == building_id
        return ReserveSchedule(
            n_steps=self.n_steps, r_up=self.r_up[mask],
            r_down=self.r_down[mask], symmetric=self.symmetric,
            du_building=self.du_building[mask], du_step=self.du_step[mask],
            du_slot=self.du_slot[mask],
            electric_factor=self.electric_factor[mask])

    def check_structure(self, m_structure: np.ndarray, tol: float = 1e-7):
        for r_vec in (self.r_up, self.r_down):
            if m_structure.size and \
                    np.abs(m_structure @ r_vec).max(initial=0.0) > tol:
                raise SchedulingError("product structure violated")


def _make_schedule(stacked, r_up, r_down, symmetric) -> ReserveSchedule:
    return ReserveSchedule(
        n_steps=stacked.n_steps,
        r_up=np.maximum(np.asarray(r_up, dtype=float), 0.0),
        r_down=np.maximum(np.asarray(r_down, dtype=float), 0.0),
        symmetric=symmetric,
        du_building=stacked.du_building.copy(),
        du_step=stacked.du_step.copy(),
        du_slot=stacked.du_slot.copy(),
        electric_factor=du_electric_factors(stacked))


# ---------------------------------------------------------------------------
# shared row machinery
# ---------------------------------------------------------------------------

@dataclass
class _RowSplit:
    out_rows: np.ndarray        # all comfort rows
    res_in_rows: np.ndarray     # input rows of reserve-carrying actuators
    u_lower: np.ndarray
    u_upper: np.ndarray


def _split_rows(stacked: StackedSystem) -> _RowSplit:
    has_s = np.abs(stacked.s).max(axis=1, initial=0.0) > 1e-14 \
        if stacked.s.size else np.zeros(stacked.n_rows, dtype=bool)
    kinds = stacked.row_kind
    is_out = (kinds == ROW_OUTPUT_UPPER) | (kinds == ROW_OUTPUT_LOWER)
    is_in = (kinds == ROW_INPUT_UPPER) | (kinds == ROW_INPUT_LOWER)
    id_map = {bid: m for bid, m in zip(stacked.building_ids, stacked.models)}
    u_lower = np.empty(stacked.dim_u)
    u_upper = np.empty(stacked.dim_u)
    for col in range(stacked.dim_u):
        m = id_map[int(stacked.u_building[col])]
        u_lower[col] = m.u_min[int(stacked.u_input[col])]
        u_upper[col] = m.u_max[int(stacked.u_input[col])]
    return _RowSplit(out_rows=np.where(is_out)[0],
                     res_in_rows=np.where(is_in & has_s)[0],
                     u_lower=u_lower, u_upper=u_upper)


def row_signs(stacked: StackedSystem, rows=None, tol: float = 1e-14) -> np.ndarray:
    """Per-row sign of the S entries: +1, -1, 0 (all zero); raises on mixes."""
    s = stacked.s if rows is None else stacked.s[rows]
    pos = (s > tol).any(axis=1)
    neg = (s < -tol).any(axis=1)
    if np.any(pos & neg):
        bad = int(np.where(pos & neg)[0][0])
        raise SignStructureError(
            f"row {bad} of S mixes signs; use the general counterpart")
    return np.where(pos, 1, np.where(neg, -1, 0))


def _step_selector(stacked: StackedSystem) -> np.ndarray:
    sel = np.zeros((stacked.dim_du, stacked.n_steps))
    sel[np.arange(stacked.dim_du), stacked.du_step] = 1.0
    return sel


def reserve_directions(stacked: StackedSystem, r_vec: np.ndarray,
                       rows=None) -> np.ndarray:
    """Per-row signal-direction vectors a with a_k = (S Rtil(r))[row, k]."""
    s = stacked.s if rows is None else stacked.s[rows]
    return (s * r_vec[None, :]) @ _step_selector(stacked)


def reserve_margins(stacked: StackedSystem, schedule: ReserveSchedule,
                    uset: UncertaintySet | None, rows=None) -> np.ndarray:
    """Row-wise worst case of the reserve term over the admissible set.

    Symmetric schedules work for any set; asymmetric ones are box-only
    (each coordinate independently picks the worse of the two directions).
    """
    if uset is None:
        uset = build_pc(stacked.n_steps)
    if schedule.symmetric:
        dirs = reserve_directions(stacked, schedule.r, rows)
        return worst_case_rows(uset, dirs)
    if uset.kind != PC:
        raise SchedulingError("asymmetric margins are defined for PC only")
    down = reserve_directions(stacked, schedule.r_down, rows)
    up = reserve_directions(stacked, schedule.r_up, rows)
    return np.maximum(np.maximum(down, -up), 0.0).sum(axis=1)


# ---------------------------------------------------------------------------
# result container
# ---------------------------------------------------------------------------

def _effective_k(prices: PriceVectors) -> np.ndarray:
    """Capacity reward with the tie-breaking shrink penalty folded in."""
    return prices.k - 1e-9 * float(np.mean(prices.c))


@dataclass
class Lv1Result:
    u: np.ndarray
    schedule: ReserveSchedule
    objective: float
    method: str
    duals: dict[int, np.ndarray] | None = None
    cut_count: int = 0
    iterations: int = 0
    lp_solution: lp.LpSolution | None = field(default=None, repr=False)


def _interpret_failure(sol: lp.LpSolution, context: str):
    if sol.status == lp.INFEASIBLE:
        raise InfeasibleScheduleError(
            f"{context}: comfort constraints unreachable even with zero "
            f"reserves ({sol.message})")
    raise SolverFailureError(f"{context}: LP solver status {sol.status} "
                             f"({sol.message})")


# ---------------------------------------------------------------------------
# PC counterparts
# ---------------------------------------------------------------------------

def schedule_pc_signed(stacked: StackedSystem, prices: PriceVectors,
                       m_structure: np.ndarray,
                       blocks: np.ndarray | None = None) -> Lv1Result:
    """Compact single-sign counterpart: each row tightens by |S_row| r.

    ``blocks`` substitutes one capacity variable per product block instead of
    carrying the equality rows of ``m_structure`` (identical optimum)."""
    row_signs(stacked)  # raises on mixed rows
    split = _split_rows(stacked)
    keep = np.concatenate([split.out_rows, split.res_in_rows])
    dim_u, dim_r = stacked.dim_u, stacked.dim_du
    rv = _RVars(dim_r, blocks)
    a_ub = np.hstack([stacked.g[keep], rv.map_cols(np.abs(stacked.s[keep]))])
    b_ub = stacked.q[keep]
    a_eq = b_eq = None
    if blocks is None and m_structure.size:
        a_eq = np.hstack([np.zeros((m_structure.shape[0], dim_u)), m_structure])
        b_eq = np.zeros(m_structure.shape[0])
    prob = lp.LinearProgram.build(
        c=np.concatenate([prices.c, -rv.map_cols(_effective_k(prices))]),
        a_ub=a_ub, b_ub=b_ub, a_eq=a_eq, b_eq=b_eq,
        lower=np.concatenate([split.u_lower, np.zeros(rv.dim)]),
        upper=np.concatenate([split.u_upper, np.full(rv.dim, np.inf)]))
    sol = lp.solve(prob)
    if sol.status != lp.OPTIMAL:
        _interpret_failure(sol, "PC signed scheduling")
    u = sol.x[:dim_u]
    r = rv.to_r(sol.x[dim_u:])
    return Lv1Result(u=u, schedule=_make_schedule(stacked, r, r, True),
                     objective=float(prices.c @ u - prices.k @ r),
                     method="pc_signed",
                     iterations=sol.iterations, lp_solution=sol)


def schedule_pc_general(stacked: StackedSystem, prices: PriceVectors,
                        m_structure: np.ndarray,
                        blocks: np.ndarray | None = None) -> Lv1Result:
    """One-norm counterpart with per-row auxiliary variables; works for
    mixed-sign rows.  Grows with horizon^2, meant for small instances."""
    split = _split_rows(stacked)
    n = stacked.n_steps
    dim_u, dim_r = stacked.dim_u, stacked.dim_du
    rv = _RVars(dim_r, blocks)
    sel = _step_selector(stacked)
    unc_rows = [int(i) for i in np.concatenate([split.out_rows,
                                                split.res_in_rows])
                if np.abs(stacked.s[i]).max(initial=0.0) > 1e-14]
    det_rows = [int(i) for i in split.out_rows
                if np.abs(stacked.s[i]).max(initial=0.0) <= 1e-14]
    n_aux = len(unc_rows) * n
    dim = dim_u + rv.dim + n_aux
    a_rows, b_rows = [], []
    for pos, ri in enumerate(unc_rows):
        slice_mat = rv.map_cols(stacked.s[ri][None, :] * sel.T)  # (n, rv.dim)
        aux0 = dim_u + rv.dim + pos * n
        for k in range(n):
            row = np.zeros(dim)
            row[dim_u:dim_u + rv.dim] = slice_mat[k]
            row[aux0 + k] = -1.0
            a_rows.append(row)
            b_rows.append(0.0)
            row2 = np.zeros(dim)
            row2[dim_u:dim_u + rv.dim] = -slice_mat[k]
            row2[aux0 + k] = -1.0
            a_rows.append(row2)
            b_rows.append(0.0)
        main = np.zeros(dim)
        main[:dim_u] = stacked.g[ri]
        main[aux0:aux0 + n] = 1.0
        a_rows.append(main)
        b_rows.append(stacked.q[ri])
    for ri in det_rows:
        row = np.zeros(dim)
        row[:dim_u] = stacked.g[ri]
        a_rows.append(row)
        b_rows.append(stacked.q[ri])
    a_eq = None
    b_eq = None
    if blocks is None and m_structure.size:
        a_eq = np.hstack([np.zeros((m_structure.shape[0], dim_u)), m_structure,
                          np.zeros((m_structure.shape[0], n_aux))])
        b_eq = np.zeros(m_structure.shape[0])
    prob = lp.LinearProgram.build(
        c=np.concatenate([prices.c, -rv.map_cols(_effective_k(prices)),
                          np.zeros(n_aux)]),
        a_ub=np.vstack(a_rows), b_ub=np.array(b_rows), a_eq=a_eq, b_eq=b_eq,
        lower=np.concatenate([split.u_lower, np.zeros(rv.dim),
                              np.zeros(n_aux)]),
        upper=np.concatenate([split.u_upper, np.full(rv.dim + n_aux, np.inf)]))
    sol = lp.solve(prob)
    if sol.status != lp.OPTIMAL:
        _interpret_failure(sol, "PC general scheduling")
    u = sol.x[:dim_u]
    r = rv.to_r(sol.x[dim_u:dim_u + rv.dim])
    return Lv1Result(u=u, schedule=_make_schedule(stacked, r, r, True),
                     objective=float(prices.c @ u - prices.k @ r),
                     method="pc_general",
                     iterations=sol.iterations, lp_solution=sol)


def schedule_pc_asymmetric(stacked: StackedSystem, prices: PriceVectors,
                           m_structure: np.ndarray,
                           blocks: np.ndarray | None = None) -> Lv1Result:
    """Separate up/down capacities under box signals.

    A positive-sign row is worst hit by a full down request (w = +1 on its
    steps) and loads the down block; a negative-sign row symmetrically loads
    the up block.  Each direction earns half the symmetric payment, so the
    symmetric solution is a feasible point with identical objective.
    """
    signs = row_signs(stacked)
    split = _split_rows(stacked)
    keep = np.concatenate([split.out_rows, split.res_in_rows])
    dim_u, dim_r = stacked.dim_u, stacked.dim_du
    rv = _RVars(dim_r, blocks)
    s_abs = np.abs(stacked.s[keep])
    sgn = signs[keep]
    up_block = rv.map_cols(np.where(sgn[:, None] < 0, s_abs, 0.0))
    dn_block = rv.map_cols(np.where(sgn[:, None] > 0, s_abs, 0.0))
    a_ub = np.hstack([stacked.g[keep], up_block, dn_block])
    a_eq = None
    b_eq = None
    if blocks is None and m_structure.size:
        n_m = m_structure.shape[0]
        z = np.zeros((n_m, dim_r))
        a_eq = np.vstack([
            np.hstack([np.zeros((n_m, dim_u)), m_structure, z]),
            np.hstack([np.zeros((n_m, dim_u)), z, m_structure])])
        b_eq = np.zeros(2 * n_m)
    k_half = 0.5 * rv.map_cols(_effective_k(prices))
    prob = lp.LinearProgram.build(
        c=np.concatenate([prices.c, -k_half, -k_half]),
        a_ub=a_ub, b_ub=stacked.q[keep], a_eq=a_eq, b_eq=b_eq,
        lower=np.concatenate([split.u_lower, np.zeros(2 * rv.dim)]),
        upper=np.concatenate([split.u_upper, np.full(2 * rv.dim, np.inf)]))
    sol = lp.solve(prob)
    if sol.status != lp.OPTIMAL:
        _interpret_failure(sol, "PC asymmetric scheduling")
    u = sol.x[:dim_u]
    r_up = rv.to_r(sol.x[dim_u:dim_u + rv.dim])
    r_dn = rv.to_r(sol.x[dim_u + rv.dim:])
    objective = float(prices.c @ u - 0.5 * prices.k @ (r_up + r_dn))
    return Lv1Result(u=u, schedule=_make_schedule(stacked, r_up, r_dn, False),
                     objective=objective, method="pc_asymmetric",
                     iterations=sol.iterations, lp_solution=sol)


# ---------------------------------------------------------------------------
# PEC counterparts
# ---------------------------------------------------------------------------

def _pec_input_row_coeffs(stacked, rows, uset):
    """Closed-form PEC tightening for single-step (input-bound) rows."""
    n = stacked.n_steps
    zeta_plus = worst_case_rows(uset, np.eye(n))
    zeta_minus = worst_case_rows(uset, -np.eye(n))
    coeffs = np.abs(stacked.s[rows])
    kinds = stacked.row_kind[rows]
    steps = stacked.row_step[rows]
    zeta = np.where(kinds == ROW_INPUT_UPPER, zeta_plus[steps],
                    zeta_minus[steps])
    return coeffs * zeta[:, None]


def schedule_pec(stacked: StackedSystem, prices: PriceVectors,
                 m_structure: np.ndarray, uset: UncertaintySet,
                 method: str = "auto", return_duals: bool = True,
                 cut_tol: float = 1e-7, max_cut_rounds: int = 80,
                 blocks: np.ndarray | None = None) -> Lv1Result:
    """Robust scheduling against the windowed signal set (symmetric only).

    ``method``: "dual" builds the exact multiplier reformulation (size grows
    with rows x halfplanes, for small instances); "cuts" runs vertex cutting
    planes with the per-window oracle and lazily generated comfort rows;
    "auto" picks by size.
    """
    if uset.kind == PC:
        raise SchedulingError("use the PC counterparts for box signals")
    if uset.n_steps != stacked.n_steps:
        raise SchedulingError("uncertainty horizon mismatch")
    split = _split_rows(stacked)
    n_hp = 2 * len(uset.windows) + 2 * uset.n_steps
    unc_out = [int(i) for i in split.out_rows
               if np.abs(stacked.s[i]).max(initial=0.0) > 1e-14]
    if method == "auto":
        method = "dual" if len(unc_out) * n_hp <= 20_000 else "cuts"
    if method == "dual":
        result = _schedule_pec_dual(stacked, prices, m_structure, uset, split,
                                    unc_out, blocks)
    elif method == "cuts":
        result = _schedule_pec_cuts(stacked, prices, m_structure, uset, split,
                                    cut_tol, max_cut_rounds, blocks)
    else:
        raise SchedulingError(f"unknown method {method!r}")
    if return_duals:
        result.duals = recover_pec_duals(stacked, result.schedule, uset)
    return result


def _pec_base_blocks(stacked, prices, m_structure, uset, split, rv):
    """Rows shared by both PEC methods: closed-form input rows, structure
    equalities, bounds, objective."""
    dim_u = stacked.dim_u
    rows_in = split.res_in_rows
    in_block = np.hstack([stacked.g[rows_in],
                          rv.map_cols(_pec_input_row_coeffs(
                              stacked, rows_in, uset))]) \
        if rows_in.size else np.zeros((0, dim_u + rv.dim))
    b_in = stacked.q[rows_in]
    a_eq = b_eq = None
    if rv.expand is None and m_structure.size:
        a_eq = np.hstack([np.zeros((m_structure.shape[0], dim_u)), m_structure])
        b_eq = np.zeros(m_structure.shape[0])
    cost = np.concatenate([prices.c, -rv.map_cols(_effective_k(prices))])
    lower = np.concatenate([split.u_lower, np.zeros(rv.dim)])
    upper = np.concatenate([split.u_upper, np.full(rv.dim, np.inf)])
    return in_block, b_in, a_eq, b_eq, cost, lower, upper


def _schedule_pec_dual(stacked, prices, m_structure, uset, split, unc_out,
                       blocks=None):
    a_bar, b_bar = uset.halfplanes()
    n_hp = len(b_bar)
    n = stacked.n_steps
    dim_u = stacked.dim_u
    rv = _RVars(stacked.dim_du, blocks)
    sel = _step_selector(stacked)
    det_out = [int(i) for i in split.out_rows if i not in set(unc_out)]
    in_block, b_in, a_eq_m, b_eq_m, cost, lower, upper = _pec_base_blocks(
        stacked, prices, m_structure, uset, split, rv)
    dim = dim_u + rv.dim + len(unc_out) * n_hp
    ub_rows, ub_rhs = [], []

    def pad(row2):
        return np.concatenate([row2, np.zeros(dim - len(row2))])

    for blk in in_block:
        ub_rows.append(pad(blk))
    ub_rhs.extend(b_in.tolist())
    for ri in det_out:
        row = np.zeros(dim)
        row[:dim_u] = stacked.g[ri]
        ub_rows.append(row)
        ub_rhs.append(stacked.q[ri])
    eq_rows, eq_rhs = [], []
    for pos, ri in enumerate(unc_out):
        lam0 = dim_u + rv.dim + pos * n_hp
        # b_bar' lam + G u <= q
        row = np.zeros(dim)
        row[:dim_u] = stacked.g[ri]
        row[lam0:lam0 + n_hp] = b_bar
        ub_rows.append(row)
        ub_rhs.append(stacked.q[ri])
        # A_bar' lam = a(r)  per step
        slice_mat = rv.map_cols(stacked.s[ri][None, :] * sel.T)  # (n, rv.dim)
        for k in range(n):
            row = np.zeros(dim)
            row[lam0:lam0 + n_hp] = a_bar[:, k]
            row[dim_u:dim_u + rv.dim] = -slice_mat[k]
            eq_rows.append(row)
            eq_rhs.append(0.0)
    if a_eq_m is not None:
        for row, rhs in zip(a_eq_m, b_eq_m):
            eq_rows.append(pad(row))
            eq_rhs.append(rhs)
    prob = lp.LinearProgram.build(
        c=np.concatenate([cost, np.zeros(len(unc_out) * n_hp)]),
        a_ub=np.vstack(ub_rows), b_ub=np.array(ub_rhs),
        a_eq=np.vstack(eq_rows) if eq_rows else None,
        b_eq=np.array(eq_rhs) if eq_rows else None,
        lower=np.concatenate([lower, np.zeros(len(unc_out) * n_hp)]),
        upper=np.concatenate([upper, np.full(len(unc_out) * n_hp, np.inf)]))
    sol = lp.solve(prob)
    if sol.status != lp.OPTIMAL:
        _interpret_failure(sol, "PEC dual scheduling")
    u = sol.x[:dim_u]
    r = rv.to_r(sol.x[dim_u:dim_u + rv.dim])
    return Lv1Result(u=u, schedule=_make_schedule(stacked, r, r, True),
                     objective=float(prices.c @ u - prices.k @ r),
                     method="pec_dual",
                     iterations=sol.iterations, lp_solution=sol)


def _schedule_pec_cuts(stacked, prices, m_structure, uset, split,
                       cut_tol, max_rounds, blocks=None):
    """Vertex cutting planes with lazily generated comfort rows.

    The master starts from the closed-form input rows only; every round the
    per-window oracle prices all comfort rows exactly and the violated ones
    enter as cuts at their worst signal.  The master is a relaxation
    throughout, so an infeasible master proves the schedule infeasible.
    """
    dim_u = stacked.dim_u
    rv = _RVars(stacked.dim_du, blocks)
    sel = _step_selector(stacked)
    in_block, b_in, a_eq, b_eq, cost, lower, upper = _pec_base_blocks(
        stacked, prices, m_structure, uset, split, rv)
    g_out = stacked.g[split.out_rows]
    s_out = stacked.s[split.out_rows]
    q_out = stacked.q[split.out_rows]
    a_ub = in_block if in_block.size else np.zeros((0, dim_u + rv.dim))
    b_ub = b_in
    # seed one admissible worst-vertex cut per reserve-coupled comfort row,
    # evaluated at unit capacity; this fixes the window geometry up front
    # and keeps the refinement loop to a few rounds
    sel_t = _step_selector(stacked)
    unit_dirs = s_out @ sel_t
    seed_rows = []
    seed_rhs = []
    for pos in range(len(split.out_rows)):
        if np.abs(s_out[pos]).max(initial=0.0) <= 1e-14:
            continue
        _, w_star = worst_case_argmax(uset, unit_dirs[pos])
        row = np.empty(dim_u + rv.dim)
        row[:dim_u] = g_out[pos]
        row[dim_u:] = rv.map_cols(s_out[pos] * w_star[stacked.du_step])
        seed_rows.append(row)
        seed_rhs.append(q_out[pos])
    if seed_rows:
        a_ub = np.vstack([a_ub, np.array(seed_rows)])
        b_ub = np.concatenate([b_ub, np.array(seed_rhs)])
    cuts = len(seed_rows)
    sol = None
    warm = None
    for round_no in range(1, max_rounds + 1):
        prob = lp.LinearProgram.build(
            c=cost, a_ub=a_ub, b_ub=b_ub, a_eq=a_eq, b_eq=b_eq,
            lower=lower, upper=upper)
        sol = lp.solve(prob, warm=warm)
        if sol.status != lp.OPTIMAL:
            # the master relaxes the robust problem: infeasibility is real
            _interpret_failure(sol, f"PEC cut scheduling (round {round_no})")
        warm = (sol.basis, sol.var_status)
        u = sol.x[:dim_u]
        r = rv.to_r(sol.x[dim_u:])
        dirs = (s_out * r[None, :]) @ sel
        margins = worst_case_rows(uset, dirs)
        viol = g_out @ u + margins - q_out
        scale = 1.0 + np.abs(q_out)
        bad = np.where(viol > cut_tol * scale)[0]
        if bad.size == 0:
            return Lv1Result(
                u=u, schedule=_make_schedule(stacked, r, r, True),
                objective=float(prices.c @ u - prices.k @ r),
                method="pec_cuts",
                cut_count=cuts, iterations=round_no, lp_solution=sol)
        worst = bad[np.argsort(viol[bad])[::-1]]
        new_rows = np.empty((len(worst), dim_u + rv.dim))
        new_rhs = np.empty(len(worst))
        for j, bi in enumerate(worst):
            _, w_star = worst_case_argmax(uset, dirs[bi])
            w_expand = w_star[stacked.du_step]
            new_rows[j, :dim_u] = g_out[bi]
            new_rows[j, dim_u:] = rv.map_cols(s_out[bi] * w_expand)
            new_rhs[j] = q_out[bi]
        a_ub = np.vstack([a_ub, new_rows])
        b_ub = np.concatenate([b_ub, new_rhs])
        cuts += len(worst)
    raise SolverFailureError(
        f"PEC cutting planes did not converge in {max_rounds} rounds "
        f"({cuts} cuts)")


def recover_pec_duals(stacked: StackedSystem, schedule: ReserveSchedule,
                      uset: UncertaintySet) -> dict[int, np.ndarray]:
    """Analytic per-row multiplier blocks certifying the worst case.

    Each block lam satisfies A_bar' lam = a_row(r*), b_bar' lam = worst-case
    margin, lam >= 0, for every row with a nonzero reserve term.
    """
    duals: dict[int, np.ndarray] = {}
    r = schedule.r
    dirs = reserve_directions(stacked, r)
    for ri in range(stacked.n_rows):
        if np.abs(stacked.s[ri]).max(initial=0.0) <= 1e-14:
            continue
        _, lam = pec_row_duals(uset, dirs[ri])
        duals[ri] = lam
    return duals


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

@dataclass
class RobustnessReport:
    mode: str
    worst_margin: float
    violations: list[dict]
    n_scenarios: int

    @property
    def ok(self) -> bool:
        return not self.violations


def robust_feasibility_check(stacked: StackedSystem, u: np.ndarray,
                             schedule: ReserveSchedule,
                             uset: UncertaintySet | None,
                             mode: str = "oracle", seed: int = 0,
                             n_samples: int = 200,
                             tol: float = 1e-7) -> RobustnessReport:
    """Check  max_w (G u + S Rtil(r) w) <= Q  exactly (vertex oracle) or by
    Monte Carlo sampling; lists violating rows with metadata."""
    from .uncertainty import enumerate_vertices, sample_admissible

    if uset is None:
        uset = build_pc(stacked.n_steps)
    base = stacked.g @ u - stacked.q
    if mode == "oracle":
        if uset.n_steps > 8:
            raise SchedulingError("oracle mode capped at 8 steps")
        scenarios = enumerate_vertices(uset)
    elif mode == "monte_carlo":
        scenarios = sample_admissible(uset, seed=seed, count=n_samples)
    else:
        raise SchedulingError(f"unknown mode {mode!r}")
    margins = np.full(stacked.n_rows, -np.inf)
    for w in scenarios:
        if schedule.symmetric:
            du = schedule.r * w[stacked.du_step]
        else:
            w_cols = w[stacked.du_step]
            du = np.where(w_cols >= 0, schedule.r_down, schedule.r_up) * w_cols
        margins = np.maximum(margins, base + stacked.s @ du)
    violations = []
    for ri in np.where(margins > tol)[0]:
        violations.append({
            "row": int(ri), "kind": str(stacked.row_kind[ri]),
            "building": int(stacked.row_building[ri]),
            "step": int(stacked.row_step[ri]),
            "index": int(stacked.row_index[ri]),
            "margin": float(margins[ri])})
    return RobustnessReport(mode=mode, worst_margin=float(margins.max()),
                            violations=violations, n_scenarios=len(scenarios))


# ---------------------------------------------------------------------------
# CSV serialization
# ---------------------------------------------------------------------------

def schedule_to_csv(result: Lv1Result, stacked: StackedSystem) -> str:
    """Rows: building, actuator, step, r_up, r_down, u_baseline."""
    sched = result.schedule
    u_map = {}
    for col in range(stacked.dim_u):
        u_map[(int(stacked.u_building[col]), int(stacked.u_input[col]),
               int(stacked.u_step[col]))] = result.u[col]
    id_map = {bid: m for bid, m in zip(stacked.building_ids, stacked.models)}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["building", "actuator", "step", "r_up", "r_down", "u_baseline"])
    for col in range(stacked.dim_du):
        b = int(sched.du_building[col])
        slot = int(sched.du_slot[col])
        t = int(sched.du_step[col])
        actuator = id_map[b].reserve_actuator_index[slot]
        w.writerow([b, actuator, t, f"{sched.r_up[col]:.10g}",
                    f"{sched.r_down[col]:.10g}",
                    f"{u_map[(b, actuator, t)]:.10g}"])
    return buf.getvalue()


def schedule_summary_csv(result: Lv1Result, steps_per_day: int) -> str:
    sched = result.schedule
    per_step = sched.electric_kw_per_step()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["field", "value"])
    w.writerow(["objective", f"{result.objective:.10g}"])
    w.writerow(["method", result.method])
    w.writerow(["average_capacity_kw", f"{per_step.mean():.10g}"])
    for d in range(sched.n_steps // steps_per_day):
        day = per_step[d * steps_per_day:(d + 1) * steps_per_day]
        w.writerow([f"day{d}_capacity_kw", f"{day.mean():.10g}"])
    return buf.getvalue()
