"""Per-building receding-horizon robust baseline control.

Every half hour each building re-optimizes its cheapest input plan subject
to the stacked comfort/input constraints tightened by the worst reserve
request the committed capacities could draw.  The committed capacities are
fixed here, so every tightening margin is a constant: the PC margin is the
one-norm of the per-row reserve response, the windowed-set margin comes from
the per-window oracle on the realized-bias-shifted set.  Input rows then
collapse into variable bounds and the LP holds comfort rows only.

Reserve commitments beyond the known window count as zero (conservative);
state feedback is exact (no estimator, no plant-model mismatch).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import lp
from .dispatch import SlotFeed, dispatch
from .scheduling import ReserveSchedule, reserve_directions
from .thermal import (ROW_INPUT_LOWER, ROW_INPUT_UPPER, DisturbanceTrace,
                      LtvBuildingModel, StackedSystem, build_stack_kernel,
                      stack_building)
from .uncertainty import (RealizedBiasState, UncertaintySet, build_pc,
                          build_pec, pec_row_duals, shrink_realized,
                          worst_case_rows)


class MpcError(RuntimeError):
    pass


class MpcInfeasibleError(MpcError):
    """Tightened problem infeasible; carries the binding row metadata."""

    def __init__(self, message, binding_rows=None):
        super().__init__(message)
        self.binding_rows = binding_rows or []


@dataclass
class MpcState:
    """Rolling per-building controller state."""

    building_id: int
    x: np.ndarray
    r_up: np.ndarray        # (n2, n_r) committed capacities from now on
    r_down: np.ndarray
    n2: int
    step_in_day: int = 0
    bias: RealizedBiasState | None = None
    symmetric: bool = True


@dataclass
class MpcResult:
    u_setpoint: np.ndarray
    u_plan: np.ndarray
    objective: float
    margins: np.ndarray
    duals: dict[int, np.ndarray] | None = None
    lp_solution: lp.LpSolution | None = field(default=None, repr=False)


def shifted_pec_set(eps: float, window_steps: int, bias: RealizedBiasState,
                    n_steps: int) -> UncertaintySet:
    """Admissible completions over the horizon given the running bias."""
    base = build_pec(window_steps, eps=eps, window_steps=window_steps)
    return shrink_realized(base, bias, remaining=n_steps)


def _reserve_margins(stacked: StackedSystem, state: MpcState,
                     uset: UncertaintySet) -> np.ndarray:
    r_dn = state.r_down.reshape(-1)
    if state.symmetric:
        dirs = reserve_directions(stacked, r_dn)
        return worst_case_rows(uset, dirs)
    if uset.kind != "PC":
        raise MpcError("asymmetric capacities pair with box signals only")
    down = reserve_directions(stacked, r_dn)
    up = reserve_directions(stacked, state.r_up.reshape(-1))
    return np.maximum(np.maximum(down, -up), 0.0).sum(axis=1)


def _solve_tightened(stacked: StackedSystem, margins: np.ndarray,
                     cost_u: np.ndarray, context: str,
                     warm_cache: dict | None = None) -> lp.LpSolution:
    model = stacked.models[0]
    n2, n_u = stacked.n_steps, model.n_u
    q_t = stacked.q - margins
    kinds = stacked.row_kind
    is_upper = kinds == ROW_INPUT_UPPER
    is_lower = kinds == ROW_INPUT_LOWER
    is_input = is_upper | is_lower
    upper = np.tile(model.u_max.astype(float), n2)
    lower = np.tile(model.u_min.astype(float), n2)
    col_of = stacked.row_step * n_u + stacked.row_index
    np.minimum.at(upper, col_of[is_upper], q_t[is_upper])
    np.maximum.at(lower, col_of[is_lower], -q_t[is_lower])
    # comfort rows touching a single input column (no state feedthrough,
    # e.g. illuminance) are plain bounds as well
    comfort_idx = np.where(~is_input)[0]
    g_comf = stacked.g[comfort_idx]
    nnz = (np.abs(g_comf) > 1e-12).sum(axis=1)
    single = np.where(nnz == 1)[0]
    if single.size:
        cols = np.argmax(np.abs(g_comf[single]), axis=1)
        coefs = g_comf[single, cols]
        bounds = q_t[comfort_idx[single]] / coefs
        pos = coefs > 0
        np.minimum.at(upper, cols[pos], bounds[pos])
        np.maximum.at(lower, cols[~pos], bounds[~pos])
    if np.any(lower > upper + 1e-12):
        bad_cols = np.where(lower > upper + 1e-12)[0]
        binding = [{"column": int(c), "step": int(c // n_u),
                    "input": int(c % n_u), "lower": float(lower[c]),
                    "upper": float(upper[c])} for c in bad_cols[:20]]
        raise MpcInfeasibleError(
            f"{context}: reserve commitment exceeds the input range",
            binding_rows=binding)
    keep = comfort_idx[nnz > 1]
    comfort = np.zeros(stacked.n_rows, dtype=bool)
    comfort[keep] = True
    prob = lp.LinearProgram.build(
        c=cost_u, a_ub=stacked.g[comfort], b_ub=q_t[comfort],
        lower=lower, upper=np.maximum(upper, lower))
    warm = None
    if warm_cache is not None:
        warm = warm_cache.get("warm")
    sol = lp.solve(prob, warm=warm)
    if warm_cache is not None and sol.status == lp.OPTIMAL \
            and sol.basis is not None:
        warm_cache["warm"] = (sol.basis, sol.var_status)
    if sol.status == lp.INFEASIBLE:
        rows = np.where(comfort)[0]
        weights = np.abs(sol.farkas[:len(rows)]) if sol.farkas is not None \
            else np.zeros(len(rows))
        order = np.argsort(weights)[::-1][:20]
        binding = [{"row": int(rows[i]), "kind": str(stacked.row_kind[rows[i]]),
                    "step": int(stacked.row_step[rows[i]]),
                    "index": int(stacked.row_index[rows[i]]),
                    "weight": float(weights[i])} for i in order if weights[i] > 0]
        raise MpcInfeasibleError(
            f"{context}: comfort rows infeasible under the committed margins",
            binding_rows=binding)
    if sol.status != lp.OPTIMAL:
        raise MpcError(f"{context}: LP solver status {sol.status}")
    return sol


def mpc_step_pc(state: MpcState, stacked_b: StackedSystem,
                cost_u: np.ndarray, warm_cache: dict | None = None) -> MpcResult:
    """Baseline plan against box signals; margins are one-norm constants."""
    uset = build_pc(stacked_b.n_steps)
    margins = _reserve_margins(stacked_b, state, uset)
    sol = _solve_tightened(stacked_b, margins, cost_u,
                           f"building {state.building_id} PC step",
                           warm_cache=warm_cache)
    n_u = stacked_b.models[0].n_u
    u_plan = sol.x.reshape(stacked_b.n_steps, n_u)
    return MpcResult(u_setpoint=u_plan[0], u_plan=u_plan,
                     objective=sol.objective, margins=margins,
                     lp_solution=sol)


def mpc_step_pec(state: MpcState, stacked_b: StackedSystem,
                 cost_u: np.ndarray, eps: float, window_steps: int,
                 return_duals: bool = False,
                 warm_cache: dict | None = None) -> MpcResult:
    """Baseline plan against the realized-bias-shifted windowed set."""
    if state.bias is None:
        raise MpcError("PEC step needs the realized-bias state")
    if not state.symmetric:
        raise MpcError("windowed sets pair with symmetric capacities only")
    uset = shifted_pec_set(eps, window_steps, state.bias, stacked_b.n_steps)
    margins = _reserve_margins(stacked_b, state, uset)
    sol = _solve_tightened(stacked_b, margins, cost_u,
                           f"building {state.building_id} PEC step",
                           warm_cache=warm_cache)
    n_u = stacked_b.models[0].n_u
    u_plan = sol.x.reshape(stacked_b.n_steps, n_u)
    duals = None
    if return_duals:
        dirs = reserve_directions(stacked_b, state.r_down.reshape(-1))
        duals = {}
        for ri in range(stacked_b.n_rows):
            if np.abs(stacked_b.s[ri]).max(initial=0.0) > 1e-14:
                _, duals[ri] = pec_row_duals(uset, dirs[ri])
    return MpcResult(u_setpoint=u_plan[0], u_plan=u_plan,
                     objective=sol.objective, margins=margins, duals=duals,
                     lp_solution=sol)


# ---------------------------------------------------------------------------
# closed Lv2/Lv3 loop over committed reserves
# ---------------------------------------------------------------------------

@dataclass
class BuildingRuntime:
    building_id: int
    model: LtvBuildingModel
    x: np.ndarray


@dataclass
class RunLog:
    """Per-step records of one receding-horizon run."""

    step_minutes: int
    building_ids: list[int]
    u: np.ndarray            # (steps, buildings, n_u)
    du: np.ndarray           # (steps, buildings, n_r)
    y: np.ndarray            # (steps, buildings, n_y)
    w: np.ndarray            # (steps,)
    margin_min: np.ndarray   # (steps, buildings) min slack after tightening
    electric_kw: np.ndarray  # (steps, buildings) realized consumption
    comfort_violations: int
    input_violations: int
    comfort_violations_occupied: int
    lv2_objective: float     # accumulated first-step electricity cost

    def to_csv(self) -> str:
        import csv as _csv
        import io as _io

        buf = _io.StringIO()
        wtr = _csv.writer(buf, lineterminator="\n")
        n_u = self.u.shape[2]
        n_y = self.y.shape[2]
        header = (["timestamp", "building"]
                  + [f"u{i}" for i in range(n_u)]
                  + [f"y{i}" for i in range(n_y)]
                  + ["w", "margin_min", "electric_kw"])
        wtr.writerow(header)
        for t in range(self.u.shape[0]):
            for bi, bid in enumerate(self.building_ids):
                row = ([t * self.step_minutes * 60, bid]
                       + [f"{v:.8g}" for v in self.u[t, bi]]
                       + [f"{v:.8g}" for v in self.y[t, bi]]
                       + [f"{self.w[t]:.8g}", f"{self.margin_min[t, bi]:.8g}",
                          f"{self.electric_kw[t, bi]:.8g}"])
                wtr.writerow(row)
        return buf.getvalue()


def _schedule_slice(schedule: ReserveSchedule, building_id: int, start: int,
                    n2: int, n_r: int) -> tuple[np.ndarray, np.ndarray]:
    """Committed (r_up, r_down) for [start, start+n2), zero beyond."""
    up = np.zeros((n2, n_r))
    dn = np.zeros((n2, n_r))
    mask = schedule.du_building == building_id
    steps = schedule.du_step[mask]
    slots = schedule.du_slot[mask]
    r_up = schedule.r_up[mask]
    r_dn = schedule.r_down[mask]
    sel = (steps >= start) & (steps < start + n2)
    up[steps[sel] - start, slots[sel]] = r_up[sel]
    dn[steps[sel] - start, slots[sel]] = r_dn[sel]
    return up, dn


def receding_horizon_run(buildings: list[BuildingRuntime],
                         schedule: ReserveSchedule,
                         traces: dict[int, DisturbanceTrace],
                         feed: SlotFeed | object,
                         days: int,
                         tariff,
                         n2: int = 48,
                         steps_per_day: int = 48,
                         uncertainty_kind: str = "PC",
                         eps: float | None = None,
                         window_steps: int | None = None,
                         symmetric: bool = True,
                         step_hours: float = 0.5,
                         violation_tol: float = 1e-6) -> RunLog:
    """Simulate the half-hourly baseline re-optimization and per-slot
    dispatch over ``days`` against a realized request feed.

    The plant advances through the true model (no mismatch): the realized
    slot request enters as the slot-mean flux change.  Comfort and input
    bounds are checked on the realized trajectory; counters must stay zero
    for admissible feeds.
    """
    n_steps = days * steps_per_day
    tariff = np.broadcast_to(np.atleast_1d(np.asarray(tariff, dtype=float)),
                             (n_steps + n2,)).copy()
    for b in buildings:
        if len(traces[b.building_id]) < n_steps + n2:
            raise MpcError("trace must cover the run plus one horizon")
    if uncertainty_kind == "PEC" and (eps is None or window_steps is None):
        raise MpcError("PEC runs need eps and window_steps")
    kernels = {b.building_id: build_stack_kernel(b.model, n2)
               for b in buildings if b.model.time_invariant}
    warm_caches = {b.building_id: {} for b in buildings}
    u_fac = {b.building_id: b.model.input_electric_factor
             * b.model.floor_area / 1000.0 for b in buildings}

    nb = len(buildings)
    n_u = buildings[0].model.n_u
    n_r = buildings[0].model.n_r
    n_y = buildings[0].model.n_y
    log_u = np.zeros((n_steps, nb, n_u))
    log_du = np.zeros((n_steps, nb, n_r))
    log_y = np.zeros((n_steps, nb, n_y))
    log_w = np.zeros(n_steps)
    log_margin = np.zeros((n_steps, nb))
    log_kw = np.zeros((n_steps, nb))
    comfort_viol = 0
    comfort_viol_occ = 0
    input_viol = 0
    lv2_cost = 0.0

    bias = RealizedBiasState(window_start=0, t=0, w_p=0.0)
    for t in range(n_steps):
        if uncertainty_kind == "PEC" and hasattr(feed, "on_window_start") \
                and t % window_steps == 0:
            feed.on_window_start(t, buildings, schedule)
        elif uncertainty_kind == "PC" and hasattr(feed, "on_window_start") \
                and t % steps_per_day == 0:
            feed.on_window_start(t, buildings, schedule)
        w_t = feed.w(t)
        for bi, b in enumerate(buildings):
            trace = traces[b.building_id].slice(t, n2)
            stacked = stack_building(b.model, b.x, trace, n2,
                                     building_id=b.building_id,
                                     kernel=kernels.get(b.building_id))
            r_up, r_dn = _schedule_slice(schedule, b.building_id, t, n2, n_r)
            state = MpcState(building_id=b.building_id, x=b.x, r_up=r_up,
                             r_down=r_dn, n2=n2,
                             step_in_day=t % steps_per_day,
                             bias=bias if uncertainty_kind == "PEC" else None,
                             symmetric=symmetric)
            cost_u = np.repeat(tariff[t:t + n2] * step_hours, n_u) \
                * np.tile(u_fac[b.building_id], n2)
            cache = warm_caches[b.building_id]
            if uncertainty_kind == "PEC":
                res = mpc_step_pec(state, stacked, cost_u, eps, window_steps,
                                   warm_cache=cache)
            else:
                res = mpc_step_pc(state, stacked, cost_u, warm_cache=cache)
            u0 = res.u_setpoint
            disp = dispatch(u0, r_up[0], r_dn[0], w_t, b.model,
                            mode="symmetric" if symmetric else "asymmetric")
            v_t = traces[b.building_id].v[t]
            x_next = (b.model.a @ b.x + b.model.b(0) @ u0
                      + b.model.e @ v_t
                      + b.model.reserve_matrix() @ disp.du_thermal)
            y_t = b.model.c @ x_next + b.model.d(0) @ u0 + b.model.f @ v_t
            tr_full = traces[b.building_id]
            over = float((y_t - tr_full.y_max[t]).max(initial=-np.inf))
            under = float((tr_full.y_min[t] - y_t).max(initial=-np.inf))
            if max(over, under) > violation_tol:
                comfort_viol += 1
                if tr_full.occupied[t]:
                    comfort_viol_occ += 1
            if disp.bound_violation > violation_tol:
                input_viol += 1
            log_u[t, bi] = u0
            log_du[t, bi] = disp.du_thermal
            log_y[t, bi] = y_t
            log_margin[t, bi] = float((stacked.q - res.margins
                                       - stacked.g @ res.u_plan.reshape(-1)
                                       ).min())
            log_kw[t, bi] = disp.electric_kw
            lv2_cost += float(cost_u[:n_u] @ u0)
            b.x = x_next
        log_w[t] = w_t
        if uncertainty_kind == "PEC":
            bias = bias.advance(w_t, window_steps)
    return RunLog(step_minutes=int(step_hours * 60),
                  building_ids=[b.building_id for b in buildings],
                  u=log_u, du=log_du, y=log_y, w=log_w,
                  margin_min=log_margin, electric_kw=log_kw,
                  comfort_violations=comfort_viol,
                  input_violations=input_viol,
                  comfort_violations_occupied=comfort_viol_occ,
                  lv2_objective=lv2_cost)
