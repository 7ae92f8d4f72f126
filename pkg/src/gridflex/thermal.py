"""Building thermal models and horizon stacking.

The working model is linear time-varying:

    x[t+1] = A x[t] + B_t u[t] + E v[t] + R du[t]
    yhat[t] = C x[t+1] + D_t u[t] + F v[t]

States are node temperatures (room air, wall layers, slab), inputs are
[heating flux, cooling flux, lighting] in W/m2 of floor area, disturbances
are [ambient temperature, solar flux, internal gains], outputs are
[room temperature, workplane illuminance].  ``du`` is the reserve-driven
flux change of the reserve actuators; its columns of ``R`` equal the
corresponding columns of ``B_t`` (cooling columns are negative, so a
consumption increase always means ``du >= 0`` in actuator units).

Comfort at slot t is judged on ``yhat[t]``, the output reached at the end of
the slot; stacking and simulation share this convention exactly.

Archetypes: six configurable RC-ladder buildings in two families.  Family A
delivers heat/cold to the room node (radiators, cooled ceilings); family B
delivers to the slab node (thermally activated structures), which makes its
dominant time constant longer.  Parameters are plausible constants, not a
calibration of any measured building.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import expm

HEAT, COOL, LIGHT = 0, 1, 2
INPUT_NAMES = ("heat", "cool", "light")
OUTPUT_NAMES = ("room_temp", "illuminance")

ROW_OUTPUT_UPPER = "output-upper"
ROW_INPUT_UPPER = "input-upper"
ROW_OUTPUT_LOWER = "output-lower"
ROW_INPUT_LOWER = "input-lower"


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class LtvBuildingModel:
    """Discrete-time LTV building model with reserve actuator map."""

    name: str
    a: np.ndarray            # (n_x, n_x)
    b_steps: np.ndarray      # (n_b, n_x, n_u); n_b == 1 means time-invariant
    e: np.ndarray            # (n_x, n_v)
    c: np.ndarray            # (n_y, n_x)
    d_steps: np.ndarray      # (n_d, n_y, n_u)
    f: np.ndarray            # (n_y, n_v)
    u_min: np.ndarray
    u_max: np.ndarray
    reserve_actuator_index: tuple[int, ...]
    actuator_sign: tuple[int, ...]
    cop: tuple[float, ...]
    floor_area: float
    input_electric_factor: np.ndarray  # kW electric per unit input, per column
    gains_level: str = "gh"

    def __post_init__(self):
        n_x, n_u = self.a.shape[0], self.b_steps.shape[2]
        if self.a.shape != (n_x, n_x):
            raise ModelError("state matrix must be square")
        if min(n_x, n_u, self.e.shape[1], self.c.shape[0]) < 1:
            raise ModelError("all dimension counts must be positive")
        if self.n_r > n_u:
            raise ModelError("more reserve actuators than inputs")
        idx = self.reserve_actuator_index
        if len(set(idx)) != len(idx) or any(j >= n_u or j < 0 for j in idx):
            raise ModelError("reserve actuator indices must be distinct inputs")
        if np.any(self.u_min > self.u_max):
            raise ModelError("u_min must not exceed u_max")
        if any(cp <= 0 for cp in self.cop):
            raise ModelError("cop must be positive for every reserve actuator")
        if any(s not in (-1, 1) for s in self.actuator_sign):
            raise ModelError("actuator signs must be +1 or -1")

    # dimension counts
    @property
    def n_x(self) -> int:
        return self.a.shape[0]

    @property
    def n_u(self) -> int:
        return self.b_steps.shape[2]

    @property
    def n_v(self) -> int:
        return self.e.shape[1]

    @property
    def n_y(self) -> int:
        return self.c.shape[0]

    @property
    def n_r(self) -> int:
        return len(self.reserve_actuator_index)

    @property
    def time_invariant(self) -> bool:
        return self.b_steps.shape[0] == 1 and self.d_steps.shape[0] == 1

    def b(self, t: int) -> np.ndarray:
        return self.b_steps[min(t, self.b_steps.shape[0] - 1)]

    def d(self, t: int) -> np.ndarray:
        return self.d_steps[min(t, self.d_steps.shape[0] - 1)]

    def reserve_matrix(self, t: int = 0) -> np.ndarray:
        """R: the reserve-actuator columns of B_t (invariant across steps)."""
        return self.b(t)[:, list(self.reserve_actuator_index)]

    @property
    def h_map(self) -> np.ndarray:
        """0/1 map from reserve slots to input columns."""
        h = np.zeros((self.n_u, self.n_r))
        for j, col in enumerate(self.reserve_actuator_index):
            h[col, j] = 1.0
        return h

    def spectral_radius(self) -> float:
        return float(np.abs(np.linalg.eigvals(self.a)).max())

    def dominant_time_constant_steps(self) -> float:
        lams = np.abs(np.linalg.eigvals(self.a))
        lam = lams[lams < 1.0].max()
        return float(-1.0 / np.log(lam))

    def validate_reserve_columns(self) -> None:
        r0 = self.reserve_matrix(0)
        for t in range(self.b_steps.shape[0]):
            if not np.allclose(self.b(t)[:, list(self.reserve_actuator_index)],
                               r0, atol=1e-12):
                raise ModelError("reserve columns of B must not vary over time")


@dataclass(frozen=True)
class BilinearTerm:
    """One product term: coeff * u[input] * partner.

    ``equation`` is "state" or "output"; ``row`` indexes the affected state or
    output; ``partner_kind`` is "state" (xu term) or "disturbance" (uv term)
    with ``partner`` the corresponding index.
    """

    equation: str
    row: int
    input: int
    partner_kind: str
    partner: int
    coeff: float


@dataclass(frozen=True)
class BilinearBuildingModel:
    """LTV base plus bilinear corrections to be folded or linearized."""

    base: LtvBuildingModel
    xu_terms: tuple[BilinearTerm, ...] = ()
    uv_terms: tuple[BilinearTerm, ...] = ()

    def __post_init__(self):
        m = self.base
        for term in (*self.xu_terms, *self.uv_terms):
            n_row = m.n_x if term.equation == "state" else m.n_y
            if not (0 <= term.row < n_row and 0 <= term.input < m.n_u):
                raise ModelError("bilinear term indices out of range")
            limit = m.n_x if term.partner_kind == "state" else m.n_v
            if not 0 <= term.partner < limit:
                raise ModelError("bilinear partner index out of range")


@dataclass(frozen=True)
class DisturbanceTrace:
    """Per-step disturbances, occupancy, and comfort bounds."""

    v: np.ndarray          # (T, n_v)
    occupied: np.ndarray   # (T,) bool
    y_min: np.ndarray      # (T, n_y)
    y_max: np.ndarray      # (T, n_y)
    step_minutes: int = 30

    def __post_init__(self):
        if len(self.v) < 1:
            raise ModelError("trace must cover at least one step")
        if not (len(self.v) == len(self.occupied) == len(self.y_min)
                == len(self.y_max)):
            raise ModelError("trace arrays must share their length")
        if np.any(self.y_min >= self.y_max):
            raise ModelError("y_min must be strictly below y_max")

    def __len__(self) -> int:
        return len(self.v)

    def slice(self, start: int, n: int) -> "DisturbanceTrace":
        if start + n > len(self):
            raise ModelError("trace too short for the requested window")
        return DisturbanceTrace(v=self.v[start:start + n],
                                occupied=self.occupied[start:start + n],
                                y_min=self.y_min[start:start + n],
                                y_max=self.y_max[start:start + n],
                                step_minutes=self.step_minutes)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["timestamp", "ambient", "solar", "gains", "occupied",
                    "y_min", "y_max"])
        for t in range(len(self)):
            w.writerow([t * self.step_minutes * 60,
                        f"{self.v[t, 0]:.6g}", f"{self.v[t, 1]:.6g}",
                        f"{self.v[t, 2]:.6g}", int(self.occupied[t]),
                        f"{self.y_min[t, 0]:.6g}", f"{self.y_max[t, 0]:.6g}"])
        return buf.getvalue()


def trace_from_csv(text: str, step_minutes: int = 30,
                   lux_min_occupied: float = 500.0,
                   lux_max: float = 1e5) -> DisturbanceTrace:
    """Load a trace; temperature bounds come from the file, illuminance
    bounds follow occupancy."""
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise ModelError("empty trace file")
    n = len(rows)
    v = np.zeros((n, 3))
    occ = np.zeros(n, dtype=bool)
    y_min = np.zeros((n, 2))
    y_max = np.zeros((n, 2))
    for t, row in enumerate(rows):
        v[t] = [float(row["ambient"]), float(row["solar"]), float(row["gains"])]
        occ[t] = bool(int(row["occupied"]))
        y_min[t] = [float(row["y_min"]), lux_min_occupied if occ[t] else 0.0]
        y_max[t] = [float(row["y_max"]), lux_max]
    return DisturbanceTrace(v=v, occupied=occ, y_min=y_min, y_max=y_max,
                            step_minutes=step_minutes)


# ---------------------------------------------------------------------------
# archetypes
# ---------------------------------------------------------------------------

ARCHETYPES = {
    "A1": dict(system="A", envelope="eh", window="wh", gains="gh"),
    "A2": dict(system="A", envelope="eh", window="wl", gains="gl"),
    "A3": dict(system="A", envelope="el", window="wl", gains="gl"),
    "B1": dict(system="B", envelope="eh", window="wh", gains="gh"),
    "B2": dict(system="B", envelope="eh", window="wl", gains="gl"),
    "B3": dict(system="B", envelope="el", window="wl", gains="gl"),
}

RATED_HEAT = 27.0    # W/m2 thermal
RATED_COOL = 32.0
RATED_LIGHT = 12.0
FLOOR_AREA = 15000.0  # m2
LUX_PER_LIGHT = 50.0  # lux per W/m2 of lighting power
DAYLIGHT_LUX_PER_SOLAR = 2.0


def make_archetype(archetype_id: str, order: int = 4, step: int = 30,
                   reserve: str = "both") -> LtvBuildingModel:
    """Build one of the six archetype models.

    ``order`` >= 2 sets the state count (room, order-2 wall layers, slab);
    ``step`` is the discretization step in minutes and must divide 60;
    ``reserve`` picks which actuators can carry reserves
    ("heating", "cooling", "both").
    """
    if archetype_id not in ARCHETYPES:
        raise ModelError(f"unknown archetype id {archetype_id!r}")
    if order < 2:
        raise ModelError("model order must be at least 2")
    if 60 % step != 0:
        raise ModelError("step must divide 60 minutes")
    spec = ARCHETYPES[archetype_id]
    n_wall = order - 2
    # capacities in Wh/(m2 K), conductances in W/(m2 K)
    c_room = 18.0
    c_wall_total = 300.0 if spec["envelope"] == "eh" else 120.0
    if spec["system"] == "A":
        c_slab, k_rs = 80.0, 1.2     # passive floor mass
    else:
        c_slab, k_rs = 110.0, 5.0    # actuated slab, strong surface coupling
    k_win = 0.8 if spec["window"] == "wh" else 0.45
    solar_gain = 0.05 if spec["window"] == "wh" else 0.03
    u_env = 0.45
    n_links = n_wall + 1
    k_link = u_env * n_links

    n_x = order
    room, slab = 0, order - 1
    walls = list(range(1, order - 1))
    cap = np.empty(n_x)
    cap[room] = c_room
    cap[slab] = c_slab
    for wi in walls:
        cap[wi] = c_wall_total / max(n_wall, 1)

    lap = np.zeros((n_x, n_x))

    def couple(i, j, k):
        lap[i, i] -= k
        lap[j, j] -= k
        lap[i, j] += k
        lap[j, i] += k

    def to_ambient(i, k):
        lap[i, i] -= k

    couple(room, slab, k_rs)
    if n_wall:
        couple(room, walls[0], k_link)
        for a, b in zip(walls, walls[1:]):
            couple(a, b, k_link)
        to_ambient(walls[-1], k_link)
    else:
        to_ambient(room, k_link / 2.0)
    to_ambient(room, k_win)

    a_c = lap / cap[:, None]

    b_c = np.zeros((n_x, 3))
    target = room if spec["system"] == "A" else slab
    b_c[target, HEAT] = 1.0 / cap[target]
    b_c[target, COOL] = -1.0 / cap[target]
    b_c[room, LIGHT] = 1.0 / cap[room]   # lighting heat ends up in the room

    e_c = np.zeros((n_x, 3))
    e_c[room, 0] = k_win / cap[room]
    if n_wall:
        e_c[walls[-1], 0] = k_link / cap[walls[-1]]
        e_c[walls[-1], 1] = 0.04 / cap[walls[-1]]   # absorbed on the facade
    else:
        e_c[room, 0] += (k_link / 2.0) / cap[room]
    e_c[room, 1] = solar_gain / cap[room]
    e_c[room, 2] = 1.0 / cap[room]

    dt_h = step / 60.0
    a_d = expm(a_c * dt_h)
    conv = np.linalg.solve(a_c, a_d - np.eye(n_x))
    b_d = conv @ b_c
    e_d = conv @ e_c

    c_mat = np.zeros((2, n_x))
    c_mat[0, room] = 1.0
    d_mat = np.zeros((2, 3))
    d_mat[1, LIGHT] = LUX_PER_LIGHT
    f_mat = np.zeros((2, 3))
    f_mat[1, 1] = DAYLIGHT_LUX_PER_SOLAR

    if spec["system"] == "A":
        cop_heat, cop_cool = 3.0, 3.5
    else:
        cop_heat, cop_cool = 3.4, 3.4
    if reserve == "heating":
        res_idx, signs, cops = (HEAT,), (1,), (cop_heat,)
    elif reserve == "cooling":
        res_idx, signs, cops = (COOL,), (-1,), (cop_cool,)
    elif reserve == "both":
        res_idx, signs, cops = (HEAT, COOL), (1, -1), (cop_heat, cop_cool)
    else:
        raise ModelError(f"unknown reserve selection {reserve!r}")

    model = LtvBuildingModel(
        name=archetype_id,
        a=a_d, b_steps=b_d[None, :, :], e=e_d,
        c=c_mat, d_steps=d_mat[None, :, :], f=f_mat,
        u_min=np.zeros(3),
        u_max=np.array([RATED_HEAT, RATED_COOL, RATED_LIGHT]),
        reserve_actuator_index=res_idx, actuator_sign=signs, cop=cops,
        floor_area=FLOOR_AREA,
        input_electric_factor=np.array([1.0 / cop_heat, 1.0 / cop_cool, 1.0]),
        gains_level=spec["gains"])
    if model.spectral_radius() >= 1.0:
        raise ModelError("archetype discretization lost stability")
    model.validate_reserve_columns()
    return model


def make_bilinear_archetype(archetype_id: str, order: int = 4, step: int = 30,
                            reserve: str = "both",
                            blind_solar_coeff: float = 0.06,
                            blind_lux_coeff: float = 3.0) -> BilinearBuildingModel:
    """Archetype with a blind actuator whose effect is blind x solar.

    The blind input (0 closed .. 1 open) multiplies solar flux both in the
    room heat balance and in the daylight illuminance; both are uv products
    that fold exactly into B_t / D_t once the solar trace is fixed.
    """
    base = make_archetype(archetype_id, order=order, step=step, reserve=reserve)
    n_u = base.n_u + 1
    blind = n_u - 1
    b = np.concatenate([base.b_steps, np.zeros((1, base.n_x, 1))], axis=2)
    d = np.concatenate([base.d_steps, np.zeros((1, base.n_y, 1))], axis=2)
    grown = replace(
        base,
        b_steps=b, d_steps=d,
        u_min=np.concatenate([base.u_min, [0.0]]),
        u_max=np.concatenate([base.u_max, [1.0]]),
        input_electric_factor=np.concatenate([base.input_electric_factor,
                                              [0.0]]))
    room = 0
    dt_h = step / 60.0
    uv = (
        BilinearTerm("state", room, blind, "disturbance", 1,
                     blind_solar_coeff * dt_h / 18.0),
        BilinearTerm("output", 1, blind, "disturbance", 1, blind_lux_coeff),
    )
    return BilinearBuildingModel(base=grown, uv_terms=uv)


# ---------------------------------------------------------------------------
# SLP linearization
# ---------------------------------------------------------------------------

def slp_linearize(model: BilinearBuildingModel, v_trace: DisturbanceTrace,
                  x_traj: np.ndarray, u_traj: np.ndarray,
                  n_steps: int | None = None) -> LtvBuildingModel:
    """Fold uv products at the fixed disturbances and linearize xu products
    about the given state trajectory, yielding per-step B_t / D_t.

    With empty term lists the base model is returned unchanged.
    """
    base = model.base
    if not model.xu_terms and not model.uv_terms:
        return base
    n = n_steps if n_steps is not None else len(v_trace)
    if len(v_trace) < n or len(x_traj) < n:
        raise ModelError("trajectories shorter than the horizon")
    if u_traj is not None and len(u_traj) < n:
        raise ModelError("input trajectory shorter than the horizon")
    b = np.repeat(base.b_steps[:1], n, axis=0).copy()
    d = np.repeat(base.d_steps[:1], n, axis=0).copy()
    for t in range(n):
        for term in model.uv_terms:
            tgt = b if term.equation == "state" else d
            tgt[t, term.row, term.input] += term.coeff * v_trace.v[t, term.partner]
        for term in model.xu_terms:
            tgt = b if term.equation == "state" else d
            tgt[t, term.row, term.input] += term.coeff * x_traj[t, term.partner]
    return replace(base, b_steps=b, d_steps=d)


@dataclass
class SlpResult:
    model: LtvBuildingModel
    solution: object
    converged: bool
    iterations: int
    trajectory_change: float


def solve_slp(model: BilinearBuildingModel, problem, v_trace: DisturbanceTrace,
              x0: np.ndarray, n_steps: int, tol: float = 1e-4,
              max_iter: int = 20) -> SlpResult:
    """Iterate linearize -> solve until the room-temperature trajectory
    settles.  ``problem.solve(ltv)`` must return an object with ``x_traj``
    (n_steps+1, n_x) and ``u_traj`` (n_steps, n_u).

    Inner infeasibility propagates; hitting ``max_iter`` reports
    ``converged=False`` rather than failing silently.
    """
    if max_iter < 1:
        raise ModelError("max_iter must be at least 1")
    x_traj = np.tile(np.asarray(x0, dtype=float), (n_steps + 1, 1))
    u_traj = np.tile(model.base.u_min, (n_steps, 1))
    change = np.inf
    purely_linear = not model.xu_terms
    sol = None
    ltv = None
    for it in range(1, max_iter + 1):
        ltv = slp_linearize(model, v_trace, x_traj, u_traj, n_steps=n_steps)
        sol = problem.solve(ltv)
        new_x = np.asarray(sol.x_traj, dtype=float)
        scale = np.abs(x_traj[:, 0]).max(initial=1.0)
        change = float(np.abs(new_x[:, 0] - x_traj[:len(new_x), 0]).max() / scale)
        x_traj, u_traj = new_x, np.asarray(sol.u_traj, dtype=float)
        if purely_linear or change < tol:
            return SlpResult(model=ltv, solution=sol, converged=True,
                             iterations=it, trajectory_change=change)
    return SlpResult(model=ltv, solution=sol, converged=False,
                     iterations=max_iter, trajectory_change=change)


# ---------------------------------------------------------------------------
# simulation and stacking
# ---------------------------------------------------------------------------

def simulate(model: LtvBuildingModel, x0, trace: DisturbanceTrace, u, du=None):
    """Step Eq.-by-step simulation; returns (states, outputs).

    ``states`` has n+1 rows (x0 first); ``outputs[t]`` is the end-of-slot
    output C x[t+1] + D_t u[t] + F v[t].
    """
    u = np.asarray(u, dtype=float)
    n = u.shape[0]
    if len(trace) < n:
        raise ModelError("trace too short")
    if du is None:
        du = np.zeros((n, model.n_r))
    du = np.asarray(du, dtype=float)
    x = np.zeros((n + 1, model.n_x))
    x[0] = np.asarray(x0, dtype=float)
    y = np.zeros((n, model.n_y))
    r_mat = model.reserve_matrix()
    for t in range(n):
        x[t + 1] = (model.a @ x[t] + model.b(t) @ u[t]
                    + model.e @ trace.v[t] + r_mat @ du[t])
        y[t] = model.c @ x[t + 1] + model.d(t) @ u[t] + model.f @ trace.v[t]
    return x, y


@dataclass(frozen=True)
class StackKernel:
    """Horizon-invariant part of a building stack (reusable across steps
    for time-invariant models)."""

    g_p: np.ndarray   # (N*n_y, N*n_u)
    s_p: np.ndarray   # (N*n_y, N*n_r)
    n_steps: int


def build_stack_kernel(model: LtvBuildingModel, n_steps: int) -> StackKernel:
    n_y, n_u, n_r, n_x = model.n_y, model.n_u, model.n_r, model.n_x
    g_p = np.zeros((n_steps * n_y, n_steps * n_u))
    s_p = np.zeros((n_steps * n_y, n_steps * n_r))
    r_mat = model.reserve_matrix()
    b_all = np.stack([model.b(t) for t in range(n_steps)])   # (N, n_x, n_u)
    ca = model.c.copy()                                      # C A^k as k grows
    for offset in range(n_steps):
        # block rows t = offset + s, block cols s
        gb = np.einsum("yx,sxu->syu", ca, b_all[:n_steps - offset])
        sb = ca @ r_mat
        for s in range(n_steps - offset):
            t = s + offset
            g_p[t * n_y:(t + 1) * n_y, s * n_u:(s + 1) * n_u] = gb[s]
            s_p[t * n_y:(t + 1) * n_y, s * n_r:(s + 1) * n_r] = sb
        ca = ca @ model.a
    for t in range(n_steps):
        g_p[t * n_y:(t + 1) * n_y, t * n_u:(t + 1) * n_u] += model.d(t)
    return StackKernel(g_p=g_p, s_p=s_p, n_steps=n_steps)


@dataclass(frozen=True)
class StackedSystem:
    """Constraints G u + S du <= Q over the horizon for one or more buildings.

    Row metadata: ``row_kind`` (output-upper / input-upper / output-lower /
    input-lower), ``row_building``, ``row_step``.  Column metadata ties u and
    du entries to (building, step, input/slot).
    """

    g: np.ndarray
    s: np.ndarray
    q: np.ndarray
    n_steps: int
    building_ids: tuple[int, ...]
    row_kind: np.ndarray
    row_building: np.ndarray
    row_step: np.ndarray
    row_index: np.ndarray     # output index for output rows, input index else
    u_building: np.ndarray
    u_step: np.ndarray
    u_input: np.ndarray
    du_building: np.ndarray
    du_step: np.ndarray
    du_slot: np.ndarray
    models: tuple[LtvBuildingModel, ...] = field(compare=False)

    @property
    def n_rows(self) -> int:
        return self.g.shape[0]

    @property
    def dim_u(self) -> int:
        return self.g.shape[1]

    @property
    def dim_du(self) -> int:
        return self.s.shape[1]


def stack_building(model: LtvBuildingModel, x0, trace: DisturbanceTrace,
                   n_steps: int, building_id: int = 0,
                   kernel: StackKernel | None = None) -> StackedSystem:
    """Stack one building's comfort and input constraints over the horizon."""
    if len(trace) < n_steps:
        raise ModelError("trace too short for the horizon")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (model.n_x,):
        raise ModelError("initial state dimension mismatch")
    if kernel is None or kernel.n_steps != n_steps:
        kernel = build_stack_kernel(model, n_steps)
    n_y, n_u, n_r = model.n_y, model.n_u, model.n_r
    # zero-input response: q_p[t] = C x[t+1] + F v[t] with u = du = 0
    q_p = np.zeros(n_steps * n_y)
    x = x0
    for t in range(n_steps):
        x = model.a @ x + model.e @ trace.v[t]
        q_p[t * n_y:(t + 1) * n_y] = model.c @ x + model.f @ trace.v[t]

    h_block = np.kron(np.eye(n_steps), model.h_map)
    eye_u = np.eye(n_steps * n_u)
    g = np.vstack([kernel.g_p, eye_u, -kernel.g_p, -eye_u])
    s = np.vstack([kernel.s_p, h_block, -kernel.s_p, -h_block])
    y_max = trace.y_max[:n_steps].reshape(-1)
    y_min = trace.y_min[:n_steps].reshape(-1)
    u_max = np.tile(model.u_max, n_steps)
    u_min = np.tile(model.u_min, n_steps)
    q = np.concatenate([y_max - q_p, u_max, q_p - y_min, -u_min])

    steps_y = np.repeat(np.arange(n_steps), n_y)
    steps_u = np.repeat(np.arange(n_steps), n_u)
    idx_y = np.tile(np.arange(n_y), n_steps)
    idx_u = np.tile(np.arange(n_u), n_steps)
    row_kind = np.concatenate([
        np.full(n_steps * n_y, ROW_OUTPUT_UPPER, dtype=object),
        np.full(n_steps * n_u, ROW_INPUT_UPPER, dtype=object),
        np.full(n_steps * n_y, ROW_OUTPUT_LOWER, dtype=object),
        np.full(n_steps * n_u, ROW_INPUT_LOWER, dtype=object)])
    row_step = np.concatenate([steps_y, steps_u, steps_y, steps_u])
    row_index = np.concatenate([idx_y, idx_u, idx_y, idx_u])
    row_building = np.full(row_step.shape, building_id, dtype=int)
    return StackedSystem(
        g=g, s=s, q=q, n_steps=n_steps, building_ids=(building_id,),
        row_kind=row_kind, row_building=row_building, row_step=row_step,
        row_index=row_index,
        u_building=np.full(n_steps * n_u, building_id, dtype=int),
        u_step=steps_u, u_input=np.tile(np.arange(n_u), n_steps),
        du_building=np.full(n_steps * n_r, building_id, dtype=int),
        du_step=np.repeat(np.arange(n_steps), n_r),
        du_slot=np.tile(np.arange(n_r), n_steps),
        models=(model,))


def stack_aggregation(systems: list[StackedSystem]) -> StackedSystem:
    """Block-diagonal aggregation of per-building stacks."""
    if not systems:
        raise ModelError("need at least one system")
    if len(systems) == 1:
        return systems[0]
    n = systems[0].n_steps
    if any(s.n_steps != n for s in systems):
        raise ModelError("all systems must share the horizon")
    ids = tuple(b for s in systems for b in s.building_ids)
    if len(set(ids)) != len(ids):
        raise ModelError("building ids must be distinct across systems")
    m_rows = sum(s.n_rows for s in systems)
    dim_u = sum(s.dim_u for s in systems)
    dim_du = sum(s.dim_du for s in systems)
    g = np.zeros((m_rows, dim_u))
    s_mat = np.zeros((m_rows, dim_du))
    r0 = c0 = cu0 = 0
    for sys_ in systems:
        g[r0:r0 + sys_.n_rows, cu0:cu0 + sys_.dim_u] = sys_.g
        s_mat[r0:r0 + sys_.n_rows, c0:c0 + sys_.dim_du] = sys_.s
        r0 += sys_.n_rows
        cu0 += sys_.dim_u
        c0 += sys_.dim_du
    cat = np.concatenate
    return StackedSystem(
        g=g, s=s_mat, q=cat([s.q for s in systems]), n_steps=n,
        building_ids=ids,
        row_kind=cat([s.row_kind for s in systems]),
        row_building=cat([s.row_building for s in systems]),
        row_step=cat([s.row_step for s in systems]),
        row_index=cat([s.row_index for s in systems]),
        u_building=cat([s.u_building for s in systems]),
        u_step=cat([s.u_step for s in systems]),
        u_input=cat([s.u_input for s in systems]),
        du_building=cat([s.du_building for s in systems]),
        du_step=cat([s.du_step for s in systems]),
        du_slot=cat([s.du_slot for s in systems]),
        models=tuple(m for s in systems for m in s.models))


# ---------------------------------------------------------------------------
# season traces and config IO
# ---------------------------------------------------------------------------

def make_season_trace(season: str, days: int, step_minutes: int = 30,
                      gains_level: str = "gh", start_weekday: int = 0,
                      lux_max: float = 1e5) -> DisturbanceTrace:
    """Deterministic synthetic weather/occupancy trace for one season.

    Working hours are 8-18 on weekdays with the tight comfort band
    ([21,24] C winter, [22,25] C summer); nights and weekends relax to
    [12,35] C.  Illuminance needs 500 lux while occupied.
    """
    if season not in ("winter", "summer"):
        raise ModelError("season must be 'winter' or 'summer'")
    steps_day = 24 * 60 // step_minutes
    n = days * steps_day
    t = np.arange(n)
    hour = (t % steps_day) * step_minutes / 60.0
    weekday = ((t // steps_day) + start_weekday) % 7
    workday = weekday < 5
    occupied = workday & (hour >= 8) & (hour < 18)

    if season == "winter":
        amb = 4.0 + 3.5 * np.sin(2 * np.pi * (hour - 9.0) / 24.0)
        solar_peak = 180.0
        band = (21.0, 24.0)
    else:
        amb = 19.0 + 5.0 * np.sin(2 * np.pi * (hour - 9.0) / 24.0)
        solar_peak = 320.0
        band = (22.0, 25.0)
    solar = solar_peak * np.clip(np.sin(np.pi * (hour - 6.0) / 12.0), 0.0, None)
    g_hi = 20.0 if gains_level == "gh" else 10.0
    gains = np.where(occupied, g_hi, 2.0)

    v = np.stack([amb, solar, gains], axis=1)
    y_min = np.zeros((n, 2))
    y_max = np.zeros((n, 2))
    y_min[:, 0] = np.where(occupied, band[0], 12.0)
    y_max[:, 0] = np.where(occupied, band[1], 35.0)
    y_min[:, 1] = np.where(occupied, 500.0, 0.0)
    y_max[:, 1] = lux_max
    return DisturbanceTrace(v=v, occupied=occupied, y_min=y_min, y_max=y_max,
                            step_minutes=step_minutes)


def model_to_config(model: LtvBuildingModel) -> dict:
    return {
        "name": model.name,
        "a": model.a.tolist(),
        "b_steps": model.b_steps.tolist(),
        "e": model.e.tolist(),
        "c": model.c.tolist(),
        "d_steps": model.d_steps.tolist(),
        "f": model.f.tolist(),
        "u_min": model.u_min.tolist(),
        "u_max": model.u_max.tolist(),
        "reserve_actuator_index": list(model.reserve_actuator_index),
        "actuator_sign": list(model.actuator_sign),
        "cop": list(model.cop),
        "floor_area": model.floor_area,
        "input_electric_factor": model.input_electric_factor.tolist(),
        "gains_level": model.gains_level,
    }


def model_from_config(cfg: dict) -> LtvBuildingModel:
    """Load a model from keyed scalars and arrays; the shorthand
    ``{"archetype": "A1", "order": 4, "step": 30, "reserve": ...}`` builds the
    corresponding archetype."""
    if "archetype" in cfg:
        return make_archetype(cfg["archetype"], order=cfg.get("order", 4),
                              step=cfg.get("step", 30),
                              reserve=cfg.get("reserve", "both"))
    return LtvBuildingModel(
        name=cfg.get("name", "custom"),
        a=np.array(cfg["a"], dtype=float),
        b_steps=np.array(cfg["b_steps"], dtype=float),
        e=np.array(cfg["e"], dtype=float),
        c=np.array(cfg["c"], dtype=float),
        d_steps=np.array(cfg["d_steps"], dtype=float),
        f=np.array(cfg["f"], dtype=float),
        u_min=np.array(cfg["u_min"], dtype=float),
        u_max=np.array(cfg["u_max"], dtype=float),
        reserve_actuator_index=tuple(cfg["reserve_actuator_index"]),
        actuator_sign=tuple(cfg["actuator_sign"]),
        cop=tuple(cfg["cop"]),
        floor_area=float(cfg["floor_area"]),
        input_electric_factor=np.array(cfg["input_electric_factor"], dtype=float),
        gains_level=cfg.get("gains_level", "gh"))


def model_config_json(model: LtvBuildingModel) -> str:
    return json.dumps(model_to_config(model), indent=1)
