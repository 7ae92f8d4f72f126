"""Scenario orchestration: closed-loop runs, sweeps, and reports.

A scenario couples an aggregation of archetype buildings with a season
trace, a price pair, a reserve product, and a realized request feed.  The
closed loop commits capacities at each simulated midnight from a two-day
lookahead (only the first day binds), re-optimizes each building's baseline
every half hour against the committed capacities, and dispatches the
realized per-slot request, advancing the true models.  A no-reserve twin
run on identical inputs provides the consumption comparison.

All randomness flows from the master seed through named child streams, so
identical configurations render byte-identical reports.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import dispatch as dsp
from . import mpc
from . import scheduling as sch
from . import thermal as th
from . import uncertainty as un


class ScenarioError(ValueError):
    pass


DEFAULT_TARIFF = 0.1465  # currency per electric kWh, flat retail default


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete description of one runnable scenario."""

    buildings: tuple[tuple[str, int], ...] = (("A1", 1), ("A2", 1), ("A3", 1),
                                              ("B1", 1), ("B2", 1), ("B3", 1))
    season: str = "winter"
    n1: int = 96
    n2: int = 48
    step_minutes: int = 30
    uncertainty: str = "PEC"          # PC | PEC
    eps: float = 0.3
    t_hours: float = 2.0
    granularity: str = "daily"        # daily | hourly | per_step
    symmetric: bool = True
    aggregate_products: bool = False  # couple buildings through the product
    price_profile: str = "flat"       # flat | two_tier
    tariff: float = DEFAULT_TARIFF
    ratio: float = 1.1                # capacity payment over tariff (k/c)
    signal_source: str = "synthetic"  # synthetic | file
    signal_seed: int = 2024
    signal_path: str | None = None
    days: int = 7
    master_seed: int = 0
    model_order: int = 4
    comfort: str = "standard"         # standard | relaxed (wide bands)

    def __post_init__(self):
        if self.season not in ("winter", "summer"):
            raise ScenarioError("season must be winter or summer")
        if self.uncertainty not in ("PC", "PEC"):
            raise ScenarioError("uncertainty kind must be PC or PEC")
        if self.n1 < self.n2:
            raise ScenarioError("the scheduling horizon must cover the MPC one")
        if not self.symmetric and self.uncertainty != "PC":
            raise ScenarioError("asymmetric products pair with PC only")
        if self.uncertainty == "PEC":
            steps = self.t_hours * 60.0 / self.step_minutes
            if abs(steps - round(steps)) > 1e-9:
                raise ScenarioError("averaging period must be whole steps")
            if not (0.0 < self.eps <= 1.0):
                raise ScenarioError("bias coefficient must lie in (0, 1]")
        spd = 24 * 60 // self.step_minutes
        if self.granularity == "hourly" and spd % 24:
            raise ScenarioError("hourly products need whole steps per hour")
        if self.n1 % spd:
            raise ScenarioError("the scheduling horizon must cover whole days")

    @property
    def steps_per_day(self) -> int:
        return 24 * 60 // self.step_minutes

    @property
    def window_steps(self) -> int:
        return int(round(self.t_hours * 60.0 / self.step_minutes))

    @property
    def step_hours(self) -> float:
        return self.step_minutes / 60.0

    def to_dict(self) -> dict:
        return {
            "buildings": [list(b) for b in self.buildings],
            "season": self.season, "n1": self.n1, "n2": self.n2,
            "step_minutes": self.step_minutes,
            "uncertainty": self.uncertainty, "eps": self.eps,
            "t_hours": self.t_hours, "granularity": self.granularity,
            "symmetric": self.symmetric,
            "aggregate_products": self.aggregate_products,
            "price_profile": self.price_profile, "tariff": self.tariff,
            "ratio": self.ratio, "signal_source": self.signal_source,
            "signal_seed": self.signal_seed, "signal_path": self.signal_path,
            "days": self.days, "master_seed": self.master_seed,
            "model_order": self.model_order, "comfort": self.comfort,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        data = dict(data)
        if "buildings" in data:
            data["buildings"] = tuple(tuple(b) for b in data["buildings"])
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        return cls.from_dict(json.loads(text))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def child_seed(master_seed: int, stream: str) -> int:
    """Named child stream of the master seed (documented splitting rule:
    SeedSequence over the master seed and a stable digest of the name)."""
    digest = int.from_bytes(hashlib.sha256(stream.encode()).digest()[:8], "big")
    h = np.random.SeedSequence([master_seed, digest])
    return int(h.generate_state(1)[0])


# ---------------------------------------------------------------------------
# scenario assembly
# ---------------------------------------------------------------------------

def _reserve_mode(config: ScenarioConfig) -> str:
    return "heating" if config.season == "winter" else "cooling"


def build_fleet(config: ScenarioConfig):
    """Models, initial states, and traces for every building instance."""
    models = []
    ids = []
    bid = 0
    for archetype_id, count in config.buildings:
        for _ in range(count):
            models.append(th.make_archetype(
                archetype_id, order=config.model_order,
                step=config.step_minutes, reserve=_reserve_mode(config)))
            ids.append(bid)
            bid += 1
    x_fill = 21.5 if config.season == "winter" else 23.0
    states = {}
    for k, i in enumerate(ids):
        x0 = np.full(models[k].n_x, x_fill)
        if models[k].name.startswith("B") and config.season == "summer":
            # an actuated slab starts chilled, as steady TABS cooling
            # operation would leave it overnight
            x0[-1] -= 6.0
        states[i] = x0
    del x0
    trace_days = config.days + max(2, config.n1 // config.steps_per_day)
    traces = {}
    for k, i in enumerate(ids):
        tr = th.make_season_trace(config.season, days=trace_days,
                                  step_minutes=config.step_minutes,
                                  gains_level=models[k].gains_level)
        if config.comfort == "relaxed":
            y_min = tr.y_min.copy()
            y_max = tr.y_max.copy()
            y_min[:, 0] = 10.0
            y_max[:, 0] = 35.0
            tr = th.DisturbanceTrace(v=tr.v, occupied=tr.occupied,
                                     y_min=y_min, y_max=y_max,
                                     step_minutes=tr.step_minutes)
        traces[i] = tr
    return models, ids, states, traces


def tariff_profile(config: ScenarioConfig, n_steps: int,
                   start_step: int = 0) -> np.ndarray:
    """Per-step tariff; the two-tier profile discounts nights."""
    base = np.full(n_steps, config.tariff)
    if config.price_profile == "two_tier":
        hours = (((np.arange(n_steps) + start_step) % config.steps_per_day)
                 * config.step_minutes / 60.0)
        base = np.where((hours >= 7.0) & (hours < 21.0),
                        1.15 * config.tariff, 0.70 * config.tariff)
    return base


def build_feed(config: ScenarioConfig, signal_text: str | None = None):
    """Realized per-slot request feed plus the underlying fine signal.

    The synthetic source generates a lead-in that is discarded after
    filtering (filter warm-up); PEC scenarios receive the fast component
    projected onto the admissible windows, PC scenarios the raw slot means.
    """
    slot_seconds = config.step_minutes * 60.0
    lead_slots = 24
    n_slots = config.days * config.steps_per_day + lead_slots
    per_slot = int(slot_seconds / 10.0)
    if config.signal_source == "file":
        if signal_text is None:
            raise ScenarioError("file-based signal needs its contents")
        sig = dsp.signal_from_csv(signal_text)
    else:
        sig = dsp.generate_synthetic_signal(
            seed=child_seed(config.master_seed, f"signal-{config.signal_seed}"),
            n_samples=n_slots * per_slot,
            target_bias={2.0: 0.75})
    if config.uncertainty == "PEC":
        spec = dsp.design_filter(config.t_hours, sig.sample_period_s)
        dec = dsp.decompose(sig, spec)
        fast = dsp.SfcSignal(
            samples=dec.hf.samples[lead_slots * per_slot:],
            sample_period_s=sig.sample_period_s, origin="filtered-HF")
        feed = dsp.make_slot_feed(fast, slot_seconds, eps=config.eps,
                                  window_steps=config.window_steps)
    else:
        trimmed = dsp.SfcSignal(samples=sig.samples[lead_slots * per_slot:],
                                sample_period_s=sig.sample_period_s,
                                origin=sig.origin)
        feed = dsp.make_slot_feed(trimmed, slot_seconds)
    need = config.days * config.steps_per_day
    if len(feed) < need:
        raise ScenarioError("signal too short for the run")
    return dsp.SlotFeed(slot_w=feed.slot_w[:need],
                        fine=None if feed.fine is None else feed.fine[:need],
                        sample_period_s=feed.sample_period_s,
                        slot_seconds=feed.slot_seconds,
                        projection_clips=feed.projection_clips), sig


class AdversarialVertexFeed:
    """Greedy worst-vertex request: at each window start it measures how the
    fleet sits inside its comfort band, picks the signal direction that
    pushes room temperatures toward the nearer bound, and front-loads the
    window's admissible budget in that direction."""

    def __init__(self, config: ScenarioConfig, traces):
        self.config = config
        self.traces = traces
        n = config.days * config.steps_per_day
        self.slot_w = np.zeros(n)
        if config.uncertainty == "PEC":
            self.window = config.window_steps
            self.budget = config.eps * config.window_steps
        else:
            self.window = config.steps_per_day
            self.budget = float(self.window)
        self.slot_seconds = config.step_minutes * 60.0
        self.sample_period_s = self.slot_seconds
        self.fine = None
        self.projection_clips = 0

    def on_window_start(self, t: int, buildings, schedule) -> None:
        lean = 0.0
        for b in buildings:
            tr = self.traces[b.building_id]
            mid = 0.5 * (tr.y_min[t, 0] + tr.y_max[t, 0])
            room = float(b.model.c[0] @ b.x)
            # +1 reserve signal adds heat for heating actuators, removes it
            # for cooling ones
            response = 1.0 if b.model.actuator_sign[0] > 0 else -1.0
            lean += (room - mid) * response
        direction = 1.0 if lean >= 0.0 else -1.0
        remaining = self.budget
        for k in range(t, min(t + self.window, len(self.slot_w))):
            mag = min(1.0, remaining)
            self.slot_w[k] = direction * mag
            remaining -= mag
            if remaining <= 0:
                break

    def w(self, t: int) -> float:
        return float(self.slot_w[t])


# ---------------------------------------------------------------------------
# closed loop
# ---------------------------------------------------------------------------

@dataclass
class RunReport:
    config: ScenarioConfig
    daily_capacity_kw: np.ndarray          # (days,)
    allocation_kw: np.ndarray              # (days, buildings)
    capacity_by_step_kw: np.ndarray        # (days*spd,)
    energy_kwh: float
    baseline_energy_kwh: float
    comfort_violations: int
    comfort_violations_occupied: int
    input_violations: int
    projection_clips: int
    lv1_objectives: np.ndarray             # (days,)
    log: mpc.RunLog | None = field(default=None, repr=False)
    schedule_csv: str = ""
    day_start_states: list = field(default_factory=list, repr=False)
    committed: list = field(default_factory=list, repr=False)

    @property
    def average_capacity_kw(self) -> float:
        return float(self.daily_capacity_kw.mean())

    @property
    def consumption_delta_pct(self) -> float:
        if self.baseline_energy_kwh <= 0:
            return 0.0
        return 100.0 * (self.energy_kwh - self.baseline_energy_kwh) \
            / self.baseline_energy_kwh

    @property
    def violations_total(self) -> int:
        return self.comfort_violations + self.input_violations

    def summary_csv(self) -> str:
        out = io.StringIO()
        out.write("field,value\n")
        out.write(f"season,{self.config.season}\n")
        out.write(f"uncertainty,{self.config.uncertainty}\n")
        out.write(f"days,{self.config.days}\n")
        out.write(f"average_capacity_kw,{self.average_capacity_kw:.10g}\n")
        for d, cap in enumerate(self.daily_capacity_kw):
            out.write(f"day{d}_capacity_kw,{cap:.10g}\n")
        out.write(f"energy_kwh,{self.energy_kwh:.10g}\n")
        out.write(f"baseline_energy_kwh,{self.baseline_energy_kwh:.10g}\n")
        out.write(f"consumption_delta_pct,{self.consumption_delta_pct:.10g}\n")
        out.write(f"comfort_violations,{self.comfort_violations}\n")
        out.write("comfort_violations_occupied,"
                  f"{self.comfort_violations_occupied}\n")
        out.write(f"input_violations,{self.input_violations}\n")
        out.write(f"projection_clips,{self.projection_clips}\n")
        return out.getvalue()

    def allocation_csv(self) -> str:
        out = io.StringIO()
        nb = self.allocation_kw.shape[1]
        out.write("day," + ",".join(f"building{b}" for b in range(nb))
                  + ",total\n")
        for d in range(self.allocation_kw.shape[0]):
            row = ",".join(f"{v:.8g}" for v in self.allocation_kw[d])
            out.write(f"{d},{row},{self.allocation_kw[d].sum():.8g}\n")
        return out.getvalue()

    def render(self) -> str:
        """Canonical multi-section report used for byte-level comparisons."""
        parts = ["# summary", self.summary_csv(), "# allocation",
                 self.allocation_csv()]
        if self.log is not None:
            parts += ["# log", self.log.to_csv()]
        if self.schedule_csv:
            parts += ["# schedule_day0", self.schedule_csv]
        return "\n".join(parts)


def _solve_lv1(config: ScenarioConfig, models, ids, states, traces,
               day_start: int, uset_full):
    """One midnight scheduling pass; returns the committed-day schedule
    pieces per building plus diagnostics."""
    spd = config.steps_per_day
    tariff = tariff_profile(config, config.n1, start_step=day_start)
    per_building = not config.aggregate_products
    stacks = []
    for k, i in enumerate(ids):
        tr = traces[i].slice(day_start, config.n1)
        stacks.append(th.stack_building(models[k], states[i], tr, config.n1,
                                        building_id=i))

    empty_m = np.zeros((0, 0))

    def day_one_prices(stacked):
        # only the first day of the lookahead is committed and paid; the
        # tail stays robustly feasible with unpaid (hence zero) reserves
        prices = sch.build_prices(stacked, tariff, config.ratio,
                                  step_hours=config.step_hours)
        k = np.where(stacked.du_step < spd, prices.k, 0.0)
        return replace(prices, k=k)

    def solve_one(stacked):
        prices = day_one_prices(stacked)
        blocks = sch.product_blocks(stacked, config.granularity, spd)
        if config.uncertainty == "PC":
            if config.symmetric:
                try:
                    return sch.schedule_pc_signed(stacked, prices, empty_m,
                                                  blocks=blocks)
                except sch.SignStructureError:
                    return sch.schedule_pc_general(stacked, prices, empty_m,
                                                   blocks=blocks)
            return sch.schedule_pc_asymmetric(stacked, prices, empty_m,
                                              blocks=blocks)
        return sch.schedule_pec(stacked, prices, empty_m, uset_full,
                                method="cuts", return_duals=False,
                                blocks=blocks)

    if per_building:
        results = [solve_one(s) for s in stacks]
        agg = th.stack_aggregation(stacks) if len(stacks) > 1 else stacks[0]
        r_up = np.concatenate([r.schedule.r_up for r in results])
        r_dn = np.concatenate([r.schedule.r_down for r in results])
        schedule = sch.ReserveSchedule(
            n_steps=config.n1, r_up=r_up, r_down=r_dn,
            symmetric=config.symmetric,
            du_building=agg.du_building.copy(),
            du_step=agg.du_step.copy(), du_slot=agg.du_slot.copy(),
            electric_factor=sch.du_electric_factors(agg))
        objective = float(sum(r.objective for r in results))
        u_full = np.concatenate([r.u for r in results])
        result_holder = sch.Lv1Result(u=u_full, schedule=schedule,
                                      objective=objective,
                                      method=results[0].method)
        return result_holder, agg
    agg = th.stack_aggregation(stacks) if len(stacks) > 1 else stacks[0]
    m = sch.build_structure_matrix(agg, config.granularity, spd,
                                   block_diagonal=False)
    prices = day_one_prices(agg)
    if config.uncertainty == "PC":
        if config.symmetric:
            try:
                res = sch.schedule_pc_signed(agg, prices, m)
            except sch.SignStructureError:
                res = sch.schedule_pc_general(agg, prices, m)
        else:
            res = sch.schedule_pc_asymmetric(agg, prices, m)
    else:
        res = sch.schedule_pec(agg, prices, m, uset_full, method="auto",
                               return_duals=False)
    return res, agg


def _commit_day(schedule: sch.ReserveSchedule, spd: int) -> sch.ReserveSchedule:
    """First-day slice of a two-day schedule."""
    mask = schedule.du_step < spd
    return sch.ReserveSchedule(
        n_steps=spd, r_up=schedule.r_up[mask], r_down=schedule.r_down[mask],
        symmetric=schedule.symmetric,
        du_building=schedule.du_building[mask],
        du_step=schedule.du_step[mask], du_slot=schedule.du_slot[mask],
        electric_factor=schedule.electric_factor[mask])


def run_closed_loop(config: ScenarioConfig, feed=None,
                    signal_text: str | None = None,
                    with_baseline: bool = True,
                    keep_log: bool = True) -> RunReport:
    """Daily scheduling, half-hourly baselines, per-slot dispatch.

    ``feed`` overrides the configured signal source (any object with
    ``w(t)`` and optionally ``on_window_start``); the default builds the
    projected fast component of the synthetic signal.
    """
    spd = config.steps_per_day
    models, ids, states, traces = build_fleet(config)
    projection_clips = 0
    if feed is None:
        feed, _ = build_feed(config, signal_text)
        projection_clips = feed.projection_clips
    uset_full = None
    if config.uncertainty == "PEC":
        uset_full = un.build_pec(config.n1, eps=config.eps,
                                 window_steps=config.window_steps)

    runtime = [mpc.BuildingRuntime(building_id=i, model=models[k],
                                   x=states[i].copy())
               for k, i in enumerate(ids)]
    nb = len(runtime)
    daily_cap = np.zeros(config.days)
    allocation = np.zeros((config.days, nb))
    cap_by_step = np.zeros(config.days * spd)
    lv1_objs = np.zeros(config.days)
    logs = []
    comfort = comfort_occ = inputs = 0
    energy = 0.0
    schedule_csv = ""

    day_states = []
    committed_days = []
    for day in range(config.days):
        day_start = day * spd
        day_states.append({b.building_id: b.x.copy() for b in runtime})
        state_map = {b.building_id: b.x for b in runtime}
        lv1, agg = _solve_lv1(config, models, ids, state_map, traces,
                              day_start, uset_full)
        lv1_objs[day] = lv1.objective
        committed = _commit_day(lv1.schedule, spd)
        committed_days.append(committed)
        if day == 0:
            schedule_csv = sch.schedule_to_csv(lv1, agg)
        per_col = 0.5 * (committed.r_up + committed.r_down) \
            * committed.electric_factor
        np.add.at(cap_by_step[day_start:day_start + spd],
                  committed.du_step, per_col)
        daily_cap[day] = cap_by_step[day_start:day_start + spd].mean()
        for bi, b in enumerate(runtime):
            mask = committed.du_building == b.building_id
            allocation[day, bi] = float(
                (0.5 * (committed.r_up[mask] + committed.r_down[mask])
                 * committed.electric_factor[mask]).sum()) / spd

        day_feed = _DayFeedView(feed, day_start)
        day_traces = {i: traces[i].slice(day_start,
                                         spd + config.n2) for i in ids}
        tariff = tariff_profile(config, spd + config.n2, start_step=day_start)
        log = mpc.receding_horizon_run(
            runtime, committed, day_traces, day_feed, days=1, tariff=tariff,
            n2=config.n2, steps_per_day=spd,
            uncertainty_kind=config.uncertainty,
            eps=config.eps if config.uncertainty == "PEC" else None,
            window_steps=(config.window_steps
                          if config.uncertainty == "PEC" else None),
            symmetric=config.symmetric, step_hours=config.step_hours)
        comfort += log.comfort_violations
        comfort_occ += log.comfort_violations_occupied
        inputs += log.input_violations
        energy += float(log.electric_kw.sum()) * config.step_hours
        logs.append(log)

    full_log = _concat_logs(logs) if keep_log else None
    baseline_energy = 0.0
    if with_baseline:
        baseline_energy = run_baseline_energy(config, models, ids, states,
                                              traces)
    return RunReport(config=config, daily_capacity_kw=daily_cap,
                     allocation_kw=allocation, capacity_by_step_kw=cap_by_step,
                     energy_kwh=energy, baseline_energy_kwh=baseline_energy,
                     comfort_violations=comfort,
                     comfort_violations_occupied=comfort_occ,
                     input_violations=inputs,
                     projection_clips=projection_clips,
                     lv1_objectives=lv1_objs, log=full_log,
                     schedule_csv=schedule_csv,
                     day_start_states=day_states, committed=committed_days)


class _DayFeedView:
    """Offsets a run-long feed to a single day's local clock."""

    def __init__(self, feed, offset):
        self._feed = feed
        self._offset = offset

    def w(self, t: int) -> float:
        return self._feed.w(self._offset + t)

    def on_window_start(self, t, buildings, schedule):
        hook = getattr(self._feed, "on_window_start", None)
        if hook is not None:
            hook(self._offset + t, buildings, schedule)


def _concat_logs(logs) -> mpc.RunLog:
    first = logs[0]
    return mpc.RunLog(
        step_minutes=first.step_minutes, building_ids=first.building_ids,
        u=np.concatenate([x.u for x in logs]),
        du=np.concatenate([x.du for x in logs]),
        y=np.concatenate([x.y for x in logs]),
        w=np.concatenate([x.w for x in logs]),
        margin_min=np.concatenate([x.margin_min for x in logs]),
        electric_kw=np.concatenate([x.electric_kw for x in logs]),
        comfort_violations=sum(x.comfort_violations for x in logs),
        input_violations=sum(x.input_violations for x in logs),
        comfort_violations_occupied=sum(x.comfort_violations_occupied
                                        for x in logs),
        lv2_objective=sum(x.lv2_objective for x in logs))


def run_baseline_energy(config: ScenarioConfig, models, ids, states,
                        traces) -> float:
    """No-reserve energy-efficient MPC twin on identical inputs."""
    spd = config.steps_per_day
    runtime = [mpc.BuildingRuntime(building_id=i, model=models[k],
                                   x=states[i].copy())
               for k, i in enumerate(ids)]
    zero_sched = _zero_schedule(config, models, ids)
    feed = dsp.constant_feed(0.0, config.days * spd)
    tariff = tariff_profile(config, config.days * spd + config.n2)
    log = mpc.receding_horizon_run(
        runtime, zero_sched, traces, feed, days=config.days, tariff=tariff,
        n2=config.n2, steps_per_day=spd, uncertainty_kind="PC",
        symmetric=True, step_hours=config.step_hours)
    return float(log.electric_kw.sum()) * config.step_hours


def _zero_schedule(config, models, ids) -> sch.ReserveSchedule:
    n = config.days * config.steps_per_day
    cols = []
    for k, i in enumerate(ids):
        for t in range(n):
            for j in range(models[k].n_r):
                cols.append((i, t, j, models[k].floor_area
                             / (1000.0 * models[k].cop[j])))
    arr = np.array(cols)
    return sch.ReserveSchedule(
        n_steps=n, r_up=np.zeros(len(cols)), r_down=np.zeros(len(cols)),
        symmetric=True, du_building=arr[:, 0].astype(int),
        du_step=arr[:, 1].astype(int), du_slot=arr[:, 2].astype(int),
        electric_factor=arr[:, 3])


# ---------------------------------------------------------------------------
# sweeps and extrapolation
# ---------------------------------------------------------------------------

@dataclass
class MonteCarloStudy:
    n_runs: int
    comfort_violations: int
    input_violations: int
    worst_margin: float

    @property
    def ok(self) -> bool:
        return self.comfort_violations == 0 and self.input_violations == 0


def monte_carlo_day_study(config: ScenarioConfig, report: RunReport,
                          n_signals: int = 200,
                          seed_stream: str = "mc-study") -> MonteCarloStudy:
    """Replay single building-days of a finished run under freshly sampled
    admissible signals.

    Building dynamics are decoupled and the committed capacities are fixed
    per day, so replaying one building against a new admissible signal from
    its recorded day-start state exercises the full Lv2/Lv3 chain; the
    (building, day) pairs rotate round-robin so every combination is hit.
    """
    if not report.day_start_states:
        raise ScenarioError("the report carries no day-start states")
    spd = config.steps_per_day
    models, ids, _, traces = build_fleet(config)
    model_of = {i: models[k] for k, i in enumerate(ids)}
    if config.uncertainty == "PEC":
        day_set = un.build_pec(spd, eps=config.eps,
                               window_steps=config.window_steps)
    else:
        day_set = un.build_pc(spd)
    comfort = inputs = 0
    worst = -np.inf
    pairs = [(d, b) for d in range(config.days) for b in ids]
    for k in range(n_signals):
        day, bid = pairs[k % len(pairs)]
        w = un.sample_admissible(
            day_set, seed=child_seed(config.master_seed,
                                     f"{seed_stream}-{k}"), count=1)[0]
        feed = dsp.SlotFeed(slot_w=w, fine=None,
                            sample_period_s=config.step_minutes * 60.0,
                            slot_seconds=config.step_minutes * 60.0)
        day_start = day * spd
        runtime = [mpc.BuildingRuntime(
            building_id=bid, model=model_of[bid],
            x=report.day_start_states[day][bid].copy())]
        day_traces = {bid: traces[bid].slice(day_start, spd + config.n2)}
        tariff = tariff_profile(config, spd + config.n2, start_step=day_start)
        sched = report.committed[day]
        log = mpc.receding_horizon_run(
            runtime, sched, day_traces, feed, days=1, tariff=tariff,
            n2=config.n2, steps_per_day=spd,
            uncertainty_kind=config.uncertainty,
            eps=config.eps if config.uncertainty == "PEC" else None,
            window_steps=(config.window_steps
                          if config.uncertainty == "PEC" else None),
            symmetric=config.symmetric, step_hours=config.step_hours)
        comfort += log.comfort_violations
        inputs += log.input_violations
        worst = max(worst, float(-log.margin_min.min()))
    return MonteCarloStudy(n_runs=n_signals, comfort_violations=comfort,
                           input_violations=inputs, worst_margin=worst)


def schedule_once(config: ScenarioConfig) -> tuple[sch.Lv1Result, object]:
    """Single midnight Lv1 solve on fresh states (no simulation)."""
    models, ids, states, traces = build_fleet(config)
    uset = None
    if config.uncertainty == "PEC":
        uset = un.build_pec(config.n1, eps=config.eps,
                            window_steps=config.window_steps)
    return _solve_lv1(config, models, ids, states, traces, 0, uset)


def sweep_bid_curve(config: ScenarioConfig, ratios) -> dict:
    """Committed-day capacity per payment ratio, for PC and PEC."""
    ratios = list(ratios)
    if ratios != sorted(ratios):
        raise ScenarioError("ratios must be sorted ascending")
    spd = config.steps_per_day
    out = {"ratio": ratios, "pc_kw": [], "pec_kw": []}
    for ratio in ratios:
        for kind, key in (("PC", "pc_kw"), ("PEC", "pec_kw")):
            cfg = replace(config, ratio=ratio, uncertainty=kind)
            lv1, _ = schedule_once(cfg)
            committed = _commit_day(lv1.schedule, spd)
            out[key].append(committed.average_electric_kw())
    return out


def sweep_te_grid(config: ScenarioConfig, t_hours_list, eps_list) -> dict:
    """Committed-day capacity per (T, eps) cell, scheduling level only."""
    spd = config.steps_per_day
    grid = np.zeros((len(t_hours_list), len(eps_list)))
    for i, t_h in enumerate(t_hours_list):
        steps = t_h * 60.0 / config.step_minutes
        if abs(steps - round(steps)) > 1e-9:
            raise ScenarioError(f"T={t_h}h is not a whole number of steps")
        for j, eps in enumerate(eps_list):
            cfg = replace(config, uncertainty="PEC", eps=float(eps),
                          t_hours=float(t_h))
            lv1, _ = schedule_once(cfg)
            committed = _commit_day(lv1.schedule, spd)
            grid[i, j] = committed.average_electric_kw()
    return {"t_hours": list(t_hours_list), "eps": list(eps_list),
            "capacity_kw": grid}


def grid_csv(result: dict) -> str:
    out = io.StringIO()
    out.write("t_hours," + ",".join(f"eps={e:g}" for e in result["eps"]) + "\n")
    for i, t_h in enumerate(result["t_hours"]):
        row = ",".join(f"{v:.8g}" for v in result["capacity_kw"][i])
        out.write(f"{t_h:g},{row}\n")
    return out.getvalue()


def bid_curve_csv(result: dict) -> str:
    out = io.StringIO()
    out.write("ratio,pc_kw,pec_kw\n")
    for r, pc, pec in zip(result["ratio"], result["pc_kw"], result["pec_kw"]):
        out.write(f"{r:g},{pc:.8g},{pec:.8g}\n")
    return out.getvalue()


def bundled_scenarios() -> dict[str, ScenarioConfig]:
    """Named reference scenarios used by the CLI, tests, and golden files."""
    winter = ScenarioConfig(season="winter", uncertainty="PEC", eps=0.3,
                            t_hours=2.0, ratio=1.1, days=7, master_seed=7,
                            signal_seed=2012)
    summer = replace(winter, season="summer")
    two_b = replace(winter, buildings=(("B2", 1), ("B3", 1)), days=7)
    threshold = ScenarioConfig(
        season="winter", uncertainty="PC", buildings=(("A1", 1), ("B2", 1)),
        comfort="relaxed", days=1, ratio=1.1, master_seed=7)
    sweep = replace(two_b, days=1)
    return {"winter": winter, "summer": summer, "winter_2b": two_b,
            "threshold": threshold, "sweep": sweep}


def extrapolate_fleet(average_capacity_kw: float, aggregation_size: int,
                      target_mw: float) -> int:
    """Linear scale-up to the target bid size (a deliberately rough figure:
    larger fleets allocate more flexibly, so this overestimates)."""
    target_kw = target_mw * 1000.0
    if target_kw <= 0:
        return 0
    if average_capacity_kw <= 0:
        raise ScenarioError("cannot extrapolate from zero capacity")
    return math.ceil(target_kw / average_capacity_kw * aggregation_size)
