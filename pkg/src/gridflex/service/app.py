"""FastAPI service wrapping the scheduling and simulation core.

One aggregator process serves schedule/simulate/sweep/analyze requests;
the CLI is a thin client of these endpoints.  All endpoints are pure
functions of their request body, so identical requests return identical
payloads.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from .. import dispatch as dsp
from .. import harness as hz
from .. import scheduling as sch
from ..mpc import MpcError
from ..thermal import ModelError
from ..uncertainty import UncertaintyError
from .schemas import (AnalyzeSignalRequest, AnalyzeSignalResponse,
                      BidSweepRequest, BidSweepResponse, FilterSignalRequest,
                      FilterSignalResponse, ScheduleRequest, ScheduleResponse,
                      SimulateRequest, SimulateResponse, TeGridRequest,
                      TeGridResponse)

app = FastAPI(title="gridflex aggregator service", version=__version__)

_DOMAIN_ERRORS = (hz.ScenarioError, sch.SchedulingError, ModelError,
                  UncertaintyError, dsp.SignalError, MpcError, ValueError)


def _guard(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except sch.InfeasibleScheduleError as exc:
        raise HTTPException(status_code=409, detail=str(exc)) from exc
    except _DOMAIN_ERRORS as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.post("/schedule", response_model=ScheduleResponse)
def schedule(req: ScheduleRequest) -> ScheduleResponse:
    cfg = _guard(req.scenario.to_config)
    lv1, stacked = _guard(hz.schedule_once, cfg)
    committed = hz._commit_day(lv1.schedule, cfg.steps_per_day)
    oracle_ok = None
    oracle_margin = None
    if req.oracle:
        from .. import uncertainty as un

        uset = None
        if cfg.uncertainty == "PEC":
            uset = un.build_pec(cfg.n1, eps=cfg.eps,
                                window_steps=cfg.window_steps)
        mode = "oracle" if cfg.n1 <= 8 else "monte_carlo"
        rep = _guard(sch.robust_feasibility_check, stacked, lv1.u,
                     lv1.schedule, uset, mode, cfg.master_seed)
        oracle_ok = rep.ok
        oracle_margin = rep.worst_margin
    return ScheduleResponse(
        objective=lv1.objective, method=lv1.method,
        average_capacity_kw=lv1.schedule.average_electric_kw(),
        committed_capacity_kw=committed.average_electric_kw(),
        schedule_csv=sch.schedule_to_csv(lv1, stacked),
        summary_csv=sch.schedule_summary_csv(lv1, cfg.steps_per_day),
        oracle_ok=oracle_ok, oracle_worst_margin=oracle_margin)


@app.post("/simulate", response_model=SimulateResponse)
def simulate(req: SimulateRequest) -> SimulateResponse:
    cfg = _guard(req.scenario.to_config)
    report = _guard(hz.run_closed_loop, cfg, None, req.signal_csv,
                    True, req.include_log)
    mc_runs = mc_comf = mc_inp = None
    n_mc = req.mc_signals if req.mc_signals else (200 if req.oracle else 0)
    if n_mc:
        study = _guard(hz.monte_carlo_day_study, cfg, report, n_mc)
        mc_runs = study.n_runs
        mc_comf = study.comfort_violations
        mc_inp = study.input_violations
    return SimulateResponse(
        daily_capacity_kw=[float(v) for v in report.daily_capacity_kw],
        average_capacity_kw=report.average_capacity_kw,
        energy_kwh=report.energy_kwh,
        baseline_energy_kwh=report.baseline_energy_kwh,
        consumption_delta_pct=report.consumption_delta_pct,
        comfort_violations=report.comfort_violations,
        comfort_violations_occupied=report.comfort_violations_occupied,
        input_violations=report.input_violations,
        projection_clips=report.projection_clips,
        summary_csv=report.summary_csv(),
        allocation_csv=report.allocation_csv(),
        schedule_csv=report.schedule_csv,
        log_csv=report.log.to_csv() if req.include_log and report.log else None,
        report_text=report.render(),
        mc_runs=mc_runs, mc_comfort_violations=mc_comf,
        mc_input_violations=mc_inp)


@app.post("/sweep/bid", response_model=BidSweepResponse)
def sweep_bid(req: BidSweepRequest) -> BidSweepResponse:
    cfg = _guard(req.scenario.to_config)
    table = _guard(hz.sweep_bid_curve, cfg, req.ratios)
    return BidSweepResponse(ratio=table["ratio"], pc_kw=table["pc_kw"],
                            pec_kw=table["pec_kw"],
                            csv=hz.bid_curve_csv(table))


@app.post("/sweep/te", response_model=TeGridResponse)
def sweep_te(req: TeGridRequest) -> TeGridResponse:
    cfg = _guard(req.scenario.to_config)
    table = _guard(hz.sweep_te_grid, cfg, req.t_hours, req.eps)
    return TeGridResponse(t_hours=table["t_hours"], eps=table["eps"],
                          capacity_kw=table["capacity_kw"].tolist(),
                          csv=hz.grid_csv(table))


def _load_signal(signal_csv, seed, n_days, sample_period_s):
    if signal_csv:
        return dsp.signal_from_csv(signal_csv)
    n = int(round(n_days * 24 * 3600 / sample_period_s))
    return dsp.generate_synthetic_signal(seed=seed, n_samples=n,
                                         sample_period_s=sample_period_s,
                                         target_bias={2.0: 0.75})


@app.post("/signal/analyze", response_model=AnalyzeSignalResponse)
def analyze_signal(req: AnalyzeSignalRequest) -> AnalyzeSignalResponse:
    sig = _guard(_load_signal, req.signal_csv, req.seed, req.n_days,
                 req.sample_period_s)
    table = _guard(dsp.bias_table, sig, req.t_hours, req.filter_order,
                   req.ripple_db)
    rows = [{"t_hours": t_h, "signal_bias": v["signal"], "hf_bias": v["hf"]}
            for t_h, v in table.items()]
    lines = ["t_hours,signal_bias,hf_bias"]
    for row in rows:
        lines.append(f"{row['t_hours']:g},{row['signal_bias']:.6f},"
                     f"{row['hf_bias']:.6f}")
    return AnalyzeSignalResponse(rows=rows, csv="\n".join(lines) + "\n")


@app.post("/signal/filter", response_model=FilterSignalResponse)
def filter_signal(req: FilterSignalRequest) -> FilterSignalResponse:
    sig = _guard(_load_signal, req.signal_csv, req.seed, req.n_days,
                 req.sample_period_s)
    spec = _guard(dsp.design_filter, req.t_hours, sig.sample_period_s,
                  req.filter_order, req.ripple_db)
    dec = _guard(dsp.decompose, sig, spec)
    hf_bias = {str(req.t_hours): dsp.estimate_bias(dec.hf, req.t_hours)}
    return FilterSignalResponse(
        order=spec.order, edge_hz=spec.edge_hz, ripple_db=spec.ripple_db,
        b=spec.b.tolist(), a=spec.a.tolist(), stable=spec.is_stable(),
        lf_clip_count=dec.lf_clip_count, hf_clip_count=dec.hf_clip_count,
        hf_bias=hf_bias,
        lf_csv=dec.lf.to_csv() if req.include_signals else None,
        hf_csv=dec.hf.to_csv() if req.include_signals else None)
