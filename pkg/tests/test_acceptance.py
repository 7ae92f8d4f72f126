"""Acceptance gate: every criterion at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one pass/fail
line per criterion.  The closed-loop criteria are the slow part (a few
minutes per season); everything else is quick.
"""

import itertools
import time
from dataclasses import replace

import numpy as np
import pytest

from gridflex import dispatch as dsp
from gridflex import harness as hz
from gridflex import lp
from gridflex import scheduling as sch
from gridflex import thermal as th
from gridflex import uncertainty as un


def _report(name: str, ok: bool, detail: str = ""):
    tag = "PASS" if ok else "FAIL"
    print(f"[{tag}] {name}" + (f": {detail}" if detail else ""))
    assert ok, f"{name} failed: {detail}"


# ---------------------------------------------------------------------------
# random small instances for the oracle criteria
# ---------------------------------------------------------------------------

def _random_building(rng, n_x, sign):
    a = rng.uniform(0.0, 1.0, size=(n_x, n_x))
    a = a / (np.abs(np.linalg.eigvals(a)).max() + 1e-12) \
        * rng.uniform(0.55, 0.9)
    b = np.zeros((n_x, 2))
    b[:, 0] = sign * rng.uniform(0.1, 0.8, size=n_x)
    b[0, 1] = rng.uniform(0.05, 0.3)
    c = np.zeros((1, n_x))
    c[0, 0] = 1.0
    return th.LtvBuildingModel(
        name=f"rnd{sign}", a=a, b_steps=b[None], e=rng.uniform(
            0.0, 0.1, size=(n_x, 1)),
        c=c, d_steps=np.zeros((1, 1, 2)), f=np.zeros((1, 1)),
        u_min=np.zeros(2), u_max=np.array([10.0, 5.0]),
        reserve_actuator_index=(0,), actuator_sign=(sign,), cop=(3.0,),
        floor_area=1000.0, input_electric_factor=np.array([1 / 3.0, 1.0]))


def _random_instance(rng, n_buildings, n1, mixed=False):
    stacks = []
    for b in range(n_buildings):
        sign = -1 if (mixed and b % 2) else 1
        n_x = int(rng.integers(2, 5))
        model = _random_building(rng, n_x, sign)
        x0 = np.full(n_x, 21.0)
        v = np.full((n1, 1), rng.uniform(5.0, 15.0))
        occ = np.ones(n1, dtype=bool)
        probe = th.DisturbanceTrace(
            v=v, occupied=occ, y_min=np.full((n1, 1), -1e6),
            y_max=np.full((n1, 1), 1e6))
        u_mid = np.tile(0.5 * (model.u_min + model.u_max), (n1, 1))
        _, y_mid = th.simulate(model, x0, probe, u_mid)
        lo = y_mid.min() - rng.uniform(2.0, 6.0)
        hi = y_mid.max() + rng.uniform(2.0, 6.0)
        trace = th.DisturbanceTrace(
            v=v, occupied=occ, y_min=np.full((n1, 1), lo),
            y_max=np.full((n1, 1), hi))
        stacks.append(th.stack_building(model, x0, trace, n1, building_id=b))
    stacked = th.stack_aggregation(stacks) if len(stacks) > 1 else stacks[0]
    prices = sch.build_prices(stacked, 0.1465, float(rng.uniform(1.05, 1.6)))
    m = sch.build_structure_matrix(stacked, "per_step", n1)
    return stacked, prices, m


def test_criterion_01_robust_counterpart_soundness_oracle():
    t0 = time.time()
    rng = np.random.default_rng(2026)
    checked = 0
    worst = -np.inf
    for trial in range(22):
        n1 = int(rng.integers(2, 7))
        nb = int(rng.integers(1, 3))
        stacked, prices, m = _random_instance(rng, nb, n1)
        pc = sch.schedule_pc_signed(stacked, prices, m)
        rep = sch.robust_feasibility_check(stacked, pc.u, pc.schedule, None,
                                           mode="oracle", tol=1e-7)
        worst = max(worst, rep.worst_margin)
        assert rep.ok, f"PC violation at trial {trial}: {rep.violations[:3]}"
        t_steps = int(rng.integers(2, n1 + 1))
        uset = un.build_pec(n1, eps=float(rng.uniform(0.2, 0.8)),
                            window_steps=t_steps)
        pec = sch.schedule_pec(stacked, prices, m, uset, method="dual",
                               return_duals=False)
        rep2 = sch.robust_feasibility_check(stacked, pec.u, pec.schedule,
                                            uset, mode="oracle", tol=1e-7)
        worst = max(worst, rep2.worst_margin)
        assert rep2.ok, f"PEC violation at trial {trial}: {rep2.violations[:3]}"
        pec_c = sch.schedule_pec(stacked, prices, m, uset, method="cuts",
                                 return_duals=False)
        assert pec_c.objective == pytest.approx(pec.objective, rel=1e-6,
                                                abs=1e-8)
        checked += 1
    elapsed = time.time() - t0
    _report("criterion 1 (oracle soundness)", checked >= 20 and elapsed < 120,
            f"{checked} instances, worst margin {worst:.2e}, {elapsed:.1f}s")


def test_criterion_02_signed_equals_general():
    rng = np.random.default_rng(7)
    worst_rel = 0.0
    for trial in range(10):
        n1 = int(rng.integers(2, 6))
        nb = int(rng.integers(1, 3))
        stacked, prices, m = _random_instance(rng, nb, n1)
        a = sch.schedule_pc_signed(stacked, prices, m)
        b = sch.schedule_pc_general(stacked, prices, m)
        rel = abs(a.objective - b.objective) / (1.0 + abs(a.objective))
        worst_rel = max(worst_rel, rel)
        assert rel <= 1e-6
    _report("criterion 2 (signed == general)", True,
            f"10 instances, worst relative gap {worst_rel:.2e}")


def test_criterion_03_threshold_law():
    cfg = hz.bundled_scenarios()["threshold"]
    curve = hz.sweep_bid_curve(cfg, [0.99, 1.01])
    below, above = curve["pc_kw"]
    ok = below <= 1e-7 and above > 1e-3
    _report("criterion 3 (payment threshold)", ok,
            f"capacity {below:.2e} kW at 0.99, {above:.2f} kW at 1.01")


@pytest.fixture(scope="module")
def bundled_capacities():
    out = {}
    for name in ("winter", "summer", "winter_2b"):
        cfg = replace(hz.bundled_scenarios()[name], days=1)
        caps = {}
        for kind in ("PC", "PEC"):
            lv1, _ = hz.schedule_once(replace(cfg, uncertainty=kind))
            caps[kind] = hz._commit_day(
                lv1.schedule, cfg.steps_per_day).average_electric_kw()
        for gran in ("daily", "hourly"):
            lv1, _ = hz.schedule_once(replace(cfg, granularity=gran))
            caps[gran] = hz._commit_day(
                lv1.schedule, cfg.steps_per_day).average_electric_kw()
        caps["sym_obj"] = hz.schedule_once(
            replace(cfg, uncertainty="PC"))[0].objective
        asym = hz.schedule_once(
            replace(cfg, uncertainty="PC", symmetric=False))[0]
        caps["asym_obj"] = asym.objective
        caps["asym_up"] = float(asym.schedule.r_up.max(initial=0.0))
        caps["asym_down_total"] = float(asym.schedule.r_down.sum())
        out[name] = caps
    return out


def test_criterion_04_pec_dominance(bundled_capacities):
    strict = 0
    for name, caps in bundled_capacities.items():
        assert caps["PEC"] >= caps["PC"] - 1e-9, name
        if caps["PEC"] > caps["PC"] + 1e-6:
            strict += 1
    _report("criterion 4 (PEC dominance)", strict >= 1,
            ", ".join(f"{n}: {c['PEC']:.1f} vs {c['PC']:.1f} kW"
                      for n, c in bundled_capacities.items()))


def test_criterion_05_product_granularity(bundled_capacities):
    for name, caps in bundled_capacities.items():
        assert caps["hourly"] >= caps["daily"] - 1e-9, name
    _report("criterion 5 (hourly >= daily)", True,
            ", ".join(f"{n}: {c['hourly']:.1f} vs {c['daily']:.1f} kW"
                      for n, c in bundled_capacities.items()))


def test_criterion_06_asymmetric_dominance(bundled_capacities):
    for name, caps in bundled_capacities.items():
        assert caps["asym_obj"] <= caps["sym_obj"] + 1e-8, name
    winter = bundled_capacities["winter"]
    ok = winter["asym_up"] <= 1e-7 and winter["asym_down_total"] > 1e-3
    _report("criterion 6 (asymmetric dominance, winter up == 0)", ok,
            f"up max {winter['asym_up']:.2e}, "
            f"down total {winter['asym_down_total']:.2f}")


def _season_closed_loop(season):
    t0 = time.time()
    cfg = hz.bundled_scenarios()[season]
    report = hz.run_closed_loop(cfg)
    violations = {"main_comfort": report.comfort_violations,
                  "main_comfort_occupied": report.comfort_violations_occupied,
                  "main_input": report.input_violations}
    _, _, _, traces = hz.build_fleet(cfg)
    adv_feed = hz.AdversarialVertexFeed(cfg, traces)
    adv = hz.run_closed_loop(cfg, feed=adv_feed, with_baseline=False,
                             keep_log=False)
    violations["adv_comfort"] = adv.comfort_violations
    violations["adv_input"] = adv.input_violations
    study = hz.monte_carlo_day_study(cfg, report, n_signals=200)
    violations["mc_comfort"] = study.comfort_violations
    violations["mc_input"] = study.input_violations
    elapsed = time.time() - t0
    return report, violations, elapsed


@pytest.mark.slow
def test_criterion_07_closed_loop_zero_violations():
    for season in ("winter", "summer"):
        report, violations, elapsed = _season_closed_loop(season)
        total = sum(violations.values())
        ok = total == 0 and elapsed < 900.0
        _report(f"criterion 7 ({season} closed loop)", ok,
                f"violations {violations}, capacity avg "
                f"{report.average_capacity_kw:.1f} kW, "
                f"consumption +{report.consumption_delta_pct:.1f}%, "
                f"{elapsed:.0f}s")


@pytest.mark.slow
def test_criterion_08_eps_monotone_grid():
    cfg = hz.bundled_scenarios()["sweep"]
    t_list = [1.0, 2.0, 4.0, 6.0, 8.0, 12.0]
    eps_list = [round(0.05 * k, 2) for k in range(1, 11)]
    grid = hz.sweep_te_grid(cfg, t_list, eps_list)
    cap = grid["capacity_kw"]
    worst_step = 0.0
    for i in range(len(t_list)):
        steps = np.diff(cap[i])
        worst_step = max(worst_step, float(steps.max(initial=-np.inf)))
        assert np.all(steps <= 1e-6), f"T={t_list[i]}h row not monotone"
    _report("criterion 8 (eps-monotone grid)", True,
            f"{cap.shape[0]}x{cap.shape[1]} grid, worst upward step "
            f"{worst_step:.2e} kW")


def test_criterion_09_filter_bias_pipeline():
    two_weeks = 14 * 24 * 360
    sig = dsp.generate_synthetic_signal(seed=2012, n_samples=two_weeks,
                                        target_bias={2.0: 0.75})
    t_values = [1.0, 2.0, 4.0, 6.0, 8.0, 12.0]
    exact_worst = 0.0
    for t_h in t_values:
        spec = dsp.design_filter(t_h, sig.sample_period_s)
        dec = dsp.decompose(sig, spec)
        exact = float(np.abs(dec.lf_raw + dec.hf_raw - sig.samples).max())
        exact_worst = max(exact_worst, exact)
        assert exact <= 1e-12
        assert dsp.estimate_bias(dec.hf, t_h) <= dsp.estimate_bias(sig, t_h)
    spec2 = dsp.design_filter(2.0, sig.sample_period_s)
    dec2 = dsp.decompose(sig, spec2)
    feed = dsp.make_slot_feed(dec2.hf, slot_seconds=1800.0, eps=0.3,
                              window_steps=4)
    sums = feed.slot_w[:len(feed.slot_w) // 4 * 4].reshape(-1, 4).sum(axis=1)
    ok = np.all(np.abs(sums) <= 1.2 + 1e-12)
    _report("criterion 9 (filter/bias pipeline)", bool(ok),
            f"exact complement {exact_worst:.1e}, max window sum "
            f"{np.abs(sums).max():.4f} <= 1.2")


def test_criterion_10_lp_core():
    from test_lp import brute_force_min

    rng = np.random.default_rng(100)
    worst_gap = 0.0
    worst_dev = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 5))
        m = int(rng.integers(1, 7))
        a = rng.normal(size=(m, n))
        b = a @ rng.uniform(-1, 1, size=n) + rng.uniform(0.05, 1.0, size=m)
        prob = lp.LinearProgram.build(
            c=rng.normal(size=n), a_ub=a, b_ub=b,
            lower=-2 * np.ones(n), upper=2 * np.ones(n))
        sol = lp.solve(prob)
        assert sol.status == lp.OPTIMAL
        gap = abs(sol.objective - sol.dual_objective(prob)) \
            / (1.0 + abs(sol.objective))
        worst_gap = max(worst_gap, gap)
        assert gap <= 1e-7
        ref, _ = brute_force_min(prob)
        dev = abs(sol.objective - ref)
        worst_dev = max(worst_dev, dev)
        assert dev <= 1e-8 * (1.0 + abs(ref))
    _report("criterion 10 (LP core)", True,
            f"50 LPs, worst duality gap {worst_gap:.2e}, worst oracle "
            f"deviation {worst_dev:.2e}")


def test_criterion_11_extrapolation():
    a = hz.extrapolate_fleet(313.0, 6, 5.0)
    b = hz.extrapolate_fleet(323.0, 6, 5.0)
    c = hz.extrapolate_fleet(100.0, 6, 0.0)
    ok = (a, b, c) == (96, 93, 0)
    _report("criterion 11 (fleet extrapolation)", ok, f"{a}, {b}, {c}")


@pytest.mark.slow
def test_criterion_12_simulate_determinism():
    import json

    from click.testing import CliRunner

    from gridflex import cli

    cfg = replace(hz.bundled_scenarios()["winter_2b"], days=1)
    runner = CliRunner()
    with runner.isolated_filesystem():
        with open("cfg.json", "w") as fh:
            fh.write(json.dumps(cfg.to_dict()))
        outputs = []
        for out_dir in ("a", "b"):
            res = runner.invoke(cli.main, ["simulate", "--config", "cfg.json",
                                           "--out", out_dir])
            assert res.exit_code == 0, res.output
            blob = b""
            for name in ("summary.csv", "allocation.csv", "log.csv",
                         "report.txt", "schedule_day0.csv"):
                with open(f"{out_dir}/{name}", "rb") as fh:
                    blob += fh.read()
            outputs.append(blob)
    ok = outputs[0] == outputs[1]
    _report("criterion 12 (simulate determinism)", ok,
            f"{len(outputs[0])} report bytes compared")
