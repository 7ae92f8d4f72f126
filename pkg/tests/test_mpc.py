import numpy as np
import pytest
from helpers import (comfort_trace, heating_toy_model, heating_toy_stack,
                     loose_trace, scalar_reserve_stack)

from gridflex import dispatch as dsp
from gridflex import mpc
from gridflex import scheduling as sch
from gridflex import thermal as th
from gridflex import uncertainty as un


def make_state(stacked, r_value, n2, bias=None, symmetric=True, x_fill=21.0):
    n_r = stacked.models[0].n_r
    r = np.full((n2, n_r), r_value)
    x = np.full(stacked.models[0].n_x, x_fill)
    return mpc.MpcState(building_id=0, x=x, r_up=r.copy(), r_down=r.copy(),
                        n2=n2, bias=bias, symmetric=symmetric)


def uniform_cost(stacked, value=1.0):
    return np.full(stacked.dim_u, value)


class TestMpcStep:
    def test_scalar_toy_forced_to_middle(self):
        model, trace, stacked = scalar_reserve_stack(n_steps=2, u_max=10.0)
        state = make_state(stacked, 5.0, 2)
        state.x = np.zeros(1)
        res = mpc.mpc_step_pc(state, stacked, uniform_cost(stacked))
        assert res.u_setpoint[0] == pytest.approx(5.0, abs=1e-8)
        assert np.allclose(res.u_plan[:, 0], 5.0, atol=1e-8)

    def test_zero_reserve_equals_plain_mpc(self):
        model, trace, stacked = heating_toy_stack(n_steps=4)
        state = make_state(stacked, 0.0, 4)
        state.x = np.array([21.0, 21.0])
        res = mpc.mpc_step_pc(state, stacked, uniform_cost(stacked))
        assert np.allclose(res.margins, 0.0)
        # plain energy-optimal LP over the same stack
        from gridflex import lp
        split_cost = uniform_cost(stacked)
        prob = lp.LinearProgram.build(c=split_cost, a_ub=stacked.g,
                                      b_ub=stacked.q)
        plain = lp.solve(prob)
        assert res.objective == pytest.approx(plain.objective, abs=1e-7)

    def test_lv1_plan_remains_feasible(self):
        # same horizon, same state: the Lv1 solution replays in Lv2
        _, _, stacked = heating_toy_stack(n_steps=4, lo=19.0, hi=24.0)
        prices = sch.build_prices(stacked, 0.1465, 1.3)
        m = sch.build_structure_matrix(stacked, "per_step", 4)
        lv1 = sch.schedule_pc_signed(stacked, prices, m)
        n_r = stacked.models[0].n_r
        state = mpc.MpcState(
            building_id=0, x=np.array([21.0, 21.0]),
            r_up=lv1.schedule.r_up.reshape(4, n_r),
            r_down=lv1.schedule.r_down.reshape(4, n_r), n2=4)
        res = mpc.mpc_step_pc(state, stacked, prices.c)
        assert res.objective <= prices.c @ lv1.u + 1e-8

    def test_pec_eps_one_matches_pc(self):
        _, _, stacked = heating_toy_stack(n_steps=4, lo=19.0, hi=24.0)
        state = make_state(stacked, 0.3, 4,
                           bias=un.RealizedBiasState(0, 0, 0.0))
        pc = mpc.mpc_step_pc(state, stacked, uniform_cost(stacked))
        pec = mpc.mpc_step_pec(state, stacked, uniform_cost(stacked),
                               eps=1.0, window_steps=4)
        assert pec.objective == pytest.approx(pc.objective, rel=1e-6, abs=1e-8)

    def test_fresh_window_matches_unshifted_set(self):
        _, _, stacked = heating_toy_stack(n_steps=4, lo=19.0, hi=24.0)
        bias = un.RealizedBiasState(window_start=4, t=4, w_p=0.0)
        state = make_state(stacked, 0.3, 4, bias=bias)
        res = mpc.mpc_step_pec(state, stacked, uniform_cost(stacked),
                               eps=0.3, window_steps=4)
        fresh = un.build_pec(4, eps=0.3, window_steps=4)
        dirs = sch.reserve_directions(stacked, state.r_down.reshape(-1))
        assert np.allclose(res.margins, un.worst_case_rows(fresh, dirs),
                           atol=1e-12)

    def test_consumed_budget_blocks_down_requests(self):
        # one step left in the active window with the whole budget consumed
        # upward: that step admits no w > 0, the next (fresh) window does
        model, trace, stacked = scalar_reserve_stack(n_steps=2, u_max=10.0)
        bias = un.RealizedBiasState(window_start=0, t=3, w_p=1.2)
        state = make_state(stacked, 4.0, 2, bias=bias)
        res = mpc.mpc_step_pec(state, stacked, uniform_cost(stacked),
                               eps=0.3, window_steps=4)
        kinds = stacked.row_kind
        steps = stacked.row_step
        up0 = np.where((kinds == th.ROW_INPUT_UPPER) & (steps == 0))[0]
        up1 = np.where((kinds == th.ROW_INPUT_UPPER) & (steps == 1))[0]
        dn0 = np.where((kinds == th.ROW_INPUT_LOWER) & (steps == 0))[0]
        assert np.allclose(res.margins[up0], 0.0, atol=1e-12)
        assert res.margins[up1] == pytest.approx(4.0)
        assert res.margins[dn0] == pytest.approx(4.0)

    def test_duals_on_request(self):
        _, _, stacked = heating_toy_stack(n_steps=4, lo=19.0, hi=24.0)
        state = make_state(stacked, 0.3, 4,
                           bias=un.RealizedBiasState(0, 0, 0.0))
        res = mpc.mpc_step_pec(state, stacked, uniform_cost(stacked),
                               eps=0.3, window_steps=2, return_duals=True)
        uset = mpc.shifted_pec_set(0.3, 2, state.bias, 4)
        a_bar, b_bar = uset.halfplanes()
        dirs = sch.reserve_directions(stacked, state.r_down.reshape(-1))
        for ri, lam in res.duals.items():
            assert np.allclose(a_bar.T @ lam, dirs[ri], atol=1e-9)
            assert b_bar @ lam == pytest.approx(res.margins[ri], abs=1e-9)

    def test_overcommitment_raises_with_rows(self):
        model, trace, stacked = scalar_reserve_stack(n_steps=2, u_max=10.0)
        state = make_state(stacked, 6.0, 2)  # 2*6 > 10
        with pytest.raises(mpc.MpcInfeasibleError) as exc:
            mpc.mpc_step_pc(state, stacked, uniform_cost(stacked))
        assert exc.value.binding_rows


def _toy_run_setup(days=2, spd=4, n2=4, ratio=1.3, lo=18.0, hi=25.0):
    model = heating_toy_model()
    n_run = days * spd
    trace = comfort_trace(n_run + n2, lo=lo, hi=hi)
    x0 = np.array([21.0, 21.0])
    stacked = th.stack_building(model, x0, trace, n_run)
    prices = sch.build_prices(stacked, 0.1465, ratio)
    m = sch.build_structure_matrix(stacked, "daily", steps_per_day=spd)
    lv1 = sch.schedule_pc_signed(stacked, prices, m)
    runtime = [mpc.BuildingRuntime(building_id=0, model=model, x=x0.copy())]
    traces = {0: trace}
    return runtime, lv1.schedule, traces, model, x0


class TestRecedingHorizon:
    def test_zero_signal_matches_baseline_sim(self):
        runtime, schedule, traces, model, x0 = _toy_run_setup()
        feed = dsp.constant_feed(0.0, 8)
        log = mpc.receding_horizon_run(
            runtime, schedule, traces, feed, days=2, tariff=0.1465,
            n2=4, steps_per_day=4, uncertainty_kind="PC")
        assert log.comfort_violations == 0
        assert log.input_violations == 0
        # replaying the logged inputs through the plant reproduces the log
        x, y = th.simulate(model, x0, traces[0],
                           log.u[:, 0, :], log.du[:, 0, :])
        assert np.allclose(y, log.y[:, 0, :], atol=1e-9)

    def test_bounds_hold_under_extreme_signals(self):
        for w_val in (-1.0, 1.0):
            runtime, schedule, traces, model, x0 = _toy_run_setup()
            feed = dsp.constant_feed(w_val, 8)
            log = mpc.receding_horizon_run(
                runtime, schedule, traces, feed, days=2, tariff=0.1465,
                n2=4, steps_per_day=4, uncertainty_kind="PC")
            assert log.comfort_violations == 0
            assert log.input_violations == 0
            h = model.h_map
            u_eff = log.u[:, 0, :] + log.du[:, 0, :] @ h.T
            assert np.all(u_eff <= model.u_max + 1e-7)
            assert np.all(u_eff >= model.u_min - 1e-7)

    def test_monte_carlo_recursive_feasibility_pec(self):
        window_steps = 2
        eps = 0.4
        run_set = un.build_pec(8, eps=eps, window_steps=window_steps)
        failures = 0
        for seed in range(10):
            runtime, schedule, traces, model, x0 = _toy_run_setup(ratio=1.2)
            w = un.sample_admissible(run_set, seed=seed, count=1)[0]
            feed = dsp.SlotFeed(slot_w=w, fine=None, sample_period_s=1800.0,
                                slot_seconds=1800.0)
            log = mpc.receding_horizon_run(
                runtime, schedule, traces, feed, days=2, tariff=0.1465,
                n2=4, steps_per_day=4, uncertainty_kind="PEC", eps=eps,
                window_steps=window_steps)
            failures += log.comfort_violations + log.input_violations
        assert failures == 0

    def test_log_csv_format(self):
        runtime, schedule, traces, model, x0 = _toy_run_setup()
        feed = dsp.constant_feed(0.5, 8)
        log = mpc.receding_horizon_run(
            runtime, schedule, traces, feed, days=2, tariff=0.1465,
            n2=4, steps_per_day=4, uncertainty_kind="PC")
        text = log.to_csv()
        lines = text.strip().splitlines()
        assert lines[0].startswith("timestamp,building,u0")
        assert len(lines) == 1 + 8

    def test_trace_too_short_rejected(self):
        runtime, schedule, traces, model, x0 = _toy_run_setup()
        traces = {0: traces[0].slice(0, 9)}
        with pytest.raises(mpc.MpcError):
            mpc.receding_horizon_run(
                runtime, schedule, traces, dsp.constant_feed(0.0, 8),
                days=2, tariff=0.1465, n2=4, steps_per_day=4)
