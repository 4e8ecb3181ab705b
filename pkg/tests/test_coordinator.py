"""Pricing loop, strategy/case runs and output writers on a reduced scenario."""

import copy
import json

import numpy as np
import pytest

from mgsched import coordinator as co
from mgsched import scenario as sc
from mgsched.charging import charging_cost
from mgsched.dispatch import net_operating_cost


@pytest.fixture(scope="module")
def small_doc():
    doc = sc.load_scenario(sc.baseline_scenario_path())
    doc = copy.deepcopy(doc)
    doc["fleet"]["count"] = 6
    doc["algorithm"]["pricing_iterations"] = 2
    doc["algorithm"]["jaya"] = {"pop_size": 24, "max_iter": 120}
    return doc


@pytest.fixture(scope="module")
def small_rt(small_doc):
    return sc.prepare(small_doc, seed=3)


def test_real_time_price_reference_point():
    profile = co.real_time_price(np.array([30.0]), np.array([50.0]), 80.0, 0.6)
    assert profile.prices[0] == pytest.approx(0.6)
    assert profile.origin is co.PriceOrigin.REAL_TIME


def test_real_time_price_scales_with_load():
    profile = co.real_time_price(np.array([50.0]), np.array([50.0]), 80.0, 0.6)
    assert profile.prices[0] == pytest.approx(0.75)


def test_real_time_price_floors_degenerate_load():
    profile = co.real_time_price(np.zeros(2), np.zeros(2), 80.0, 0.6)
    assert np.all(profile.prices == 0.01)


def test_real_time_price_validates():
    with pytest.raises(ValueError):
        co.real_time_price(np.array([1.0]), np.array([1.0]), 0.0, 0.6)
    with pytest.raises(ValueError):
        co.real_time_price(np.array([-1.0]), np.array([0.0]), 80.0, 0.6)


def _record(index, f1, f2):
    return co.IterationRecord(index=index, prices=None, plan=None, schedule=None,
                              mg_cost=f1, ev_cost=f2)


def test_select_single_record():
    records = [_record(0, 10.0, 5.0)]
    assert co.select_joint_optimum(records, 0.0, 0.0) is records[0]


def test_select_breaks_ties_by_lowest_index():
    records = [_record(0, 5.0, 0.0), _record(1, 3.0, 0.0), _record(2, 0.0, 3.0)]
    chosen = co.select_joint_optimum(records, 0.0, 0.0)
    assert chosen.index == 1


def test_select_exact_match_wins():
    records = [_record(0, 9.0, 9.0), _record(1, 4.0, 7.0), _record(2, 8.0, 2.0)]
    assert co.select_joint_optimum(records, 4.0, 7.0).index == 1


def test_select_invariant_under_common_translation():
    rng = np.random.default_rng(1)
    records = [_record(i, float(rng.uniform(0, 100)), float(rng.uniform(0, 100))) for i in range(12)]
    base_choice = co.select_joint_optimum(records, 20.0, 30.0).index
    shift = 55.5
    shifted = [_record(r.index, r.mg_cost + shift, r.ev_cost + shift) for r in records]
    assert co.select_joint_optimum(shifted, 20.0 + shift, 30.0 + shift).index == base_choice


def test_single_iteration_prices_follow_first_plan(small_rt):
    records = co.run_bilevel(_with_iters(small_rt, 1))
    assert len(records) == 1
    expected = co.real_time_price(
        records[0].plan.ev_load, small_rt.base_load, small_rt.p_ref,
        small_rt.omega_ref, small_rt.price_floor,
    )
    assert records[0].prices.prices == pytest.approx(expected.prices, abs=1e-12)


def _with_iters(rt, n):
    clone = copy.copy(rt)
    clone.pricing_iterations = n
    return clone


def test_loop_is_deterministic(small_rt):
    a = co.run_bilevel(small_rt)
    b = co.run_bilevel(small_rt)
    assert [r.mg_cost for r in a] == [r.mg_cost for r in b]
    assert [r.ev_cost for r in a] == [r.ev_cost for r in b]
    for ra, rb in zip(a, b):
        assert np.array_equal(ra.plan.p_ev, rb.plan.p_ev)
        assert np.array_equal(ra.schedule.p_mt, rb.schedule.p_mt)


def test_records_recompute_to_stored_costs(small_rt):
    for record in co.run_bilevel(small_rt):
        f1 = net_operating_cost(record.schedule, record.plan.ev_load,
                                record.prices.prices, small_rt.units, small_rt.ess)
        f2 = charging_cost(record.plan, record.prices.prices, small_rt.station)
        assert f1 == pytest.approx(record.mg_cost, abs=1e-9)
        assert f2 == pytest.approx(record.ev_cost, abs=1e-9)


def test_strategies_are_reproducible(small_rt):
    first = co.run_strategy(small_rt, co.Strategy.MG_ONLY)
    second = co.run_strategy(small_rt, co.Strategy.MG_ONLY)
    assert first.mg_cost == second.mg_cost
    assert first.ev_cost == second.ev_cost


def test_ev_only_uniform_price_oracle(small_doc):
    # one flat tariff everywhere: the optimal bill is forced by the energy need
    doc = copy.deepcopy(small_doc)
    doc["pricing"]["tou"] = {"peak": 0.62, "flat": 0.62, "offpeak": 0.62}
    rt = sc.prepare(doc, seed=3)
    outcome = co.run_strategy(rt, co.Strategy.EV_ONLY)
    required = sum(s.required_energy for s in rt.sessions)
    expected = 0.62 * required / rt.ev_params.charge_efficiency + rt.station.daily_cost
    assert outcome.ev_cost == pytest.approx(expected, abs=1e-6)


def test_case_collapses_when_responses_match(small_rt):
    base = co.compute_baselines(small_rt)
    synthetic = co.JointOutcome(
        records=[co.IterationRecord(0, base.shadow_prices, base.plan, base.schedule,
                                    base.mg_cost_ideal, base.ev_cost_under_mg)],
        baselines=base,
        selected_index=0,
    )
    report = co.run_case(small_rt, co.Case.DEMAND_RESPONSE, base, joint=synthetic)
    assert report.ev_load_dr == pytest.approx(report.ev_load_no_dr)
    assert report.price_dr == pytest.approx(report.price_no_dr)
    assert report.peak_to_valley_dr == report.peak_to_valley_no_dr
    assert report.correlation_dr == report.correlation_no_dr


def test_case_report_consistency(small_rt):
    base = co.compute_baselines(small_rt)
    report = co.run_case(small_rt, co.Case.NO_DEMAND_RESPONSE, base)
    total = small_rt.base_load + report.ev_load_no_dr
    assert report.peak_to_valley_no_dr == pytest.approx(float(total.max() - total.min()))


def test_correlation_handles_constant_series():
    assert co.price_load_correlation(np.ones(5), np.arange(5.0)) == 0.0


def test_writers_produce_stable_files(tmp_path, small_rt):
    outcome = co.run_joint(small_rt)
    co.write_records_csv(tmp_path / "records.csv", outcome)
    co.write_prices_csv(tmp_path / "prices.csv", small_rt, outcome)
    co.write_summary_json(tmp_path / "summary.json", small_rt, outcome)

    records = (tmp_path / "records.csv").read_text().splitlines()
    assert records[0] == "iteration,mg_cost,ev_cost,distance_to_ideal,selected"
    assert len(records) == len(outcome.records) + 1
    assert sum(line.endswith(",1") for line in records[1:]) == 1

    prices = (tmp_path / "prices.csv").read_text().splitlines()
    assert prices[0] == "period,tou,real_time_initial,real_time_selected"
    assert len(prices) == 25

    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["selected_iteration"] == outcome.selected_index
    assert summary["mg_cost_joint"] == outcome.selected.mg_cost
    assert max(summary["max_residuals"].values()) <= 1e-6
