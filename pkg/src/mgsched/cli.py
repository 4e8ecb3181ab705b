"""Command-line interface.

Subcommands:
  run         full pricing-loop run; writes records/schedule/plan/prices CSVs
              plus summary.json into --out-dir
  strategies  cost table for the stand-alone and joint operating strategies
  cases       fleet behaviour with and without price response
  validate    scenario schema and feasibility pre-checks (exit code 0/1)
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from mgsched import coordinator as co
from mgsched import scenario as sc
from mgsched.charging import StructuralInfeasibilityError, build_lp, write_plan_csv
from mgsched.dispatch import write_schedule_csv
from mgsched.ev_fleet import write_sessions_csv


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--scenario",
        type=Path,
        default=None,
        help="scenario JSON (defaults to the packaged baseline)",
    )
    parser.add_argument("--seed", type=int, default=None, help="override the scenario seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mgsched", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="full joint pricing-loop run")
    _add_common(p_run)
    p_run.add_argument("--iters", type=int, default=None, help="override the pricing iteration count")
    p_run.add_argument("--out-dir", type=Path, default=Path("."), help="directory for output files")

    p_str = sub.add_parser("strategies", help="stand-alone vs joint cost table")
    _add_common(p_str)
    p_str.add_argument("--out-dir", type=Path, default=Path("."))

    p_cas = sub.add_parser("cases", help="price-response comparison")
    _add_common(p_cas)
    p_cas.add_argument("--out-dir", type=Path, default=Path("."))

    p_val = sub.add_parser("validate", help="scenario schema and feasibility checks")
    _add_common(p_val)
    return parser


def _load_runtime(args) -> sc.ScenarioRuntime:
    path = args.scenario if args.scenario is not None else sc.baseline_scenario_path()
    doc = sc.load_scenario(path)
    iters = getattr(args, "iters", None)
    return sc.prepare(doc, seed=args.seed, iterations=iters, scenario_dir=Path(path).parent)


def cmd_run(args) -> int:
    rt = _load_runtime(args)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    outcome = co.run_joint(rt)
    sel = outcome.selected

    co.write_records_csv(out / "records.csv", outcome)
    co.write_prices_csv(out / "prices.csv", rt, outcome)
    inputs = co.upper_inputs(rt, sel.plan.ev_load, sel.prices.prices)
    write_schedule_csv(out / "schedule.csv", sel.schedule, inputs)
    write_plan_csv(out / "charging_plan.csv", sel.plan, [s.ev_id for s in rt.sessions])
    write_sessions_csv(out / "sessions.csv", rt.sessions)
    co.write_summary_json(out / "summary.json", rt, outcome)

    base = outcome.baselines
    print(f"selected iteration {outcome.selected_index} of {len(outcome.records)}")
    print(f"microgrid cost: ideal {base.mg_cost_ideal:.2f} $, joint {sel.mg_cost:.2f} $")
    print(f"fleet cost:     ideal {base.ev_cost_ideal:.2f} $, joint {sel.ev_cost:.2f} $")
    print(f"outputs written to {out}")
    return 0


def cmd_strategies(args) -> int:
    rt = _load_runtime(args)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    base = co.compute_baselines(rt)
    outcomes = [
        co.run_strategy(rt, co.Strategy.MG_ONLY, base),
        co.run_strategy(rt, co.Strategy.JOINT, base),
        co.run_strategy(rt, co.Strategy.EV_ONLY, base),
    ]
    co.write_strategies_csv(out / "strategies.csv", outcomes)
    print(f"{'strategy':<10} {'mg_cost':>10} {'ev_cost':>10}")
    for o in outcomes:
        print(f"{o.strategy.value:<10} {o.mg_cost:>10.2f} {o.ev_cost:>10.2f}")
    print(f"written to {out / 'strategies.csv'}")
    return 0


def cmd_cases(args) -> int:
    rt = _load_runtime(args)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    base = co.compute_baselines(rt)
    report = co.run_case(rt, co.Case.DEMAND_RESPONSE, base)
    co.write_cases_csv(out / "cases.csv", report)
    print(f"peak-to-valley: without response {report.peak_to_valley_no_dr:.2f} kW, "
          f"with response {report.peak_to_valley_dr:.2f} kW")
    print(f"price-load correlation: without response {report.correlation_no_dr:.3f}, "
          f"with response {report.correlation_dr:.3f}")
    print(f"written to {out / 'cases.csv'}")
    return 0


def cmd_validate(args) -> int:
    path = args.scenario if args.scenario is not None else sc.baseline_scenario_path()
    try:
        doc = sc.load_scenario(path)
        rt = sc.prepare(doc, seed=args.seed, scenario_dir=Path(path).parent)
    except (sc.ScenarioError, OSError, ValueError) as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return 1

    problems = []
    for t, seq in enumerate(rt.sequences):
        total = float(seq.probs.sum())
        if abs(total - 1.0) > 1e-9:
            problems.append(f"period {t}: joint output sequence sums to {total}")
    try:
        build_lp(rt.sessions, rt.ev_params, rt.tou, co.loose_caps(rt), rt.station)
    except StructuralInfeasibilityError as exc:
        problems.append(str(exc))

    if problems:
        for p in problems:
            print(f"infeasible: {p}", file=sys.stderr)
        return 1
    truncated = [s.ev_id for s in rt.sessions if s.target_truncated]
    if truncated:
        print(f"note: charge targets truncated at end of day for EVs {truncated}")
    print(f"scenario OK: {len(rt.sessions)} EV sessions, {len(rt.units)} generators, "
          f"{rt.pricing_iterations} pricing iterations")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "run": cmd_run,
        "strategies": cmd_strategies,
        "cases": cmd_cases,
        "validate": cmd_validate,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
