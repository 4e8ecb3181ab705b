"""Scenario file handling: schema validation and runtime preparation.

A scenario is one JSON document holding the generator fleet, storage, hourly
load forecast, hourly renewable distribution parameters, the EV fleet (either
distribution parameters or an explicit session table), pricing constants and
algorithm settings.  :func:`prepare` turns a validated scenario into the
immutable arrays and objects the solvers consume.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from mgsched import distributions as dist
from mgsched.charging import StationParams
from mgsched.dispatch import EssParams, MtUnit
from mgsched.ev_fleet import EvSession, build_windows, read_sessions_csv
from mgsched.jaya import JayaConfig
from mgsched.sequences import ProbSequence, convolve, discretize

HOURS = 24


class ScenarioError(ValueError):
    """Scenario document failed validation."""


def baseline_scenario_path() -> Path:
    """Path of the packaged reference scenario."""
    return Path(resources.files("mgsched").joinpath("data/baseline.json"))


def load_scenario(path) -> dict:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"not valid JSON: {exc}") from exc
    validate_scenario(doc)
    return doc


def _need(doc: dict, key: str, context: str):
    if key not in doc:
        raise ScenarioError(f"missing '{key}' in {context}")
    return doc[key]


def _hourly(values, context: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != (HOURS,):
        raise ScenarioError(f"{context} must list exactly {HOURS} hourly values")
    return arr


def validate_scenario(doc: dict) -> None:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")
    for section in ("mt_units", "ess", "load", "pv", "wt", "fleet", "pricing", "station", "algorithm"):
        _need(doc, section, "scenario")

    units = doc["mt_units"]
    if not isinstance(units, list) or not units:
        raise ScenarioError("mt_units must be a non-empty list")
    for i, u in enumerate(units):
        for key in ("name", "startup_cost", "fixed_fuel", "fuel_slope", "reserve_cost", "p_min", "p_max"):
            _need(u, key, f"mt_units[{i}]")

    ess = doc["ess"]
    for key in ("soc_min", "soc_max", "p_ch_max", "p_dc_max", "eta_ch", "eta_dc",
                "charge_price", "discharge_price", "reserve_price", "soc_start"):
        _need(ess, key, "ess")

    load = doc["load"]
    _hourly(_need(load, "mean", "load"), "load.mean")
    fluct = _need(load, "fluctuation", "load")
    if not 0.0 <= fluct < 1.0:
        raise ScenarioError("load.fluctuation must lie in [0, 1)")

    for name in ("pv", "wt"):
        block = doc[name]
        _hourly(_need(block, "p_rated", name), f"{name}.p_rated")
    for key in ("alpha", "beta"):
        _hourly(_need(doc["pv"], key, "pv"), f"pv.{key}")
    for key in ("k", "c"):
        _hourly(_need(doc["wt"], key, "wt"), f"wt.{key}")
    for key in ("v_in", "v_rated", "v_out"):
        _need(doc["wt"], key, "wt")

    fleet = doc["fleet"]
    has_table = "sessions_csv" in fleet
    keys = ["battery_capacity", "rated_power", "charge_efficiency", "e_per_100km",
            "soc_min", "soc_max", "soc_expected", "max_dwell"]
    if not has_table:
        keys += ["count", "arrival_mu", "arrival_sigma", "mileage_log_mu", "mileage_log_sigma",
                 "soc_initial_mean", "soc_initial_std"]
    for key in keys:
        _need(fleet, key, "fleet")

    pricing = doc["pricing"]
    for key in ("omega_ref", "p_ref", "price_floor", "tou"):
        _need(pricing, key, "pricing")
    for key in ("peak", "flat", "offpeak"):
        value = _need(pricing["tou"], key, "pricing.tou")
        if value <= 0.0:
            raise ScenarioError(f"pricing.tou.{key} must be positive")
    if pricing["p_ref"] <= 0.0:
        raise ScenarioError("pricing.p_ref must be positive")

    for key in ("investment", "lifetime_years"):
        _need(doc["station"], key, "station")

    algo = doc["algorithm"]
    for key in ("gamma", "step_q", "alpha_cap", "pricing_iterations", "penalty_weight", "jaya", "ipm"):
        _need(algo, key, "algorithm")
    if not 0.0 < algo["gamma"] <= 1.0:
        raise ScenarioError("algorithm.gamma must lie in (0, 1]")
    if algo["step_q"] <= 0.0:
        raise ScenarioError("algorithm.step_q must be positive")
    if not 0.0 < algo["alpha_cap"] <= 1.0:
        raise ScenarioError("algorithm.alpha_cap must lie in (0, 1]")
    if int(algo["pricing_iterations"]) < 1:
        raise ScenarioError("algorithm.pricing_iterations must be at least 1")
    for key in ("pop_size", "max_iter"):
        _need(algo["jaya"], key, "algorithm.jaya")
    for key in ("tol", "max_iter"):
        _need(algo["ipm"], key, "algorithm.ipm")
    if "seed" not in doc:
        raise ScenarioError("missing 'seed' in scenario")


# Hour blocks of the grid time-of-use tariff (end-exclusive ranges).
TOU_PEAK_HOURS = range(11, 15)
TOU_OFFPEAK_HOURS = list(range(0, 6)) + [18]


def tou_prices(peak: float, flat: float, offpeak: float) -> np.ndarray:
    prices = np.full(HOURS, flat)
    prices[list(TOU_PEAK_HOURS)] = peak
    prices[TOU_OFFPEAK_HOURS] = offpeak
    return prices


@dataclass
class ScenarioRuntime:
    """Validated scenario unpacked into solver-ready objects."""

    units: tuple[MtUnit, ...]
    ess: EssParams
    base_load: np.ndarray
    forecasts: tuple[dist.PeriodForecast, ...]
    sequences: tuple[ProbSequence, ...]
    sessions: list[EvSession]
    ev_params: object
    station: StationParams
    tou: np.ndarray
    omega_ref: float
    p_ref: float
    price_floor: float
    gamma: float
    step_q: float
    alpha_cap: float
    pricing_iterations: int
    penalty_weight: float
    jaya: JayaConfig
    ipm_tol: float
    ipm_max_iter: int
    seed: int
    load_fluctuation: float


def prepare(doc: dict, seed: int | None = None, iterations: int | None = None,
            scenario_dir: Path | None = None) -> ScenarioRuntime:
    """Build the runtime bundle; ``seed``/``iterations`` override the document."""
    validate_scenario(doc)
    run_seed = int(doc["seed"] if seed is None else seed)

    units = tuple(
        MtUnit(
            name=str(u["name"]),
            startup_cost=float(u["startup_cost"]),
            fixed_fuel=float(u["fixed_fuel"]),
            fuel_slope=float(u["fuel_slope"]),
            reserve_cost=float(u["reserve_cost"]),
            p_min=float(u["p_min"]),
            p_max=float(u["p_max"]),
        )
        for u in doc["mt_units"]
    )
    e = doc["ess"]
    ess = EssParams(
        soc_min=float(e["soc_min"]), soc_max=float(e["soc_max"]),
        p_ch_max=float(e["p_ch_max"]), p_dc_max=float(e["p_dc_max"]),
        eta_ch=float(e["eta_ch"]), eta_dc=float(e["eta_dc"]),
        charge_price=float(e["charge_price"]), discharge_price=float(e["discharge_price"]),
        reserve_price=float(e["reserve_price"]), soc_start=float(e["soc_start"]),
    )

    base_load = _hourly(doc["load"]["mean"], "load.mean")
    fluctuation = float(doc["load"]["fluctuation"])
    q = float(doc["algorithm"]["step_q"])

    pv, wt = doc["pv"], doc["wt"]
    forecasts, sequences = [], []
    for h in range(HOURS):
        pv_spec = dist.beta_pv_pdf(float(pv["alpha"][h]), float(pv["beta"][h]), float(pv["p_rated"][h]))
        wt_spec = dist.weibull_wt_pdf(
            float(wt["k"][h]), float(wt["c"][h]), float(wt["v_in"]),
            float(wt["v_rated"]), float(wt["v_out"]), float(wt["p_rated"][h]),
        )
        forecasts.append(dist.make_forecast(h, pv_spec, wt_spec, float(base_load[h]), fluctuation))
        seq_pv = discretize(pv_spec, float(pv["p_rated"][h]), q)
        seq_wt = discretize(wt_spec, float(wt["p_rated"][h]), q)
        sequences.append(convolve(seq_pv, seq_wt))

    f = doc["fleet"]
    fleet_params = dist.FleetParams(
        battery_capacity=float(f["battery_capacity"]),
        rated_power=float(f["rated_power"]),
        charge_efficiency=float(f["charge_efficiency"]),
        e_per_100km=float(f["e_per_100km"]),
        soc_min=float(f["soc_min"]),
        soc_max=float(f["soc_max"]),
        soc_expected=float(f["soc_expected"]),
        arrival_mu=float(f.get("arrival_mu", 18.0)),
        arrival_sigma=float(f.get("arrival_sigma", 3.0)),
        mileage_log_mu=float(f.get("mileage_log_mu", 3.2)),
        mileage_log_sigma=float(f.get("mileage_log_sigma", 0.85)),
        soc_initial_mean=float(f.get("soc_initial_mean", 0.5)),
        soc_initial_std=float(f.get("soc_initial_std", 0.1)),
    )
    ev_params = fleet_params.ev_params()
    if "sessions_csv" in f:
        csv_path = Path(f["sessions_csv"])
        if not csv_path.is_absolute() and scenario_dir is not None:
            csv_path = scenario_dir / csv_path
        sessions = read_sessions_csv(csv_path)
    else:
        sessions = dist.sample_fleet(fleet_params, int(f["count"]), run_seed)
    sessions = build_windows(sessions, ev_params, max_dwell=float(f["max_dwell"]))

    pr = doc["pricing"]
    algo = doc["algorithm"]
    jcfg = algo["jaya"]
    jaya = JayaConfig(
        pop_size=int(jcfg["pop_size"]),
        max_iter=int(jcfg["max_iter"]),
        seed=int(jcfg.get("seed", run_seed)),
        thr1=float(jcfg.get("thr1", 0.99)),
        thr2=float(jcfg.get("thr2", 1.01)),
        restart_fraction=float(jcfg.get("restart_fraction", 0.2)),
        restart_cooldown=int(jcfg.get("restart_cooldown", 100)),
    )
    n_iters = int(algo["pricing_iterations"] if iterations is None else iterations)

    return ScenarioRuntime(
        units=units,
        ess=ess,
        base_load=base_load,
        forecasts=tuple(forecasts),
        sequences=tuple(sequences),
        sessions=sessions,
        ev_params=ev_params,
        station=StationParams(float(doc["station"]["investment"]), float(doc["station"]["lifetime_years"])),
        tou=tou_prices(float(pr["tou"]["peak"]), float(pr["tou"]["flat"]), float(pr["tou"]["offpeak"])),
        omega_ref=float(pr["omega_ref"]),
        p_ref=float(pr["p_ref"]),
        price_floor=float(pr["price_floor"]),
        gamma=float(algo["gamma"]),
        step_q=q,
        alpha_cap=float(algo["alpha_cap"]),
        pricing_iterations=n_iters,
        penalty_weight=float(algo["penalty_weight"]),
        jaya=jaya,
        ipm_tol=float(algo["ipm"]["tol"]),
        ipm_max_iter=int(algo["ipm"]["max_iter"]),
        seed=run_seed,
        load_fluctuation=fluctuation,
    )
