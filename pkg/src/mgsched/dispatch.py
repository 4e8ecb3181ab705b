"""Microgrid day-ahead dispatch: microturbine commitment, storage operation
and spinning reserve under a chance-constrained reserve requirement.

The decision vector is repaired into a schedule that satisfies the generator
boxes, storage dynamics and limits, the start-equals-end storage boundary,
and the reserve caps *by construction*; only the power-balance deficit and
any un-coverable reserve shortfall remain as penalty terms for the search.
The storage trajectory construction clamps each period's end energy into the
band from which the boundary state is still reachable at rated power, which
pins the final state exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from mgsched.jaya import JayaConfig, optimize
from mgsched.sequences import ProbSequence, expectation, min_reserve_for_confidence

RESIDUAL_TOL = 1e-6


class InfeasibleScheduleError(RuntimeError):
    """No schedule within tolerance was found; carries worst residuals."""

    def __init__(self, message: str, residuals: dict):
        self.residuals = residuals
        super().__init__(message)


@dataclass(frozen=True)
class MtUnit:
    name: str
    startup_cost: float  # $ per start event
    fixed_fuel: float  # $ per committed hour
    fuel_slope: float  # $ per kWh generated
    reserve_cost: float  # $ per kW of hourly spinning reserve
    p_min: float  # kW
    p_max: float  # kW

    def __post_init__(self):
        if not 0.0 <= self.p_min <= self.p_max:
            raise ValueError(f"unit {self.name}: 0 <= p_min <= p_max violated")
        if min(self.startup_cost, self.fixed_fuel, self.fuel_slope, self.reserve_cost) < 0.0:
            raise ValueError(f"unit {self.name}: costs must be non-negative")


@dataclass(frozen=True)
class EssParams:
    soc_min: float  # kWh
    soc_max: float  # kWh
    p_ch_max: float  # kW
    p_dc_max: float  # kW
    eta_ch: float
    eta_dc: float
    charge_price: float  # $/kWh
    discharge_price: float  # $/kWh
    reserve_price: float  # $/kW per hour of held reserve
    soc_start: float  # kWh, also the required end state

    def __post_init__(self):
        if not 0.0 <= self.soc_min <= self.soc_start <= self.soc_max:
            raise ValueError("storage energy bounds must satisfy min <= start <= max")
        if not (0.0 < self.eta_ch <= 1.0 and 0.0 < self.eta_dc <= 1.0):
            raise ValueError("storage efficiencies must lie in (0, 1]")
        if self.p_ch_max < 0.0 or self.p_dc_max < 0.0:
            raise ValueError("storage power limits must be non-negative")


@dataclass
class UpperSchedule:
    """One day's dispatch decisions (arrays indexed [unit, period] / [period])."""

    on: np.ndarray
    startup: np.ndarray
    p_mt: np.ndarray
    r_mt: np.ndarray
    p_ch: np.ndarray
    p_dc: np.ndarray
    p_res: np.ndarray
    p_un: np.ndarray
    soc: np.ndarray  # (T+1,), soc[0] is the boundary state

    @property
    def n_periods(self) -> int:
        return self.p_ch.size

    def total_reserve(self) -> np.ndarray:
        return self.r_mt.sum(axis=0) + self.p_res


@dataclass
class UpperInputs:
    units: tuple[MtUnit, ...]
    ess: EssParams
    base_load: np.ndarray  # (T,) kW
    sequences: tuple[ProbSequence, ...]  # joint renewable output per period
    gamma: float
    ev_load: np.ndarray  # (T,) kW
    prices: np.ndarray  # (T,) $/kWh billed to the EV fleet
    penalty_weight: float = 1000.0
    dt: float = 1.0
    renewable_expectation: np.ndarray = field(init=False)
    reserve_requirement: np.ndarray = field(init=False)

    def __post_init__(self):
        self.base_load = np.asarray(self.base_load, dtype=float)
        self.ev_load = np.asarray(self.ev_load, dtype=float)
        self.prices = np.asarray(self.prices, dtype=float)
        t = self.base_load.size
        if not (self.ev_load.size == t and self.prices.size == t and len(self.sequences) == t):
            raise ValueError("load, prices and sequences must cover the same periods")
        self.renewable_expectation = np.array([expectation(c) for c in self.sequences])
        self.reserve_requirement = np.array(
            [min_reserve_for_confidence(c, self.gamma) for c in self.sequences]
        )

    @property
    def n_periods(self) -> int:
        return self.base_load.size


def net_operating_cost(
    sched: UpperSchedule,
    ev_load: np.ndarray,
    prices: np.ndarray,
    units: tuple[MtUnit, ...],
    ess: EssParams,
    dt: float = 1.0,
) -> float:
    """Operating cost of generators, storage and reserves minus EV revenue."""
    revenue = float(np.dot(np.asarray(ev_load, dtype=float), np.asarray(prices, dtype=float))) * dt
    ess_cost = float(
        np.sum(ess.discharge_price * sched.p_dc + ess.charge_price * sched.p_ch) * dt
        + np.sum(ess.reserve_price * sched.p_res) * dt
    )
    mt_cost = 0.0
    for n, unit in enumerate(units):
        mt_cost += float(
            np.sum(unit.reserve_cost * sched.r_mt[n] * dt)
            + np.sum(unit.startup_cost * sched.startup[n])
            + np.sum(sched.on[n] * (unit.fixed_fuel + unit.fuel_slope * sched.p_mt[n]) * dt)
        )
    return -revenue + ess_cost + mt_cost


# ---------------------------------------------------------------------------
# Decision encoding and repair
#
# Continuous genes per candidate: [p_mt (U*T), r_mt (U*T), p_ch (T),
# p_dc (T), p_res (T)]; binary genes: commitment states u (U*T).
# Start-up indicators are derived from commitments, not searched.
# ---------------------------------------------------------------------------


def _gene_bounds(inputs: UpperInputs) -> tuple[np.ndarray, np.ndarray, int]:
    units, ess, t = inputs.units, inputs.ess, inputs.n_periods
    u = len(units)
    lo = np.zeros(2 * u * t + 3 * t)
    hi = np.concatenate(
        [
            np.repeat([unit.p_max for unit in units], t),  # p_mt
            np.repeat([unit.p_max for unit in units], t),  # r_mt
            np.full(t, ess.p_ch_max),
            np.full(t, ess.p_dc_max),
            np.full(t, ess.p_dc_max),  # ESS reserve offer
        ]
    )
    return lo, hi, u * t


def _split_genes(x: np.ndarray, n_units: int, t: int):
    p = x.shape[0]
    ut = n_units * t
    p_mt = x[:, :ut].reshape(p, n_units, t)
    r_mt = x[:, ut : 2 * ut].reshape(p, n_units, t)
    p_ch = x[:, 2 * ut : 2 * ut + t]
    p_dc = x[:, 2 * ut + t : 2 * ut + 2 * t]
    p_res = x[:, 2 * ut + 2 * t : 2 * ut + 3 * t]
    return p_mt, r_mt, p_ch, p_dc, p_res


def _repair_population(
    p_mt: np.ndarray,
    r_mt: np.ndarray,
    p_ch: np.ndarray,
    p_dc: np.ndarray,
    p_res: np.ndarray,
    on: np.ndarray,
    inputs: UpperInputs,
):
    """Vectorized schedule construction for a population of candidates.

    Shapes: (P, U, T) for unit arrays, (P, T) for storage/system arrays.
    Returns repaired arrays plus per-candidate penalty magnitudes.
    """
    units, ess, dt = inputs.units, inputs.ess, inputs.dt
    pop, n_units, t = p_mt.shape

    p_min = np.array([u.p_min for u in units])[None, :, None]
    p_max = np.array([u.p_max for u in units])[None, :, None]

    p_mt = on * np.clip(p_mt, p_min, p_max)
    r_mt = np.clip(r_mt, 0.0, on * p_max - p_mt)

    # Storage: mutual exclusion, power limits, then an energy trajectory that
    # stays inside the capacity band and can always return to the boundary
    # state at rated power.
    keep_ch = p_ch >= p_dc
    p_ch = np.where(keep_ch, np.clip(p_ch, 0.0, ess.p_ch_max), 0.0)
    p_dc = np.where(keep_ch, 0.0, np.clip(p_dc, 0.0, ess.p_dc_max))

    gain_max = ess.eta_ch * ess.p_ch_max * dt  # kWh gained per full-charge period
    drop_max = ess.p_dc_max * dt / ess.eta_dc  # kWh shed per full-discharge period
    delta = ess.eta_ch * p_ch * dt - p_dc * dt / ess.eta_dc

    soc = np.empty((pop, t + 1))
    soc[:, 0] = ess.soc_start
    remaining = t - np.arange(1, t + 1)
    lo_reach = np.maximum(ess.soc_min, ess.soc_start - remaining * gain_max)
    hi_reach = np.minimum(ess.soc_max, ess.soc_start + remaining * drop_max)
    for k in range(t):
        step_lo = np.maximum(soc[:, k] - drop_max, lo_reach[k])
        step_hi = np.minimum(soc[:, k] + gain_max, hi_reach[k])
        soc[:, k + 1] = np.clip(soc[:, k] + delta[:, k], step_lo, step_hi)

    moves = np.diff(soc, axis=1)
    p_ch = np.maximum(moves, 0.0) / (ess.eta_ch * dt)
    p_dc = -np.minimum(moves, 0.0) * ess.eta_dc / dt

    # Storage reserve: bounded by the energy above the floor and the unused
    # discharge rating.
    res_cap = np.minimum(
        ess.eta_dc * (soc[:, :-1] - ess.soc_min) / dt, ess.p_dc_max - p_dc
    )
    res_cap = np.maximum(res_cap, 0.0)
    p_res = np.clip(p_res, 0.0, res_cap)

    # Deficit lift: close any supply shortfall from committed units' free
    # headroom, cheapest marginal fuel first.  Remaining deficit is penalized
    # (it means the commitment pattern itself is short).
    supply = p_mt.sum(axis=1) + p_dc - p_ch + inputs.renewable_expectation[None, :]
    demand = inputs.base_load[None, :] + inputs.ev_load[None, :]
    deficit = np.maximum(demand - supply, 0.0)
    for n in sorted(range(n_units), key=lambda i: (units[i].fuel_slope, i)):
        headroom = on[:, n, :] * p_max[0, n, 0] - p_mt[:, n, :] - r_mt[:, n, :]
        add = np.minimum(deficit, np.maximum(headroom, 0.0))
        p_mt[:, n, :] += add
        deficit -= add

    # Reserve lift: cover any requirement shortfall with the cheapest
    # remaining headroom so the chance constraint binds instead of penalizing.
    need = inputs.reserve_requirement[None, :] - p_res - r_mt.sum(axis=1)
    np.maximum(need, 0.0, out=need)
    order = sorted(
        [("ess", ess.reserve_price)] + [(n, units[n].reserve_cost) for n in range(n_units)],
        key=lambda item: (item[1], str(item[0])),
    )
    for source, _ in order:
        if source == "ess":
            add = np.minimum(need, res_cap - p_res)
            p_res += add
        else:
            headroom = on[:, source, :] * p_max[0, source, 0] - p_mt[:, source, :] - r_mt[:, source, :]
            add = np.minimum(need, np.maximum(headroom, 0.0))
            r_mt[:, source, :] += add
        need -= add
    reserve_short = need

    supply = p_mt.sum(axis=1) + p_dc - p_ch + inputs.renewable_expectation[None, :]
    p_un = np.maximum(supply - demand, 0.0)
    deficit = np.maximum(demand - supply, 0.0)

    startup = np.maximum(np.diff(on, axis=2, prepend=0.0), 0.0)
    return p_mt, r_mt, p_ch, p_dc, p_res, p_un, soc, startup, deficit, reserve_short


def _population_fitness(x: np.ndarray, b: np.ndarray, inputs: UpperInputs) -> np.ndarray:
    units, ess, dt = inputs.units, inputs.ess, inputs.dt
    pop = x.shape[0]
    n_units, t = len(units), inputs.n_periods
    on = b.reshape(pop, n_units, t)
    p_mt, r_mt, p_ch, p_dc, p_res, p_un, soc, startup, deficit, short = _repair_population(
        *_split_genes(x, n_units, t), on, inputs
    )

    revenue = float(np.dot(inputs.ev_load, inputs.prices)) * dt
    cost = -revenue + (
        ess.discharge_price * p_dc + ess.charge_price * p_ch + ess.reserve_price * p_res
    ).sum(axis=1) * dt
    fixed = np.array([u.fixed_fuel for u in units])[None, :, None]
    slope = np.array([u.fuel_slope for u in units])[None, :, None]
    res_c = np.array([u.reserve_cost for u in units])[None, :, None]
    start_c = np.array([u.startup_cost for u in units])[None, :, None]
    cost += (res_c * r_mt * dt + start_c * startup + on * (fixed + slope * p_mt) * dt).sum(axis=(1, 2))

    penalty = inputs.penalty_weight * (deficit.sum(axis=1) + short.sum(axis=1))
    return cost + penalty


def repair_and_close_balance(
    genes_continuous: np.ndarray, genes_binary: np.ndarray, inputs: UpperInputs
) -> UpperSchedule:
    """Decode one candidate into a schedule with the balance closed by the
    controlled-load slack (supply surplus is dumped; a deficit is left for the
    penalty)."""
    n_units, t = len(inputs.units), inputs.n_periods
    x = np.asarray(genes_continuous, dtype=float)[None, :]
    on = np.asarray(genes_binary, dtype=float).reshape(1, n_units, t)
    p_mt, r_mt, p_ch, p_dc, p_res, p_un, soc, startup, _, _ = _repair_population(
        *_split_genes(x, n_units, t), on, inputs
    )
    return UpperSchedule(
        on=on[0], startup=startup[0], p_mt=p_mt[0], r_mt=r_mt[0],
        p_ch=p_ch[0], p_dc=p_dc[0], p_res=p_res[0], p_un=p_un[0], soc=soc[0],
    )


def constraint_residuals(sched: UpperSchedule, inputs: UpperInputs) -> dict[str, float]:
    """Largest violation of each dispatch constraint (kW or kWh)."""
    units, ess, dt = inputs.units, inputs.ess, inputs.dt
    p_min = np.array([u.p_min for u in units])[:, None]
    p_max = np.array([u.p_max for u in units])[:, None]

    mt_low = np.maximum(sched.on * p_min - sched.p_mt, 0.0)
    mt_high = np.maximum(sched.p_mt - sched.on * p_max, 0.0)

    supply = sched.p_mt.sum(axis=0) + sched.p_dc - sched.p_ch + inputs.renewable_expectation
    demand = inputs.base_load + inputs.ev_load + sched.p_un
    balance = np.abs(supply - demand)

    soc_step = sched.soc[:-1] + ess.eta_ch * sched.p_ch * dt - sched.p_dc * dt / ess.eta_dc
    recursion = np.abs(sched.soc[1:] - soc_step)

    soc_bounds = np.maximum(
        np.maximum(ess.soc_min - sched.soc, 0.0), np.maximum(sched.soc - ess.soc_max, 0.0)
    )
    ess_power = np.maximum(
        np.maximum(sched.p_ch - ess.p_ch_max, 0.0), np.maximum(sched.p_dc - ess.p_dc_max, 0.0)
    )
    ess_power = np.maximum(ess_power, np.minimum(sched.p_ch, sched.p_dc))
    boundary = max(abs(sched.soc[0] - ess.soc_start), abs(sched.soc[-1] - ess.soc_start))

    headroom = np.maximum(sched.p_mt + sched.r_mt - sched.on * p_max, 0.0)
    res_cap = np.minimum(
        ess.eta_dc * (sched.soc[:-1] - ess.soc_min) / dt, ess.p_dc_max - sched.p_dc
    )
    reserve_cap = np.maximum(sched.p_res - np.maximum(res_cap, 0.0), 0.0)
    reserve_req = np.maximum(inputs.reserve_requirement - sched.total_reserve(), 0.0)

    return {
        "mt_bounds": float(np.max(mt_low + mt_high, initial=0.0)),
        "balance": float(np.max(balance, initial=0.0)),
        "soc_recursion": float(np.max(recursion, initial=0.0)),
        "soc_bounds": float(np.max(soc_bounds, initial=0.0)),
        "ess_power": float(np.max(ess_power, initial=0.0)),
        "soc_boundary": float(boundary),
        "mt_headroom": float(np.max(headroom, initial=0.0)),
        "ess_reserve_cap": float(np.max(reserve_cap, initial=0.0)),
        "reserve_requirement": float(np.max(reserve_req, initial=0.0)),
    }


def penalized_fitness(sched: UpperSchedule, inputs: UpperInputs, weight: float | None = None) -> float:
    """Net cost plus ``weight`` times the total constraint violation."""
    w = inputs.penalty_weight if weight is None else weight
    cost = net_operating_cost(sched, inputs.ev_load, inputs.prices, inputs.units, inputs.ess, inputs.dt)
    violation = sum(constraint_residuals(sched, inputs).values())
    return cost + w * violation


def encode_schedule(sched: UpperSchedule) -> tuple[np.ndarray, np.ndarray]:
    """Schedule back to gene vectors (for warm-starting a related solve)."""
    x = np.concatenate(
        [sched.p_mt.ravel(), sched.r_mt.ravel(), sched.p_ch, sched.p_dc, sched.p_res]
    )
    return x, sched.on.ravel().astype(float)


def solve_upper(
    inputs: UpperInputs, config: JayaConfig, warm_start: UpperSchedule | None = None
) -> tuple[UpperSchedule, float]:
    """Search the dispatch space; return the best feasible schedule and its cost.

    Raises :class:`InfeasibleScheduleError` when no candidate within the
    iteration budget closes the balance and the reserve requirement.
    """
    lo, hi, n_binary = _gene_bounds(inputs)
    result = optimize(
        lambda x, b: _population_fitness(x, b, inputs),
        lo,
        hi,
        n_binary=n_binary,
        config=config,
        vectorized=True,
        initial=encode_schedule(warm_start) if warm_start is not None else None,
    )
    sched = repair_and_close_balance(result.best.continuous, result.best.binary, inputs)
    residuals = constraint_residuals(sched, inputs)
    worst = max(residuals.values())
    if worst > RESIDUAL_TOL:
        offenders = {k: v for k, v in sorted(residuals.items(), key=lambda kv: -kv[1]) if v > RESIDUAL_TOL}
        raise InfeasibleScheduleError(
            f"no feasible schedule within {config.max_iter} iterations; worst residuals {offenders}",
            residuals,
        )
    cost = net_operating_cost(sched, inputs.ev_load, inputs.prices, inputs.units, inputs.ess, inputs.dt)
    return sched, cost


SCHEDULE_CSV_PREFIX = ["period", "reserve_requirement", "p_ch", "p_dc", "p_res", "p_un", "soc_start", "soc_end"]


def write_schedule_csv(path, sched: UpperSchedule, inputs: UpperInputs) -> None:
    """One row per period with every decision and the reserve requirement."""
    names = [u.name for u in inputs.units]
    header = SCHEDULE_CSV_PREFIX + [
        f"{col}_{name}" for name in names for col in ("on", "startup", "p_mt", "r_mt")
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t in range(sched.n_periods):
            row = [
                t,
                repr(float(inputs.reserve_requirement[t])),
                repr(float(sched.p_ch[t])),
                repr(float(sched.p_dc[t])),
                repr(float(sched.p_res[t])),
                repr(float(sched.p_un[t])),
                repr(float(sched.soc[t])),
                repr(float(sched.soc[t + 1])),
            ]
            for n in range(len(names)):
                row += [
                    int(sched.on[n, t]),
                    int(sched.startup[n, t]),
                    repr(float(sched.p_mt[n, t])),
                    repr(float(sched.r_mt[n, t])),
                ]
            writer.writerow(row)
