"""Per-EV charging arithmetic and fleet-scenario assembly.

A charging session records one vehicle's arrival, travel demand and state of
charge, plus the window of whole scheduling periods in which it may charge.
Windows are contiguous and never cross midnight; sessions whose truncated
window cannot absorb the full charge target are flagged (or rejected in
strict mode).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

HORIZON = 24  # hourly periods per scheduling day


class InfeasibleSessionError(ValueError):
    """Raised when sessions cannot receive their required energy in-window."""

    def __init__(self, ev_ids: list, message: str | None = None):
        self.ev_ids = list(ev_ids)
        super().__init__(
            message or f"sessions cannot be fully charged within their windows: EVs {self.ev_ids}"
        )


@dataclass(frozen=True)
class EvParams:
    battery_capacity: float  # kWh
    rated_power: float  # kW
    charge_efficiency: float
    e_per_100km: float  # kWh per 100 km driven
    soc_min: float
    soc_max: float
    soc_expected: float

    def __post_init__(self):
        if not 0.0 <= self.soc_min < self.soc_expected <= self.soc_max <= 1.0:
            raise ValueError("SOC fractions must satisfy 0 <= min < expected <= max <= 1")
        if self.battery_capacity <= 0.0 or self.rated_power <= 0.0:
            raise ValueError("battery capacity and rated power must be positive")
        if not 0.0 < self.charge_efficiency <= 1.0:
            raise ValueError("charge efficiency must lie in (0, 1]")


@dataclass(frozen=True)
class EvSession:
    ev_id: int
    arrival_hour: float
    mileage: float  # km
    soc_initial: float
    soc_target: float
    required_energy: float  # kWh delivered into the battery
    window: tuple[int, ...] = ()
    target_truncated: bool = False

    def __post_init__(self):
        if self.soc_target < self.soc_initial - 1e-12:
            raise ValueError("target SOC cannot be below the initial SOC")
        if self.soc_target > 1.0 + 1e-12:
            raise ValueError("target SOC cannot exceed a full battery")
        if self.required_energy < -1e-12:
            raise ValueError("required energy must be non-negative")


def soc_target(soc_initial: float, mileage: float, params: EvParams) -> float:
    """Charge target: initial SOC plus the travel need, boxed into
    [soc_expected, soc_max]."""
    if not params.soc_min <= soc_initial <= params.soc_expected + 1e-12:
        raise ValueError(
            f"initial SOC {soc_initial} outside [{params.soc_min}, {params.soc_expected}]"
        )
    if mileage < 0.0:
        raise ValueError("mileage must be non-negative")
    raw = soc_initial + mileage * params.e_per_100km / (100.0 * params.battery_capacity)
    return min(max(raw, params.soc_expected), params.soc_max)


def charging_time(soc_target_val: float, soc_initial: float, params: EvParams, t_max: float | None = None) -> float:
    """Hours of rated-power charging needed to lift the SOC gap."""
    if soc_target_val < soc_initial:
        raise ValueError("target SOC must not be below the initial SOC")
    hours = (soc_target_val - soc_initial) * params.battery_capacity / (
        params.rated_power * params.charge_efficiency
    )
    if t_max is not None and hours > t_max + 1e-12:
        raise InfeasibleSessionError([], f"charging time {hours:.3f} h exceeds the {t_max} h limit")
    return hours


def build_windows(
    sessions: list[EvSession],
    params: EvParams,
    max_dwell: float = 6.0,
    horizon: int = HORIZON,
    strict: bool = False,
) -> list[EvSession]:
    """Attach charging windows to sessions.

    The window runs from the first whole period after arrival for ``max_dwell``
    periods, truncated at the end of the day.  ``max_dwell`` is auto-raised to
    the fleet's rated-power feasibility minimum.  Sessions that still cannot
    absorb their required energy (late arrivals cut off at midnight) have the
    target clamped to the deliverable maximum and are flagged; with
    ``strict=True`` they raise :class:`InfeasibleSessionError` instead.
    """
    if max_dwell <= 0.0:
        raise ValueError("max_dwell must be positive")
    per_period = params.rated_power * params.charge_efficiency  # kWh per period
    needed = max(
        (math.ceil(s.required_energy / per_period - 1e-9) for s in sessions), default=0
    )
    dwell = max(int(math.ceil(max_dwell)), needed, 1)

    out = []
    starved = []
    for s in sessions:
        start = min(int(math.ceil(s.arrival_hour)), horizon - 1)
        window = tuple(range(start, min(start + dwell, horizon)))
        deliverable = len(window) * per_period
        if s.required_energy <= deliverable + 1e-9:
            out.append(replace(s, window=window))
        else:
            starved.append(s.ev_id)
            capped_energy = deliverable
            capped_target = s.soc_initial + capped_energy / params.battery_capacity
            out.append(
                replace(
                    s,
                    window=window,
                    soc_target=capped_target,
                    required_energy=capped_energy,
                    target_truncated=True,
                )
            )
    if starved and strict:
        raise InfeasibleSessionError(starved)
    return out


SESSION_CSV_COLUMNS = [
    "ev_id",
    "arrival",
    "mileage",
    "soc_initial",
    "soc_target",
    "window_start",
    "window_end",
    "required_energy",
]


def write_sessions_csv(path, sessions: list[EvSession]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SESSION_CSV_COLUMNS)
        for s in sessions:
            start = s.window[0] if s.window else -1
            end = s.window[-1] + 1 if s.window else -1
            writer.writerow(
                [s.ev_id, repr(s.arrival_hour), repr(s.mileage), repr(s.soc_initial),
                 repr(s.soc_target), start, end, repr(s.required_energy)]
            )


def read_sessions_csv(path) -> list[EvSession]:
    sessions = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SESSION_CSV_COLUMNS:
            raise ValueError(f"unexpected session CSV header: {reader.fieldnames}")
        for row in reader:
            start, end = int(row["window_start"]), int(row["window_end"])
            window = tuple(range(start, end)) if start >= 0 else ()
            sessions.append(
                EvSession(
                    ev_id=int(row["ev_id"]),
                    arrival_hour=float(row["arrival"]),
                    mileage=float(row["mileage"]),
                    soc_initial=float(row["soc_initial"]),
                    soc_target=float(row["soc_target"]),
                    required_energy=float(row["required_energy"]),
                    window=window,
                )
            )
    return sessions
