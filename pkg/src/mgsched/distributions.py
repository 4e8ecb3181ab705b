"""Probability models for renewables, base load and EV behaviour.

Continuous models are described by :class:`PdfSpec` records.  A spec carries a
density on its support plus optional point masses (the wind-power model has
atoms at zero output and at rated output, induced by the turbine power curve).
All sampling is a pure function of (parameters, count, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import integrate
from scipy.special import ndtr, ndtri

SQRT_2PI = math.sqrt(2.0 * math.pi)

# Hours in the scheduling day; arrival times live on (0, DAY_HOURS].
DAY_HOURS = 24.0


class PdfKind(str, Enum):
    BETA_PV = "beta_pv"
    WEIBULL_WT = "weibull_wt"
    NORMAL_LOAD = "normal_load"
    ARRIVAL_TIME = "arrival_time"
    MILEAGE = "mileage"
    INITIAL_SOC = "initial_soc"


@dataclass(frozen=True)
class PdfSpec:
    """A continuous probability model with optional point masses.

    ``params`` is a mapping of named real parameters whose meaning depends on
    ``kind``; ``support`` is the closed interval carrying all probability mass
    (in kW for power, hours for time, km for mileage, fraction for SOC).
    """

    kind: PdfKind
    params: dict = field(default_factory=dict)
    support: tuple = (0.0, 1.0)

    def density(self, x):
        return density(self, x)

    def atoms(self):
        return atoms(self)

    def sample(self, rng: np.random.Generator, size: int):
        return sample(self, rng, size)


def pdf_arrival(t, mu: float, sigma: float):
    """Density of the EV arrival time at hour ``t`` in (0, 24].

    The arrival clock wraps at midnight, so the density is the normal density
    folded onto one day: the dominant branch uses ``t - mu`` for
    ``t > mu - 12`` and ``t + 24 - mu`` otherwise, plus the (numerically tiny)
    images one day away so that the density integrates to one.
    """
    t = np.asarray(t, dtype=float)
    if sigma <= 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if not 12.0 < mu <= 24.0:
        raise ValueError(f"mu must lie in (12, 24], got {mu}")
    if np.any(t <= 0.0) or np.any(t > DAY_HOURS):
        raise ValueError("arrival time must lie in (0, 24]")
    out = np.zeros_like(t)
    for shift in (-DAY_HOURS, 0.0, DAY_HOURS):
        out = out + np.exp(-((t - mu + shift) ** 2) / (2.0 * sigma**2))
    return out / (SQRT_2PI * sigma)


def pdf_mileage(m, mu_log: float, sigma_log: float):
    """Density of the daily mileage at ``m`` km (lognormal in ``m``)."""
    m = np.asarray(m, dtype=float)
    if sigma_log <= 0.0:
        raise ValueError(f"sigma must be positive, got {sigma_log}")
    if np.any(m <= 0.0):
        raise ValueError("mileage must be positive")
    return np.exp(-((np.log(m) - mu_log) ** 2) / (2.0 * sigma_log**2)) / (SQRT_2PI * sigma_log * m)


def lognormal_params_from_moments(mean: float, std: float) -> tuple[float, float]:
    """Log-space (mu, sigma) of the lognormal with the given natural-unit moments."""
    if mean <= 0.0 or std <= 0.0:
        raise ValueError("mean and std must be positive")
    sigma2 = math.log(1.0 + (std / mean) ** 2)
    return math.log(mean) - 0.5 * sigma2, math.sqrt(sigma2)


def beta_pv_pdf(alpha: float, beta: float, p_rated: float) -> PdfSpec:
    """PV power model: Beta-distributed fraction of the rated output."""
    if p_rated < 0.0:
        raise ValueError("rated power must be non-negative")
    if p_rated == 0.0:
        # Night hours: all mass at zero output.
        return PdfSpec(PdfKind.BETA_PV, {"alpha": alpha, "beta": beta, "p_rated": 0.0}, (0.0, 0.0))
    if alpha <= 0.0 or beta <= 0.0:
        raise ValueError("Beta shape parameters must be positive")
    return PdfSpec(PdfKind.BETA_PV, {"alpha": alpha, "beta": beta, "p_rated": p_rated}, (0.0, p_rated))


def weibull_wt_pdf(k: float, c: float, v_in: float, v_rated: float, v_out: float, p_rated: float) -> PdfSpec:
    """Wind power model: Weibull wind speed through a piecewise-linear power curve."""
    if p_rated < 0.0:
        raise ValueError("rated power must be non-negative")
    if p_rated == 0.0:
        return PdfSpec(PdfKind.WEIBULL_WT, {"k": k, "c": c, "v_in": v_in, "v_rated": v_rated, "v_out": v_out, "p_rated": 0.0}, (0.0, 0.0))
    if k <= 0.0 or c <= 0.0:
        raise ValueError("Weibull parameters must be positive")
    if not 0.0 <= v_in < v_rated < v_out:
        raise ValueError("wind speeds must satisfy 0 <= cut-in < rated < cut-out")
    params = {"k": k, "c": c, "v_in": v_in, "v_rated": v_rated, "v_out": v_out, "p_rated": p_rated}
    return PdfSpec(PdfKind.WEIBULL_WT, params, (0.0, p_rated))


def normal_load_pdf(mean: float, std: float) -> PdfSpec:
    if mean <= 0.0 or std <= 0.0:
        raise ValueError("load mean and std must be positive")
    lo = max(0.0, mean - 8.0 * std)
    return PdfSpec(PdfKind.NORMAL_LOAD, {"mean": mean, "std": std}, (lo, mean + 8.0 * std))


def arrival_pdf(mu: float, sigma: float) -> PdfSpec:
    return PdfSpec(PdfKind.ARRIVAL_TIME, {"mu": mu, "sigma": sigma}, (0.0, DAY_HOURS))


def mileage_pdf(mu_log: float, sigma_log: float) -> PdfSpec:
    upper = math.exp(mu_log + 10.0 * sigma_log)
    return PdfSpec(PdfKind.MILEAGE, {"mu_log": mu_log, "sigma_log": sigma_log}, (0.0, upper))


def initial_soc_pdf(mean: float, std: float, lo: float, hi: float) -> PdfSpec:
    """Initial EV state of charge: normal truncated to [lo, hi]."""
    if not lo < hi:
        raise ValueError("truncation bounds must satisfy lo < hi")
    if std <= 0.0:
        raise ValueError("std must be positive")
    return PdfSpec(PdfKind.INITIAL_SOC, {"mean": mean, "std": std, "lo": lo, "hi": hi}, (lo, hi))


def _weibull_sf(v, k, c):
    return np.exp(-((np.asarray(v, dtype=float) / c) ** k))


def density(spec: PdfSpec, x):
    """Continuous density of ``spec`` at ``x`` (excluding point masses)."""
    x = np.asarray(x, dtype=float)
    p = spec.params
    if spec.kind is PdfKind.BETA_PV:
        pr = p["p_rated"]
        if pr == 0.0:
            return np.zeros_like(x)
        from scipy.stats import beta as beta_dist

        return beta_dist.pdf(x / pr, p["alpha"], p["beta"]) / pr
    if spec.kind is PdfKind.WEIBULL_WT:
        pr = p["p_rated"]
        if pr == 0.0:
            return np.zeros_like(x)
        k, c = p["k"], p["c"]
        dv_dp = (p["v_rated"] - p["v_in"]) / pr
        v = p["v_in"] + x * dv_dp
        f_v = (k / c) * (v / c) ** (k - 1.0) * _weibull_sf(v, k, c)
        out = f_v * dv_dp
        return np.where((x > 0.0) & (x < pr), out, 0.0)
    if spec.kind is PdfKind.NORMAL_LOAD:
        mean, std = p["mean"], p["std"]
        return np.exp(-((x - mean) ** 2) / (2.0 * std**2)) / (SQRT_2PI * std)
    if spec.kind is PdfKind.ARRIVAL_TIME:
        return pdf_arrival(x, p["mu"], p["sigma"])
    if spec.kind is PdfKind.MILEAGE:
        return pdf_mileage(x, p["mu_log"], p["sigma_log"])
    if spec.kind is PdfKind.INITIAL_SOC:
        mean, std, lo, hi = p["mean"], p["std"], p["lo"], p["hi"]
        z = ndtr((hi - mean) / std) - ndtr((lo - mean) / std)
        raw = np.exp(-((x - mean) ** 2) / (2.0 * std**2)) / (SQRT_2PI * std * z)
        return np.where((x >= lo) & (x <= hi), raw, 0.0)
    raise ValueError(f"unknown pdf kind {spec.kind}")


def atoms(spec: PdfSpec) -> list[tuple[float, float]]:
    """Point masses of ``spec`` as (location, probability) pairs."""
    p = spec.params
    if spec.kind is PdfKind.BETA_PV and p["p_rated"] == 0.0:
        return [(0.0, 1.0)]
    if spec.kind is PdfKind.WEIBULL_WT:
        pr = p["p_rated"]
        if pr == 0.0:
            return [(0.0, 1.0)]
        k, c = p["k"], p["c"]
        at_zero = 1.0 - _weibull_sf(p["v_in"], k, c) + _weibull_sf(p["v_out"], k, c)
        at_rated = _weibull_sf(p["v_rated"], k, c) - _weibull_sf(p["v_out"], k, c)
        return [(0.0, float(at_zero)), (pr, float(at_rated))]
    return []


def total_mass(spec: PdfSpec) -> float:
    """Integral of the density over the support plus all point masses."""
    lo, hi = spec.support
    mass = sum(weight for _, weight in atoms(spec))
    if hi > lo:
        if spec.kind is PdfKind.MILEAGE:
            hi = np.inf
        integral, _ = integrate.quad(lambda x: float(density(spec, x)), lo, hi, limit=200)
        mass += integral
    return float(mass)


def sample(spec: PdfSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    p = spec.params
    if spec.kind is PdfKind.BETA_PV:
        if p["p_rated"] == 0.0:
            return np.zeros(size)
        return rng.beta(p["alpha"], p["beta"], size=size) * p["p_rated"]
    if spec.kind is PdfKind.WEIBULL_WT:
        if p["p_rated"] == 0.0:
            return np.zeros(size)
        v = p["c"] * rng.weibull(p["k"], size=size)
        return _power_curve(v, p)
    if spec.kind is PdfKind.NORMAL_LOAD:
        return rng.normal(p["mean"], p["std"], size=size)
    if spec.kind is PdfKind.ARRIVAL_TIME:
        t = np.mod(rng.normal(p["mu"], p["sigma"], size=size), DAY_HOURS)
        return np.where(t == 0.0, DAY_HOURS, t)
    if spec.kind is PdfKind.MILEAGE:
        return np.exp(rng.normal(p["mu_log"], p["sigma_log"], size=size))
    if spec.kind is PdfKind.INITIAL_SOC:
        # Inverse-CDF truncation: exact and seedable; the clip only guards the
        # boundaries against floating-point round-off.
        mean, std, lo, hi = p["mean"], p["std"], p["lo"], p["hi"]
        u_lo = ndtr((lo - mean) / std)
        u_hi = ndtr((hi - mean) / std)
        u = rng.uniform(u_lo, u_hi, size=size)
        return np.clip(mean + std * ndtri(u), lo, hi)
    raise ValueError(f"unknown pdf kind {spec.kind}")


def _power_curve(v: np.ndarray, p: dict) -> np.ndarray:
    pr = p["p_rated"]
    ramp = pr * (v - p["v_in"]) / (p["v_rated"] - p["v_in"])
    out = np.clip(ramp, 0.0, pr)
    return np.where(v >= p["v_out"], 0.0, out)


@dataclass(frozen=True)
class PeriodForecast:
    """One scheduling hour's renewable models and base-load statistics."""

    period: int
    pv_pdf: PdfSpec
    wt_pdf: PdfSpec
    load_mean: float
    load_stddev: float

    def __post_init__(self):
        if not 0 <= self.period < int(DAY_HOURS):
            raise ValueError(f"period must be an hour index 0..23, got {self.period}")
        if self.load_mean < 0.0 or self.load_stddev < 0.0:
            raise ValueError("load statistics must be non-negative")


def make_forecast(period: int, pv_pdf: PdfSpec, wt_pdf: PdfSpec, load_mean: float, load_fluctuation: float) -> PeriodForecast:
    """Build a :class:`PeriodForecast` with stddev tied to the fluctuation fraction."""
    return PeriodForecast(period, pv_pdf, wt_pdf, load_mean, load_fluctuation * load_mean)


@dataclass(frozen=True)
class FleetParams:
    """EV technical parameters plus behaviour distributions for fleet sampling."""

    battery_capacity: float  # kWh
    rated_power: float  # kW
    charge_efficiency: float
    e_per_100km: float  # kWh per 100 km
    soc_min: float
    soc_max: float
    soc_expected: float
    arrival_mu: float  # hours
    arrival_sigma: float
    mileage_log_mu: float
    mileage_log_sigma: float
    soc_initial_mean: float = 0.5
    soc_initial_std: float = 0.1

    def ev_params(self):
        from mgsched.ev_fleet import EvParams

        return EvParams(
            battery_capacity=self.battery_capacity,
            rated_power=self.rated_power,
            charge_efficiency=self.charge_efficiency,
            e_per_100km=self.e_per_100km,
            soc_min=self.soc_min,
            soc_max=self.soc_max,
            soc_expected=self.soc_expected,
        )


def sample_fleet(fleet: FleetParams, count: int, seed: int) -> list:
    """Draw ``count`` EV sessions (arrival, mileage, initial SOC, charge target).

    Deterministic given ``seed``.  Arrival wraps modulo 24 h, mileage is
    lognormal, and the initial SOC is normal truncated to
    [soc_min, soc_expected] so every vehicle still needs charge on arrival.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    from mgsched.ev_fleet import EvSession, soc_target

    rng = np.random.default_rng(seed)
    arrivals = sample(arrival_pdf(fleet.arrival_mu, fleet.arrival_sigma), rng, count)
    mileages = sample(mileage_pdf(fleet.mileage_log_mu, fleet.mileage_log_sigma), rng, count)
    soc_spec = initial_soc_pdf(fleet.soc_initial_mean, fleet.soc_initial_std, fleet.soc_min, fleet.soc_expected)
    soc_initial = sample(soc_spec, rng, count)

    ev = fleet.ev_params()
    sessions = []
    for i in range(count):
        target = soc_target(float(soc_initial[i]), float(mileages[i]), ev)
        sessions.append(
            EvSession(
                ev_id=i,
                arrival_hour=float(arrivals[i]),
                mileage=float(mileages[i]),
                soc_initial=float(soc_initial[i]),
                soc_target=target,
                required_energy=(target - float(soc_initial[i])) * ev.battery_capacity,
            )
        )
    return sessions
