"""EV-fleet charging as a linear program solved by an interior-point method.

The program minimizes the fleet's billed energy cost over per-EV per-period
charging powers, subject to per-period aggregate feed limits, per-EV power
boxes, and per-EV delivered-energy bands (at least the charge target, at most
a full battery).  Billing is grid-side; the battery receives the charge
efficiency times the grid draw.

The solver is an infeasible-start primal-dual path-following method with a
Mehrotra-style centering parameter on the pure-inequality form

    minimize c'x  subject to  G x <= h.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, lu_factor, lu_solve

from mgsched.ev_fleet import EvParams, EvSession

FEASIBILITY_SLACK = 1e-9


class StructuralInfeasibilityError(ValueError):
    """Charging demand provably cannot fit the windows and feed limits."""

    def __init__(self, ev_ids: list, message: str):
        self.ev_ids = list(ev_ids)
        super().__init__(message)


class IpmError(RuntimeError):
    """Interior-point solve failed; carries the last residual snapshot."""

    def __init__(self, message: str, residuals: dict | None = None):
        self.residuals = residuals or {}
        super().__init__(message)


@dataclass(frozen=True)
class StationParams:
    investment: float  # $ up-front for the charging station
    lifetime_years: float

    @property
    def daily_cost(self) -> float:
        return self.investment / (365.0 * self.lifetime_years)


@dataclass
class LpProblem:
    """min c'x + constant  s.t.  G x <= h, with one column per (EV, period)."""

    c: np.ndarray
    G: np.ndarray
    h: np.ndarray
    constant: float
    columns: list[tuple[int, int]]  # (session index, period) per variable
    n_sessions: int
    n_periods: int

    @property
    def n_vars(self) -> int:
        return self.c.size


@dataclass
class ChargingPlan:
    p_ev: np.ndarray  # (n_sessions, n_periods) kW, grid side
    ev_load: np.ndarray  # (n_periods,) kW
    variable_cost: float  # $
    total_cost: float  # $ including station amortization
    duality_gap: float
    iterations: int


def build_lp(
    sessions: list[EvSession],
    ev: EvParams,
    prices: np.ndarray,
    caps: np.ndarray,
    station: StationParams,
    dt: float = 1.0,
) -> LpProblem:
    """Assemble the charging LP for one pricing iteration.

    ``caps`` is the per-period aggregate feed limit in kW.  Sessions that
    provably cannot receive their required energy (window too small against
    rated power and caps) are reported before any solve.
    """
    prices = np.asarray(prices, dtype=float)
    caps = np.asarray(caps, dtype=float)
    n_periods = prices.size
    if caps.size != n_periods:
        raise ValueError("caps and prices must cover the same periods")
    if np.any(caps < 0.0):
        raise ValueError("feed limits must be non-negative")

    _check_structure(sessions, ev, caps, dt)

    columns = [(i, t) for i, s in enumerate(sessions) for t in s.window]
    n = len(columns)
    eta = ev.charge_efficiency

    if n == 0:
        return LpProblem(
            c=np.zeros(0), G=np.zeros((0, 0)), h=np.zeros(0),
            constant=station.daily_cost, columns=[], n_sessions=len(sessions), n_periods=n_periods,
        )

    c = np.array([prices[t] * dt for _, t in columns])

    rows: list[np.ndarray] = []
    rhs: list[float] = []

    # Per-variable power box (rated limit and non-negativity).
    eye = np.eye(n)
    rows.append(eye)
    rhs.extend([ev.rated_power] * n)
    rows.append(-eye)
    rhs.extend([0.0] * n)

    # Per-period aggregate feed limit.
    used_periods = sorted({t for _, t in columns})
    cap_block = np.zeros((len(used_periods), n))
    for r, t in enumerate(used_periods):
        for j, (_, tj) in enumerate(columns):
            if tj == t:
                cap_block[r, j] = 1.0
    rows.append(cap_block)
    rhs.extend(caps[t] for t in used_periods)

    # Per-EV delivered-energy band: required <= eta * sum(p) * dt <= room to full.
    energy_block = np.zeros((2 * len(sessions), n))
    for i, s in enumerate(sessions):
        coeff = np.array([eta * dt if ci == i else 0.0 for ci, _ in columns])
        energy_block[2 * i] = -coeff
        energy_block[2 * i + 1] = coeff
        rhs.append(-s.required_energy)
        rhs.append((1.0 - s.soc_initial) * ev.battery_capacity)
    rows.append(energy_block)

    G = np.vstack(rows)
    h = np.array(rhs)
    return LpProblem(
        c=c, G=G, h=h, constant=station.daily_cost,
        columns=columns, n_sessions=len(sessions), n_periods=n_periods,
    )


def _check_structure(sessions: list[EvSession], ev: EvParams, caps: np.ndarray, dt: float) -> None:
    eta = ev.charge_efficiency
    starved = []
    for s in sessions:
        if not s.window:
            starved.append(s.ev_id)
            continue
        deliverable = sum(min(ev.rated_power, caps[t]) for t in s.window) * eta * dt
        if s.required_energy > deliverable + FEASIBILITY_SLACK:
            starved.append(s.ev_id)
    if starved:
        raise StructuralInfeasibilityError(
            starved, f"required energy exceeds window capacity for EVs {starved}"
        )

    # Interval load check: every period range must carry the demand of the
    # sessions confined to it (necessary condition; ignores per-EV rate caps).
    windows = [(s.window[0], s.window[-1]) for s in sessions if s.window]
    reqs = [s.required_energy for s in sessions if s.window]
    bounds = sorted({w for pair in windows for w in pair})
    for a in bounds:
        for b in bounds:
            if a > b:
                continue
            demand = sum(r for (lo, hi), r in zip(windows, reqs) if lo >= a and hi <= b)
            supply = float(np.sum(caps[a : b + 1])) * eta * dt
            if demand > supply + FEASIBILITY_SLACK:
                inside = [s.ev_id for s in sessions if s.window and s.window[0] >= a and s.window[-1] <= b]
                raise StructuralInfeasibilityError(
                    inside,
                    f"periods {a}..{b} must deliver {demand:.3f} kWh but feed limits allow {supply:.3f} kWh",
                )


def solve_inequality_lp(
    c: np.ndarray,
    G: np.ndarray,
    h: np.ndarray,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> tuple[np.ndarray, dict]:
    """Solve min c'x s.t. G x <= h by a primal-dual interior-point method.

    Returns the primal solution and an info dict with the certified duality
    gap, residuals and iteration count.  Raises :class:`IpmError` when the
    iteration budget runs out or the KKT system degenerates.
    """
    c = np.asarray(c, dtype=float)
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    n = c.size
    m = h.size
    if n == 0:
        return np.zeros(0), {"gap": 0.0, "iterations": 0, "primal_residual": 0.0, "dual_residual": 0.0, "max_comp": 0.0}
    if m == 0:
        raise ValueError("an LP without inequality rows is unbounded in this form")

    x = np.zeros(n)
    s = np.maximum(h - G @ x, 1.0)
    z = np.ones(m)

    h_scale = 1.0 + float(np.max(np.abs(h)))
    c_scale = 1.0 + float(np.max(np.abs(c)))
    beta = 0.995  # fraction-to-the-boundary

    def residuals():
        r_dual = c + G.T @ z
        r_prim = G @ x + s - h
        gap = abs(float(c @ x + h @ z)) / (1.0 + abs(float(c @ x)))
        return r_prim, r_dual, gap

    for it in range(1, max_iter + 1):
        r_prim, r_dual, gap = residuals()
        comp = s * z
        mu = float(comp.mean())
        if (
            not (np.all(np.isfinite(r_prim)) and np.all(np.isfinite(r_dual)) and np.isfinite(mu))
            or max(float(np.max(s)), float(np.max(z))) > 1e30
        ):
            raise IpmError(
                f"iterates diverged at iteration {it}",
                {"mu": mu, "gap": gap},
            )
        if (
            np.max(np.abs(r_prim)) <= tol * h_scale
            and np.max(np.abs(r_dual)) <= tol * c_scale
            and gap <= tol
            and float(comp.max()) <= 10.0 * tol
        ):
            return x, {
                "gap": gap,
                "iterations": it - 1,
                "primal_residual": float(np.max(np.abs(r_prim))),
                "dual_residual": float(np.max(np.abs(r_dual))),
                "max_comp": float(comp.max()),
            }

        # Augmented KKT system in (dx, dz); forming the normal equations
        # G' diag(z/s) G loses too much precision once the optimal face is
        # degenerate and z/s spans many orders of magnitude.  A primal/dual
        # regularization pair is escalated until the factorization produces
        # finite steps.
        kkt = np.zeros((n + m, n + m))
        kkt[:n, n:] = G.T
        kkt[n:, :n] = G
        diag = np.arange(n + m)

        def newton(r_comp):
            rhs = np.concatenate([-r_dual, -r_prim + r_comp / z])
            step = lu_solve(factor, rhs, check_finite=False)
            if np.all(np.isfinite(step)):
                step += lu_solve(factor, rhs - kkt @ step, check_finite=False)
            dx, dz = step[:n], step[n:]
            ds = -r_prim - G @ dx if np.all(np.isfinite(dx)) else np.full(m, np.nan)
            return dx, ds, dz

        step_limit = 1e10 * (1.0 + float(np.max(s)) + float(np.max(z)))
        dx_a = None
        for reg in (0.0, 1e-10, 1e-7, 1e-4):
            kkt[diag[:n], diag[:n]] = reg
            kkt[diag[n:], diag[n:]] = -s / z - reg
            try:
                factor = lu_factor(kkt, check_finite=False)
                candidate = newton(comp)
            except (LinAlgError, ValueError):
                continue
            if all(np.all(np.isfinite(d)) and np.max(np.abs(d), initial=0.0) < step_limit for d in candidate):
                dx_a, ds_a, dz_a = candidate
                break
        if dx_a is None:
            raise IpmError(
                f"KKT factorization degenerated at iteration {it}", {"mu": mu, "gap": gap}
            )

        # Predictor (affine) step.
        alpha_p = _max_step(s, ds_a)
        alpha_d = _max_step(z, dz_a)
        mu_aff = float((s + alpha_p * ds_a) @ (z + alpha_d * dz_a)) / m
        sigma = (max(mu_aff, 0.0) / mu) ** 3 if mu > 0 else 0.0

        # Keep the barrier parameter from collapsing while residuals are still
        # large; otherwise the scaling blows up and Newton accuracy is lost.
        mu_floor = 0.1 * tol * (1.0 + abs(float(c @ x))) / m
        if mu > 0.0:
            sigma = max(sigma, min(0.9, mu_floor / mu))

        # Corrector with centering.
        dx, ds, dz = newton(comp + ds_a * dz_a - sigma * mu)
        if not all(np.all(np.isfinite(d)) for d in (dx, ds, dz)):
            dx, ds, dz = dx_a, ds_a, dz_a
        alpha_p = min(1.0, beta * _max_step(s, ds))
        alpha_d = min(1.0, beta * _max_step(z, dz))
        for _ in range(20):
            mu_next = float((s + alpha_p * ds) @ (z + alpha_d * dz)) / m
            if mu_next >= mu_floor or max(alpha_p, alpha_d) < 1e-4:
                break
            alpha_p *= 0.7
            alpha_d *= 0.7

        x = x + alpha_p * dx
        s = s + alpha_p * ds
        z = z + alpha_d * dz

    r_prim, r_dual, gap = residuals()
    raise IpmError(
        f"no convergence within {max_iter} iterations "
        f"(primal {np.max(np.abs(r_prim)):.2e}, dual {np.max(np.abs(r_dual)):.2e}, gap {gap:.2e})",
        {
            "primal_residual": float(np.max(np.abs(r_prim))),
            "dual_residual": float(np.max(np.abs(r_dual))),
            "gap": gap,
        },
    )


def _max_step(v: np.ndarray, dv: np.ndarray) -> float:
    shrink = dv < 0.0
    if not np.any(shrink):
        return 1.0
    return float(min(1.0, np.min(-v[shrink] / dv[shrink])))


def ipm_solve(lp: LpProblem, tol: float = 1e-8, max_iter: int = 100, dt: float = 1.0) -> ChargingPlan:
    """Solve the charging LP and assemble the plan matrix."""
    x, info = solve_inequality_lp(lp.c, lp.G, lp.h, tol=tol, max_iter=max_iter)
    p_ev = np.zeros((lp.n_sessions, lp.n_periods))
    for value, (i, t) in zip(x, lp.columns):
        p_ev[i, t] = max(0.0, float(value))
    ev_load = p_ev.sum(axis=0)
    variable_cost = float(x @ lp.c) if lp.n_vars else 0.0
    return ChargingPlan(
        p_ev=p_ev,
        ev_load=ev_load,
        variable_cost=variable_cost,
        total_cost=variable_cost + lp.constant,
        duality_gap=info["gap"],
        iterations=info["iterations"],
    )


def charging_cost(plan: ChargingPlan, prices: np.ndarray, station: StationParams, dt: float = 1.0) -> float:
    """Fleet bill at the given prices plus daily station amortization."""
    prices = np.asarray(prices, dtype=float)
    return float(np.dot(prices, plan.ev_load) * dt) + station.daily_cost


def plan_residuals(plan: ChargingPlan, lp: LpProblem) -> float:
    """Largest constraint violation of the plan against its LP (kW / kWh)."""
    if lp.n_vars == 0:
        return 0.0
    x = np.array([plan.p_ev[i, t] for i, t in lp.columns])
    return float(np.max(np.maximum(lp.G @ x - lp.h, 0.0), initial=0.0))


def write_plan_csv(path, plan: ChargingPlan, session_ids: list[int]) -> None:
    """EV-by-period charging matrix with a trailing aggregate row."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ev_id"] + [f"p{t}" for t in range(plan.p_ev.shape[1])])
        for ev_id, row in zip(session_ids, plan.p_ev):
            writer.writerow([ev_id] + [repr(float(v)) for v in row])
        writer.writerow(["total"] + [repr(float(v)) for v in plan.ev_load])
