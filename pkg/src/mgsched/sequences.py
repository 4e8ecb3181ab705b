"""Discrete probability sequences for renewable power.

A continuous power distribution is discretized on a fixed kW grid into a
probability sequence; sequences of independent sources are combined by
convolution (the distribution of the summed output).  The sequence of the
joint output converts the probabilistic spinning-reserve requirement into a
deterministic minimum-reserve value at a given confidence level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from mgsched.distributions import PdfSpec, atoms, density

SUM_TOL = 1e-9
DISCRETIZATION_TOL = 1e-6


class DiscretizationError(ValueError):
    """Probability mass lost in excess of the discretization tolerance."""


@dataclass(frozen=True)
class ProbSequence:
    """Probabilities on the grid 0, q, 2q, ... (index i carries power i*q kW)."""

    step_q: float
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", np.asarray(self.probs, dtype=float))
        if self.step_q <= 0.0:
            raise ValueError(f"step must be positive, got {self.step_q}")
        if self.probs.ndim != 1 or self.probs.size == 0:
            raise ValueError("probs must be a non-empty 1-D array")
        if np.any(self.probs < -1e-15) or np.any(self.probs > 1.0 + 1e-12):
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(float(self.probs.sum()) - 1.0) > SUM_TOL:
            raise ValueError(f"probabilities sum to {self.probs.sum()}, not 1")

    def __len__(self):
        return self.probs.size

    @property
    def powers(self) -> np.ndarray:
        return self.step_q * np.arange(self.probs.size)


def discretize(pdf: PdfSpec, p_max: float, q: float) -> ProbSequence:
    """Bin a power distribution onto the grid with step ``q``.

    Bin 0 covers [0, q/2); interior bin i covers [i*q - q/2, i*q + q/2); the
    final bin covers the remainder up to ``p_max``.  Point masses are added to
    the bin containing them.  Residual mass error below ``1e-6`` is
    renormalized away; anything larger raises :class:`DiscretizationError`.
    """
    if q <= 0.0:
        raise ValueError("step q must be positive")
    if p_max < 0.0:
        raise ValueError("p_max must be non-negative")
    point_masses = atoms(pdf)
    if p_max == 0.0:
        return ProbSequence(q, np.array([1.0]))
    if p_max < q:
        raise ValueError(f"p_max = {p_max} must be at least one step q = {q}")

    n = int(math.ceil(p_max / q))
    edges = np.empty(n + 2)
    edges[0] = 0.0
    edges[1 : n + 1] = (np.arange(1, n + 1) - 0.5) * q
    edges[n + 1] = p_max
    edges = np.minimum(edges, p_max)

    probs = np.zeros(n + 1)
    atom_mass = 0.0
    for loc, weight in point_masses:
        # nearest grid index, so an atom lands in the same bin as samples at
        # its location (the final bin can be empty when p_max < (n - 1/2) q)
        idx = int(np.floor(min(loc, p_max) / q + 0.5))
        probs[min(idx, n)] += weight
        atom_mass += weight
    if atom_mass < 1.0 - 1e-12:
        for i in range(n + 1):
            lo, hi = edges[i], edges[i + 1]
            if hi > lo:
                val, _ = integrate.quad(lambda x: float(density(pdf, x)), lo, hi, limit=200)
                probs[i] += val

    total = float(probs.sum())
    if abs(total - 1.0) > DISCRETIZATION_TOL:
        raise DiscretizationError(
            f"discretized mass {total} deviates from 1 beyond {DISCRETIZATION_TOL}"
        )
    return ProbSequence(q, probs / total)


def convolve(a: ProbSequence, b: ProbSequence) -> ProbSequence:
    """Sequence of the sum of two independent sequence-valued outputs."""
    if abs(a.step_q - b.step_q) > 1e-12:
        raise ValueError(f"step mismatch: {a.step_q} vs {b.step_q}")
    c = np.convolve(a.probs, b.probs)
    return ProbSequence(a.step_q, c / c.sum())


def expectation(c: ProbSequence) -> float:
    """Expected power of the sequence in kW."""
    return float(np.dot(c.powers, c.probs))


def min_reserve_for_confidence(c: ProbSequence, gamma: float) -> float:
    """Smallest reserve R >= 0 covering the shortfall below the expected output
    with probability at least ``gamma``.

    A reserve R protects against all grid outcomes u*q with R >= E - u*q, so
    the coverage of R = E - u*q is the upper-tail probability from index u.
    The tail is non-increasing in u, hence the minimum reserve corresponds to
    the largest u whose tail still reaches ``gamma``.
    """
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"confidence level must lie in (0, 1], got {gamma}")
    tail = np.cumsum(c.probs[::-1])[::-1]
    covered = np.nonzero(tail >= gamma - 1e-12)[0]
    u_star = int(covered[-1]) if covered.size else 0
    return max(0.0, expectation(c) - u_star * c.step_q)
