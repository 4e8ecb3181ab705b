"""JAYA population optimizer with hybrid real/binary coding.

Candidates drift toward the best population member and away from the worst;
improvements are accepted greedily, so the best-so-far fitness is monotone
non-increasing.  A stagnation monitor compares consecutive population fitness
variances and re-initializes a fraction of the non-best individuals when the
ratio settles inside a narrow band.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class JayaConfig:
    pop_size: int = 100
    max_iter: int = 1500
    seed: int = 0
    thr1: float = 0.99
    thr2: float = 1.01
    restart_fraction: float = 0.2
    # Iterations to let a disturbance play out before the monitor may fire
    # again; without it, back-to-back restarts starve fine convergence.
    restart_cooldown: int = 100

    def __post_init__(self):
        if self.pop_size < 2:
            raise ValueError("population size must be at least 2")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not 0.0 < self.thr1 < self.thr2:
            raise ValueError("thresholds must satisfy 0 < thr1 < thr2")
        if not 0.0 < self.restart_fraction < 1.0:
            raise ValueError("restart_fraction must lie in (0, 1)")
        if self.restart_cooldown < 0:
            raise ValueError("restart_cooldown must be non-negative")


@dataclass
class Candidate:
    continuous: np.ndarray
    binary: np.ndarray
    fitness: float


@dataclass
class JayaResult:
    best: Candidate
    history: np.ndarray  # best fitness per iteration (monotone non-increasing)
    variances: np.ndarray  # population fitness variance per iteration
    restarts: np.ndarray  # bool flag per iteration
    evaluations: int


def jaya_update(x, x_best, x_worst, r1, r2, lo=-np.inf, hi=np.inf):
    """One JAYA move: toward the best, away from the worst, clipped to bounds."""
    moved = x + r1 * (x_best - np.abs(x)) - r2 * (x_worst - np.abs(x))
    return np.clip(moved, lo, hi)


def restart_check(var_prev: float, var_curr: float, thr1: float = 0.99, thr2: float = 1.01) -> bool:
    """True when the variance ratio signals stagnation (or total collapse)."""
    if var_prev <= 0.0:
        return True
    ratio = var_curr / var_prev
    return thr1 < ratio < thr2


def optimize(
    objective,
    lower: np.ndarray,
    upper: np.ndarray,
    n_binary: int = 0,
    config: JayaConfig = JayaConfig(),
    vectorized: bool = False,
    initial: tuple[np.ndarray, np.ndarray] | None = None,
) -> JayaResult:
    """Minimize ``objective`` over box-bounded continuous and binary variables.

    ``objective`` maps (continuous, binary) -> fitness; with
    ``vectorized=True`` it instead maps population arrays of shape
    (pop, n_cont) and (pop, n_binary) to a fitness vector.  Binary variables
    are updated in the continuous relaxation and thresholded at 0.5.
    ``initial`` seeds one population member (warm start).  Deterministic
    given ``config.seed``.
    """
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    if lower.shape != upper.shape or np.any(lower > upper):
        raise ValueError("bounds must be equal-shaped with lower <= upper")
    n_cont = lower.size
    if n_cont + n_binary == 0:
        raise ValueError("problem has no variables")

    rng = np.random.default_rng(config.seed)
    pop = config.pop_size

    x = rng.uniform(lower, upper, size=(pop, n_cont)) if n_cont else np.zeros((pop, 0))
    b = rng.integers(0, 2, size=(pop, n_binary)).astype(float)
    if initial is not None:
        x0, b0 = initial
        x[0] = np.clip(np.asarray(x0, dtype=float), lower, upper)
        b[0] = (np.asarray(b0, dtype=float) >= 0.5).astype(float)

    def evaluate(xs, bs):
        if vectorized:
            return np.asarray(objective(xs, bs), dtype=float)
        return np.array([objective(xs[i], bs[i]) for i in range(xs.shape[0])], dtype=float)

    fitness = evaluate(x, b)
    evaluations = pop

    history = np.empty(config.max_iter)
    variances = np.empty(config.max_iter)
    restarts = np.zeros(config.max_iter, dtype=bool)
    var_prev: float | None = None
    cooldown = 0

    for it in range(config.max_iter):
        best_i = int(np.argmin(fitness))
        worst_i = int(np.argmax(fitness))

        r1 = rng.uniform(size=(pop, n_cont + n_binary))
        r2 = rng.uniform(size=(pop, n_cont + n_binary))
        z = np.hstack([x, b])
        z_new = z + r1 * (z[best_i] - np.abs(z)) - r2 * (z[worst_i] - np.abs(z))

        x_new = np.clip(z_new[:, :n_cont], lower, upper)
        b_new = (np.clip(z_new[:, n_cont:], 0.0, 1.0) >= 0.5).astype(float)

        f_new = evaluate(x_new, b_new)
        evaluations += pop
        improved = f_new < fitness
        x[improved] = x_new[improved]
        b[improved] = b_new[improved]
        fitness[improved] = f_new[improved]

        var_curr = float(np.var(fitness))
        best_i = int(np.argmin(fitness))
        stagnant = var_prev is not None and restart_check(var_prev, var_curr, config.thr1, config.thr2)
        if stagnant and cooldown == 0:
            restarts[it] = True
            cooldown = config.restart_cooldown
            others = np.delete(np.arange(pop), best_i)
            k = min(others.size, max(1, round(config.restart_fraction * pop)))
            chosen = rng.choice(others, size=k, replace=False)
            if n_cont:
                x[chosen] = rng.uniform(lower, upper, size=(k, n_cont))
            if n_binary:
                b[chosen] = rng.integers(0, 2, size=(k, n_binary)).astype(float)
            fitness[chosen] = evaluate(x[chosen], b[chosen])
            evaluations += k
            var_curr = float(np.var(fitness))
            best_i = int(np.argmin(fitness))
        elif cooldown > 0:
            cooldown -= 1

        history[it] = fitness[best_i]
        variances[it] = var_curr
        var_prev = var_curr

    best_i = int(np.argmin(fitness))
    best = Candidate(continuous=x[best_i].copy(), binary=b[best_i].copy(), fitness=float(fitness[best_i]))
    return JayaResult(best=best, history=history, variances=variances, restarts=restarts, evaluations=evaluations)


def write_history_csv(path, result: JayaResult) -> None:
    """Convergence trace: iteration, best fitness, population variance, restart flag."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "best_fitness", "population_variance", "restart_flag"])
        for i in range(result.history.size):
            writer.writerow([i, repr(float(result.history[i])), repr(float(result.variances[i])), int(result.restarts[i])])
