"""Splitting a shot budget across kernel entries.

The variance objective is sum_ij w_ij / N_ij for nonnegative entry weights w.
Minimizing under a fixed total budget puts shots proportional to sqrt(w_ij)
(Lagrange on the continuous relaxation), which by Cauchy-Schwarz never does
worse than the even split. Everything here works on flat upper-triangle pair
vectors; fractional allocations are the analytic objects, integer ones are what
a measurement run can actually execute.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateScoresError,
    DegenerateWeightsError,
    InfiniteVarianceError,
    InsufficientBudgetError,
)
from .kernels import KernelMatrix, condense, num_pairs
from .solver import SvmModel


@dataclass
class Allocation:
    """Per-entry shot counts (integer or fractional) summing to the budget."""

    counts: np.ndarray
    budget: float

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if np.any(self.counts < 0):
            raise ValueError("negative shot count")
        total = float(self.counts.sum())
        if not np.isclose(total, self.budget, rtol=1e-9, atol=1e-6):
            raise ValueError(f"counts sum to {total}, budget is {self.budget}")


def uniform_allocation(n: int, n_tot: int, rng: np.random.Generator | None = None) -> Allocation:
    """Even integer split over all pairs; leftover shots go one each to a
    drawn-without-replacement subset of entries."""
    m = num_pairs(n)
    if n_tot < m:
        raise InsufficientBudgetError(f"budget {n_tot} cannot cover {m} entries")
    base, rem = divmod(int(n_tot), m)
    counts = np.full(m, base, dtype=np.int64)
    if rem:
        if rng is None:
            raise ValueError("remainder assignment needs an rng")
        counts[rng.choice(m, size=rem, replace=False)] += 1
    return Allocation(counts, n_tot)


def oracle_allocation(weights: np.ndarray, n_tot: float) -> Allocation:
    """Fractional square-root-proportional allocation; zero-weight entries get nothing."""
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    root = np.sqrt(w)
    total = root.sum()
    if total == 0.0:
        raise DegenerateWeightsError("all allocation weights are zero")
    return Allocation(n_tot * root / total, n_tot)


def sampling_variance(weights: np.ndarray, alloc) -> float:
    """sum of w_ij / N_ij over positive-weight entries; diverges if one is starved."""
    w = np.asarray(weights, dtype=np.float64)
    counts = np.asarray(alloc.counts if isinstance(alloc, Allocation) else alloc,
                        dtype=np.float64)
    active = w > 0
    starved = active & (counts == 0)
    if np.any(starved):
        raise InfiniteVarianceError(
            f"{int(starved.sum())} positive-weight entries received zero shots")
    return float(np.sum(w[active] / counts[active]))


def margin_weights(model: SvmModel, kernel: KernelMatrix) -> np.ndarray:
    """(alpha_i alpha_j)^2 K_ij (1 - K_ij): variance weights for the margin functional."""
    a2 = condense(np.outer(model.alpha, model.alpha)) ** 2
    kv = kernel.condensed()
    return a2 * kv * (1.0 - kv)


def decision_weights(model: SvmModel, kernel: KernelMatrix) -> np.ndarray:
    """(alpha_i^2 + alpha_j^2) K_ij (1 - K_ij): variance weights for decision values."""
    a2 = model.alpha**2
    pair_sum = condense(a2[:, None] + a2[None, :])
    kv = kernel.condensed()
    return pair_sum * kv * (1.0 - kv)


def multinomial_draw(scores: np.ndarray, budget: int, rng: np.random.Generator) -> Allocation:
    """Integer allocation from one multinomial draw with probabilities ~ scores."""
    s = np.asarray(scores, dtype=np.float64)
    if np.any(s < 0):
        raise ValueError("scores must be nonnegative")
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    total = s.sum()
    if total == 0.0:
        raise DegenerateScoresError("all scores are zero")
    if budget == 0:
        return Allocation(np.zeros(len(s), dtype=np.int64), 0)
    return Allocation(rng.multinomial(int(budget), s / total), budget)


def largest_remainder_round(fractional: np.ndarray, budget: int) -> Allocation:
    """Integer realization of a fractional allocation.

    Positive entries are floored but never below one shot; the leftover budget
    is handed out by decreasing fractional remainder (ties to the lower index),
    or clawed back smallest-remainder-first from entries that can spare a shot.
    """
    f = np.asarray(fractional, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("fractional counts must be nonnegative")
    pos = np.flatnonzero(f > 0)
    if budget < len(pos):
        raise InsufficientBudgetError(
            f"budget {budget} cannot give {len(pos)} active entries one shot each")
    counts = np.zeros(len(f), dtype=np.int64)
    if len(pos) == 0:
        if budget:
            raise DegenerateWeightsError("positive budget but no active entries")
        return Allocation(counts, 0)
    floors = np.floor(f[pos])
    rem = f[pos] - floors
    base = np.maximum(floors.astype(np.int64), 1)
    gap = int(budget - base.sum())
    if gap > 0:
        order = np.argsort(-rem, kind="stable")
        q, r = divmod(gap, len(pos))
        base += q
        base[order[:r]] += 1
    elif gap < 0:
        order = np.argsort(rem, kind="stable")
        excess = -gap
        while excess > 0:
            for idx in order:
                if excess == 0:
                    break
                if base[idx] >= 2:
                    base[idx] -= 1
                    excess -= 1
    counts[pos] = base
    return Allocation(counts, budget)
