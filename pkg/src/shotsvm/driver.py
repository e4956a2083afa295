"""Measurement campaigns: spend a shot budget on a kernel, train, repeat.

The adaptive loop seeds every entry with a small pilot, trains, then spends the
rest of the budget in rounds: score entries by their influence on the margin
and the risk of support flips, draw the round's shots from a multinomial over
those scores, re-estimate, retrain. A run can end early once the dual weights
stop moving between rounds; whatever budget remains is simply not spent. The
uniform baseline spends the identical nominal budget in one even pass.

Every random choice flows through the caller's Generator, so a (data, config,
seed) triple reproduces a run bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .allocation import multinomial_draw, uniform_allocation
from .errors import InsufficientBudgetError
from .kernels import (
    KernelMatrix,
    MeasurementLedger,
    NoiseModel,
    assemble_estimate,
    num_pairs,
    simulate_counts,
)
from .metrics import MetricBundle, compute_bundle
from .sensitivity import (
    allocation_scores,
    decision_variance,
    margin_residuals,
    sv_transition_prob,
)
from .solver import SvmModel, train

STABILITY_REGULARIZER = 1e-12


@dataclass(frozen=True)
class AdaptiveConfig:
    """Budget and algorithm knobs shared by the adaptive and uniform pipelines."""

    n_tot: int
    rounds: int = 5
    m0: int = 2
    lam: float = 0.5
    epsilon: float = 0.0
    c: float = 1.0
    kkt_tol: float = 1e-6
    seed: int = 0
    known_sigma_phys: float | None = None  # learner-side variance floor, if declared

    def __post_init__(self):
        if self.n_tot < 1:
            raise ValueError("n_tot must be positive")
        if self.rounds < 0:
            raise ValueError("rounds must be nonnegative")
        if self.m0 < 1:
            raise ValueError("pilot needs at least one shot per entry")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must be in [0, 1]")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.c <= 0:
            raise ValueError("c must be positive")
        if self.kkt_tol <= 0:
            raise ValueError("kkt_tol must be positive")


@dataclass(frozen=True)
class TrialData:
    """One problem instance: the clean kernel, labels, and the offset scale."""

    kernel: KernelMatrix
    labels: np.ndarray
    sigma_phys: float | np.ndarray = 0.0


@dataclass
class RoundRecord:
    index: int  # 0 is the pilot; uniform runs have a single index-0 record
    shots: int
    cumulative_shots: int
    alpha: np.ndarray = field(repr=False)
    b: float
    delta: float | None  # dual movement vs the previous round; None before round 1
    metrics: MetricBundle
    used_fallback: bool = False


@dataclass
class RunTrace:
    strategy: str
    rounds: list[RoundRecord]
    n_tot: int
    stopped_early: bool
    shot_fraction: float


def dual_stability(alpha_new: np.ndarray, alpha_old: np.ndarray) -> float:
    """Relative movement of the dual weights between consecutive rounds."""
    num = float(np.linalg.norm(alpha_new - alpha_old))
    return num / (float(np.linalg.norm(alpha_old)) + STABILITY_REGULARIZER)


def _entry_variances(ledger: MeasurementLedger, config: AdaptiveConfig) -> np.ndarray:
    """Plug-in estimator variances from the current ledger (smoothed rates)."""
    p = ledger.smoothed()
    n_shots = np.maximum(ledger.shots, 1)
    v = p * (1.0 - p) / n_shots
    if config.known_sigma_phys is not None:
        v = v + (1.0 - 1.0 / n_shots) * float(config.known_sigma_phys) ** 2
    return v


def run_pilot(data: TrialData, config: AdaptiveConfig, rng: np.random.Generator,
              noise: NoiseModel | None = None):
    """m0 shots on every entry, then a first model. Returns (ledger, model)."""
    n = data.kernel.n
    if noise is None:
        noise = NoiseModel(data.sigma_phys)
    ledger = MeasurementLedger.empty(n)
    counts = np.full(num_pairs(n), config.m0, dtype=np.int64)
    successes = simulate_counts(data.kernel, noise, counts, rng)
    ledger.record(counts, successes)
    model = train(assemble_estimate(ledger), data.labels, c=config.c, kkt_tol=config.kkt_tol)
    return ledger, model


def run_adaptive(data: TrialData, config: AdaptiveConfig, rng: np.random.Generator,
                 reference: SvmModel | None = None) -> RunTrace:
    """Pilot plus up to ``rounds`` scored refinement rounds under one budget."""
    n = data.kernel.n
    m = num_pairs(n)
    n_pilot = config.m0 * m
    if config.n_tot < n_pilot:
        raise InsufficientBudgetError(
            f"budget {config.n_tot} is below the pilot cost {n_pilot}")
    if reference is None:
        reference = train(data.kernel, data.labels, c=config.c, kkt_tol=config.kkt_tol)

    noise = NoiseModel(data.sigma_phys)
    ledger, model = run_pilot(data, config, rng, noise)
    khat = assemble_estimate(ledger)
    records = [RoundRecord(
        index=0, shots=n_pilot, cumulative_shots=n_pilot,
        alpha=model.alpha.copy(), b=model.b, delta=None,
        metrics=compute_bundle(reference, model, data.kernel, khat))]

    remaining = config.n_tot - n_pilot
    per_round = remaining // config.rounds if config.rounds else 0
    cumulative = n_pilot
    stopped = False
    for r in range(1, config.rounds + 1):
        budget_r = per_round if r < config.rounds else remaining - per_round * (config.rounds - 1)
        residuals = margin_residuals(model, khat)
        sigma_f = np.sqrt(decision_variance(model, _entry_variances(ledger, config)))
        probs = sv_transition_prob(residuals, sigma_f)
        scores, used_fallback = allocation_scores(model, ledger, probs, config.lam)
        alloc = multinomial_draw(scores, budget_r, rng)
        successes = simulate_counts(data.kernel, noise, alloc.counts, rng)
        ledger.record(alloc.counts, successes)
        khat = assemble_estimate(ledger)
        new_model = train(khat, data.labels, c=config.c, kkt_tol=config.kkt_tol)
        delta = dual_stability(new_model.alpha, model.alpha)
        model = new_model
        cumulative += int(budget_r)
        records.append(RoundRecord(
            index=r, shots=int(budget_r), cumulative_shots=cumulative,
            alpha=model.alpha.copy(), b=model.b, delta=delta,
            metrics=compute_bundle(reference, model, data.kernel, khat),
            used_fallback=used_fallback))
        if delta < config.epsilon:
            stopped = True
            break

    return RunTrace(strategy="adaptive", rounds=records, n_tot=config.n_tot,
                    stopped_early=stopped, shot_fraction=cumulative / config.n_tot)


def run_uniform(data: TrialData, config: AdaptiveConfig, rng: np.random.Generator,
                reference: SvmModel | None = None) -> RunTrace:
    """The whole budget in one even pass; the head-to-head baseline."""
    n = data.kernel.n
    if reference is None:
        reference = train(data.kernel, data.labels, c=config.c, kkt_tol=config.kkt_tol)
    noise = NoiseModel(data.sigma_phys)
    ledger = MeasurementLedger.empty(n)
    alloc = uniform_allocation(n, config.n_tot, rng)
    successes = simulate_counts(data.kernel, noise, alloc.counts, rng)
    ledger.record(alloc.counts, successes)
    khat = assemble_estimate(ledger)
    model = train(khat, data.labels, c=config.c, kkt_tol=config.kkt_tol)
    record = RoundRecord(
        index=0, shots=config.n_tot, cumulative_shots=config.n_tot,
        alpha=model.alpha.copy(), b=model.b, delta=None,
        metrics=compute_bundle(reference, model, data.kernel, khat))
    return RunTrace(strategy="uniform", rounds=[record], n_tot=config.n_tot,
                    stopped_early=False, shot_fraction=1.0)


def stop_round(trace: RunTrace, epsilon: float) -> int:
    """The round a threshold-epsilon run would have stopped at, read off a full trace.

    The trajectory up to the stop never depends on epsilon, so sweeping
    thresholds only needs the epsilon = 0 trace.
    """
    for rec in trace.rounds[1:]:
        if rec.delta is not None and rec.delta < epsilon:
            return rec.index
    return trace.rounds[-1].index
