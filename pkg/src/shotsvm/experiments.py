"""Experiment families at desk scale: per-trial workers and result rows.

Each family turns into a stream of flat result rows (dicts) that the CLI
serializes to CSV or JSON lines. Trials are embarrassingly parallel: a trial's
random streams are derived from (seed, trial index, stream id), never from
scheduling order, so the rows are byte-identical however many workers run.
Workers are plain top-level functions over frozen tasks so they cross process
boundaries.

Stage-level families (fixed budget, saturation, kernel-file runs) emit one row
per (trial, strategy, round). The sweep families emit one summary row per grid
point after all trials are in.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .allocation import margin_weights, oracle_allocation, sampling_variance, uniform_allocation
from .datasets import (
    BlobSpec,
    coefficient_of_variation,
    interpolate_weights,
    make_blobs,
    margin_strength,
    rbf_kernel,
)
from .driver import AdaptiveConfig, RunTrace, TrialData, run_adaptive, run_uniform, stop_round
from .errors import DegenerateWeightsError
from .kernels import KernelMatrix, num_pairs
from .metrics import gini, relative_improvement
from .solver import SvmModel, train
from .theory import CostModel, tau_critical, v_star, v_uniform

#: Columns of stage-level rows, one row per (trial, strategy, round).
STAGE_COLUMNS = [
    "experiment", "trial", "strategy", "round",
    "n", "nbar", "n_tot", "rounds", "m0", "lam", "epsilon", "c", "sigma_phys", "seed",
    "shots", "cumulative_shots", "shot_fraction", "rounds_executed", "stopped_early",
    "used_fallback", "delta",
    "rmse_k", "rmse_k_sv", "jaccard", "weighted_jaccard", "rel_margin_err", "decision_rmse",
    "delta_series",
]

#: Columns of per-threshold summary rows from the stopping sweep.
SWEEP_COLUMNS = [
    "experiment", "epsilon",
    "n", "nbar", "n_tot", "rounds", "m0", "lam", "c", "sigma_phys", "seed", "trials",
    "median_delta_rmse", "success_rate", "median_shot_fraction", "median_rounds",
    "median_decision_rmse_uniform", "median_decision_rmse_adaptive",
]

#: Columns of per-cell summary rows from the regime map.
REGIME_COLUMNS = [
    "experiment", "separation", "noise_scale", "margin_strength",
    "n", "nbar", "n_tot", "rounds", "m0", "lam", "epsilon", "c", "sigma_phys", "seed", "trials",
    "mean_gini", "mean_delta_rmse", "success_rate",
]

#: Columns of the heterogeneity sweep; oracle rows are exact formula values.
VARIANCE_COLUMNS = [
    "experiment", "t", "cv", "scheme", "oracle", "variance", "mc_se", "mc",
    "n", "nbar", "n_tot", "seed",
]

#: Columns of the cost-model curves.
COST_COLUMNS = ["experiment", "r", "rounds", "nbar", "n", "tau_star"]

_MAX_REDRAWS = 100


@dataclass(frozen=True)
class TrialTask:
    """Everything one worker needs to run a single trial."""

    experiment: str
    trial: int
    seed: int
    n: int
    nbar: int
    rounds: int
    m0: int
    lam: float
    epsilon: float
    c: float
    sigma_phys: float
    kkt_tol: float = 1e-6
    separation: float = 3.0
    noise_scale: float = 0.5
    anisotropy: float = 1.0
    label_noise: float = 0.0
    dims: int = 2
    include_uniform: bool = True
    kernel_entries: np.ndarray | None = field(default=None, repr=False)
    kernel_labels: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_tot(self) -> int:
        return self.nbar * num_pairs(self.n)


def trial_instance(task: TrialTask) -> tuple[KernelMatrix, np.ndarray]:
    """The trial's clean kernel and labels: a fresh blob sample, or the loaded matrix."""
    if task.kernel_entries is not None:
        return KernelMatrix(np.array(task.kernel_entries)), np.array(task.kernel_labels)
    for attempt in range(_MAX_REDRAWS):
        words = [task.seed, task.trial, 0] if attempt == 0 else [task.seed, task.trial, 0, attempt]
        derived = int(np.random.SeedSequence(words).generate_state(1)[0])
        spec = BlobSpec(
            n_points=task.n, separation=task.separation, noise_scale=task.noise_scale,
            anisotropy=task.anisotropy, label_noise=task.label_noise, dims=task.dims,
            seed=derived)
        points, labels = make_blobs(spec)
        if labels.min() < labels.max():
            return rbf_kernel(points), labels
    raise RuntimeError(
        f"trial {task.trial}: no two-class sample after {_MAX_REDRAWS} redraws "
        f"(label_noise={task.label_noise})")


def _trial_traces(task: TrialTask) -> tuple[SvmModel, RunTrace | None, RunTrace]:
    kernel, labels = trial_instance(task)
    reference = train(kernel, labels, c=task.c, kkt_tol=task.kkt_tol)
    config = AdaptiveConfig(
        n_tot=task.nbar * num_pairs(kernel.n), rounds=task.rounds, m0=task.m0,
        lam=task.lam, epsilon=task.epsilon, c=task.c, kkt_tol=task.kkt_tol, seed=task.seed)
    data = TrialData(kernel=kernel, labels=labels, sigma_phys=task.sigma_phys)
    uniform_trace = None
    if task.include_uniform:
        uniform_trace = run_uniform(
            data, config, np.random.default_rng([task.seed, task.trial, 1]), reference=reference)
    adaptive_trace = run_adaptive(
        data, config, np.random.default_rng([task.seed, task.trial, 2]), reference=reference)
    return reference, uniform_trace, adaptive_trace


def stage_rows(task: TrialTask, trace: RunTrace) -> list[dict]:
    """Flatten a run trace into one row per recorded stage."""
    last = trace.rounds[-1].index
    deltas: list[float] = []
    rows = []
    for rec in trace.rounds:
        if rec.delta is not None:
            deltas.append(rec.delta)
        metrics = rec.metrics
        rows.append({
            "experiment": task.experiment,
            "trial": task.trial,
            "strategy": trace.strategy,
            "round": rec.index,
            "n": task.n,
            "nbar": task.nbar,
            "n_tot": trace.n_tot,
            "rounds": task.rounds,
            "m0": task.m0,
            "lam": task.lam,
            "epsilon": task.epsilon,
            "c": task.c,
            "sigma_phys": task.sigma_phys,
            "seed": task.seed,
            "shots": rec.shots,
            "cumulative_shots": rec.cumulative_shots,
            "shot_fraction": rec.cumulative_shots / trace.n_tot,
            "rounds_executed": last,
            "stopped_early": trace.stopped_early,
            "used_fallback": rec.used_fallback,
            "delta": rec.delta,
            "rmse_k": metrics.rmse_k,
            "rmse_k_sv": metrics.rmse_k_sv,
            "jaccard": metrics.jaccard,
            "weighted_jaccard": metrics.weighted_jaccard,
            "rel_margin_err": metrics.rel_margin_err,
            "decision_rmse": metrics.decision_rmse,
            "delta_series": list(deltas),
        })
    return rows


def run_stage_trial(task: TrialTask) -> tuple[int, list[dict]]:
    """Worker for the stage-level families: uniform baseline plus adaptive stages."""
    _, uniform_trace, adaptive_trace = _trial_traces(task)
    rows: list[dict] = []
    if uniform_trace is not None:
        rows.extend(stage_rows(task, uniform_trace))
    rows.extend(stage_rows(task, adaptive_trace))
    return task.trial, rows


def run_sweep_trial(task: TrialTask) -> tuple[int, RunTrace, RunTrace]:
    """Worker for the stopping sweep: full traces, thresholds replayed later."""
    _, uniform_trace, adaptive_trace = _trial_traces(task)
    return task.trial, uniform_trace, adaptive_trace


def run_regime_trial(task: TrialTask) -> tuple[int, float, float]:
    """Worker for the regime map: (trial, gini of the clean duals, budget-matched gain)."""
    reference, uniform_trace, adaptive_trace = _trial_traces(task)
    improvement = relative_improvement(
        uniform_trace.rounds[-1].metrics.decision_rmse,
        adaptive_trace.rounds[-1].metrics.decision_rmse)
    return task.trial, gini(reference.alpha), improvement


def map_trials(worker, tasks: Iterable[TrialTask], threads: int) -> Iterator:
    """Run the worker over tasks, yielding results in task order.

    threads == 1 stays in-process; more spreads trials over worker processes.
    Either way the yield order is the task order, so downstream writes are
    scheduling-independent.
    """
    tasks = list(tasks)
    if threads <= 1:
        yield from map(worker, tasks)
        return
    with ProcessPoolExecutor(max_workers=threads) as pool:
        yield from pool.map(worker, tasks, chunksize=1)


def sweep_summary_rows(epsilons: Iterable[float], task: TrialTask,
                       results: list[tuple[int, RunTrace, RunTrace]]) -> list[dict]:
    """Replay every stopping threshold against the recorded full traces.

    The adaptive trajectory does not depend on the threshold up to the stop
    round, so one trace per trial covers the whole sweep.
    """
    rows = []
    for epsilon in epsilons:
        fractions, improvements, stop_rounds, unif_rmse, adapt_rmse = [], [], [], [], []
        for _, uniform_trace, adaptive_trace in results:
            stop = stop_round(adaptive_trace, epsilon)
            rec = adaptive_trace.rounds[stop]
            fractions.append(rec.cumulative_shots / adaptive_trace.n_tot)
            stop_rounds.append(stop)
            unif_final = uniform_trace.rounds[-1].metrics.decision_rmse
            improvements.append(relative_improvement(unif_final, rec.metrics.decision_rmse))
            unif_rmse.append(unif_final)
            adapt_rmse.append(rec.metrics.decision_rmse)
        rows.append({
            "experiment": task.experiment,
            "epsilon": epsilon,
            "n": task.n,
            "nbar": task.nbar,
            "n_tot": task.n_tot,
            "rounds": task.rounds,
            "m0": task.m0,
            "lam": task.lam,
            "c": task.c,
            "sigma_phys": task.sigma_phys,
            "seed": task.seed,
            "trials": len(results),
            "median_delta_rmse": float(np.median(improvements)),
            "success_rate": float(np.mean([v > 0 for v in improvements])),
            "median_shot_fraction": float(np.median(fractions)),
            "median_rounds": float(np.median(stop_rounds)),
            "median_decision_rmse_uniform": float(np.median(unif_rmse)),
            "median_decision_rmse_adaptive": float(np.median(adapt_rmse)),
        })
    return rows


def regime_cell_row(task: TrialTask, results: list[tuple[int, float, float]]) -> dict:
    """Aggregate one (separation, noise_scale) cell of the regime map."""
    spec = BlobSpec(n_points=task.n, separation=task.separation,
                    noise_scale=task.noise_scale, anisotropy=task.anisotropy,
                    label_noise=task.label_noise, dims=task.dims, seed=0)
    ginis = [g for _, g, _ in results]
    improvements = [v for _, _, v in results]
    return {
        "experiment": task.experiment,
        "separation": task.separation,
        "noise_scale": task.noise_scale,
        "margin_strength": margin_strength(spec),
        "n": task.n,
        "nbar": task.nbar,
        "n_tot": task.n_tot,
        "rounds": task.rounds,
        "m0": task.m0,
        "lam": task.lam,
        "epsilon": task.epsilon,
        "c": task.c,
        "sigma_phys": task.sigma_phys,
        "seed": task.seed,
        "trials": len(results),
        "mean_gini": float(np.mean(ginis)),
        "mean_delta_rmse": float(np.mean(improvements)),
        "success_rate": float(np.mean([v > 0 for v in improvements])),
    }


def repair_starved(counts: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Move single shots from the fullest bins onto starved positive-weight bins.

    A multinomial draw can leave a positive-weight entry with zero shots, which
    would make its variance contribution infinite; the repaired counts keep the
    same total.
    """
    counts = counts.copy()
    starved = np.flatnonzero((weights > 0) & (counts == 0))
    while starved.size:
        donors = np.argsort(counts, kind="stable")[::-1][:starved.size]
        counts[donors] -= 1
        counts[starved] += 1
        starved = np.flatnonzero((weights > 0) & (counts == 0))
    return counts


def variance_sweep_rows(base_weights: np.ndarray, t_grid: Iterable[float], n: int,
                        nbar: int, mc: int, seed: int,
                        experiment: str = "theory-variance") -> Iterator[dict]:
    """Oracle and finite-shot variances along the heterogeneity interpolation.

    For each interpolation point: the closed-form variances of the fractional
    optimal and uniform allocations, then Monte Carlo means over integer
    realizations — multinomial draws (repaired against starved entries) for the
    optimal scheme, even splits with a randomly placed remainder for uniform.
    """
    if not np.any(base_weights > 0):
        raise DegenerateWeightsError("all base weights are zero")
    n_tot = nbar * num_pairs(n)
    for index, t in enumerate(t_grid):
        weights = interpolate_weights(base_weights, float(t))
        cv = coefficient_of_variation(weights)
        echo = {"experiment": experiment, "t": float(t), "cv": cv,
                "n": n, "nbar": nbar, "n_tot": n_tot, "seed": seed}
        yield {**echo, "scheme": "optimal", "oracle": True,
               "variance": v_star(weights, n_tot), "mc_se": None, "mc": 0}
        yield {**echo, "scheme": "uniform", "oracle": True,
               "variance": v_uniform(weights, n_tot), "mc_se": None, "mc": 0}
        probs = oracle_allocation(weights, n_tot).counts / n_tot
        rng = np.random.default_rng([seed, index, 3])
        optimal_draws = [
            sampling_variance(weights, repair_starved(rng.multinomial(n_tot, probs), weights))
            for _ in range(mc)]
        yield {**echo, "scheme": "optimal", "oracle": False,
               "variance": float(np.mean(optimal_draws)),
               "mc_se": float(np.std(optimal_draws) / np.sqrt(mc)), "mc": mc}
        rng = np.random.default_rng([seed, index, 4])
        uniform_draws = [
            sampling_variance(weights, uniform_allocation(n, n_tot, rng).counts)
            for _ in range(mc)]
        yield {**echo, "scheme": "uniform", "oracle": False,
               "variance": float(np.mean(uniform_draws)),
               "mc_se": float(np.std(uniform_draws) / np.sqrt(mc)), "mc": mc}


def data_driven_weights(task: TrialTask) -> np.ndarray:
    """Margin-variance weights of the clean-kernel model for one sampled instance."""
    kernel, labels = trial_instance(task)
    model = train(kernel, labels, c=task.c, kkt_tol=task.kkt_tol)
    return margin_weights(model, kernel)


def cost_model_rows(configs: Iterable[tuple[float, int]], n_values: Iterable[int],
                    nbar: float, experiment: str = "cost-model") -> Iterator[dict]:
    """Critical cost-ratio curves tau*(n), one row per (configuration, n)."""
    for r, rounds in configs:
        for n in n_values:
            model = CostModel(c_q=1.0, c_c=1.0, r=r, rounds=rounds, n=n, nbar=nbar)
            yield {"experiment": experiment, "r": r, "rounds": rounds,
                   "nbar": nbar, "n": n, "tau_star": tau_critical(model)}
