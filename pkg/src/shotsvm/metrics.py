"""How well a model trained on an estimated kernel recovers the clean one.

All comparisons are against a reference model trained on the exact kernel.
Kernel RMSE runs over all n^2 positions (the exact diagonal contributes
zeros); the support-restricted variant looks only at rows and columns of the
reference support vectors, where entry errors actually move the decision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import KernelMatrix
from .solver import SvmModel, decision_values, margin_norm


def kernel_rmse(k_est: KernelMatrix, k_ref: KernelMatrix, subset=None) -> float:
    """Entrywise RMSE, optionally restricted to the rows/columns in ``subset``."""
    a, b = k_est.entries, k_ref.entries
    if a.shape != b.shape:
        raise ValueError("kernel shapes differ")
    if subset is not None:
        subset = np.asarray(subset, dtype=np.intp)
        if subset.size == 0:
            return 0.0
        a = a[np.ix_(subset, subset)]
        b = b[np.ix_(subset, subset)]
    return float(np.sqrt(np.mean((a - b) ** 2)))


def jaccard(set_a, set_b) -> float:
    a, b = set(np.asarray(set_a, dtype=np.intp).tolist()), set(np.asarray(set_b, dtype=np.intp).tolist())
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def weighted_jaccard(a: np.ndarray, b: np.ndarray) -> float:
    """sum(min)/sum(max) over nonnegative magnitude vectors; 1 when both vanish."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("weighted Jaccard is defined on nonnegative magnitudes")
    denom = np.maximum(a, b).sum()
    if denom == 0.0:
        return 1.0
    return float(np.minimum(a, b).sum() / denom)


def relative_margin_error(w_est: float, w_true: float) -> float:
    if w_true <= 0:
        raise ValueError("reference margin norm must be positive")
    return abs(w_est - w_true) / w_true


def decision_rmse(f_est: np.ndarray, f_true: np.ndarray, w_true: float) -> float:
    """RMSE between decision-value vectors, in units of the reference margin norm."""
    if w_true <= 0:
        raise ValueError("reference margin norm must be positive")
    f_est = np.asarray(f_est, dtype=np.float64)
    f_true = np.asarray(f_true, dtype=np.float64)
    return float(np.sqrt(np.mean((f_est - f_true) ** 2)) / w_true)


def relative_improvement(rmse_uniform: float, rmse_adaptive: float) -> float:
    """Fraction of the uniform baseline's error removed by the adaptive run."""
    if rmse_uniform <= 0:
        raise ValueError("baseline RMSE must be positive")
    return (rmse_uniform - rmse_adaptive) / rmse_uniform


def gini(values: np.ndarray) -> float:
    """Concentration of a nonnegative vector: 0 for flat, (n-1)/n for one-hot."""
    v = np.asarray(values, dtype=np.float64)
    total = v.sum()
    if total == 0.0:
        return 0.0
    diff_sum = np.abs(v[:, None] - v[None, :]).sum()
    return float(diff_sum / (2.0 * len(v) * total))


@dataclass(frozen=True)
class MetricBundle:
    rmse_k: float
    rmse_k_sv: float
    jaccard: float
    weighted_jaccard: float
    rel_margin_err: float
    decision_rmse: float


def compute_bundle(reference: SvmModel, estimate: SvmModel,
                   k_true: KernelMatrix, k_hat: KernelMatrix) -> MetricBundle:
    """All recovery metrics for one (estimated kernel, estimated model) pair."""
    sv_true = reference.support_set
    w_true = margin_norm(reference, k_true)
    f_true = decision_values(reference, k_true)
    f_est = decision_values(estimate, k_hat)
    return MetricBundle(
        rmse_k=kernel_rmse(k_hat, k_true),
        rmse_k_sv=kernel_rmse(k_hat, k_true, subset=sv_true),
        jaccard=jaccard(estimate.support_set, sv_true),
        weighted_jaccard=weighted_jaccard(estimate.alpha, reference.alpha),
        rel_margin_err=relative_margin_error(margin_norm(estimate, k_hat), w_true),
        decision_rmse=decision_rmse(f_est, f_true, w_true),
    )
