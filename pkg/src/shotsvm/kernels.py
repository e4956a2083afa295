"""Kernel matrices estimated from finite batches of noisy Bernoulli measurements.

Each off-diagonal kernel entry K_ij in [0, 1] is observed only through repeated
binary trials: a single shot succeeds with probability K_ij shifted by a
per-trial miscalibration offset. Within one trial the offset is frozen, so shots
of the same entry are conditionally i.i.d. Bernoulli but correlated across
batches. Averaging S successes over N shots gives the entry estimator whose
variance decomposes as

    Var(Khat_ij) = K_ij (1 - K_ij) / N  +  (1 - 1/N) * sigma_phys^2

— a shot-noise term that dies off like 1/N and a floor set by the offset scale
sigma_phys that no shot budget can buy away.

Storage convention: every per-pair quantity (shot counts, successes, offsets,
weights, scores) lives in a flat vector over the strict upper triangle in
row-major order, i.e. the ordering of ``np.triu_indices(n, 1)``. The diagonal is
known exactly (K_ii = 1) and is never measured or stored.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import IncompleteLedgerError, NoDataError

# ---------------------------------------------------------------- pair indexing


def num_pairs(n: int) -> int:
    return n * (n - 1) // 2


def pair_index(i: int, j: int, n: int) -> int:
    """Flat slot of the unordered pair {i, j} in the upper-triangle layout."""
    if i == j:
        raise ValueError(f"diagonal entry ({i},{i}) is exact and never stored")
    if i > j:
        i, j = j, i
    if i < 0 or j >= n:
        raise ValueError(f"pair ({i},{j}) out of range for n={n}")
    return i * (2 * n - i - 1) // 2 + (j - i - 1)


def pair_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column index arrays aligned with the flat pair layout."""
    return np.triu_indices(n, k=1)


def condense(matrix: np.ndarray) -> np.ndarray:
    """Strict upper triangle of a square matrix as a flat vector."""
    matrix = np.asarray(matrix)
    n = matrix.shape[0]
    return matrix[np.triu_indices(n, k=1)].copy()


def expand(vec: np.ndarray, n: int, diag=0.0) -> np.ndarray:
    """Symmetric full matrix from a flat pair vector, with the given diagonal."""
    out = np.zeros((n, n))
    iu, ju = np.triu_indices(n, k=1)
    out[iu, ju] = vec
    out[ju, iu] = vec
    np.fill_diagonal(out, diag)
    return out


# ---------------------------------------------------------------- kernel container


@dataclass
class KernelMatrix:
    """Square symmetric kernel; estimated instances may violate PSD and range."""

    entries: np.ndarray

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=np.float64)
        if self.entries.ndim != 2 or self.entries.shape[0] != self.entries.shape[1]:
            raise ValueError(f"kernel must be square, got shape {self.entries.shape}")

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def condensed(self) -> np.ndarray:
        return condense(self.entries)


@dataclass(frozen=True)
class Violation:
    kind: str  # "symmetry" | "diagonal" | "range" | "psd"
    index: tuple | None
    detail: str


def validate_kernel(kernel: KernelMatrix, psd_tol: float = 1e-8) -> list[Violation]:
    """Report (not reject) deviations from a bona fide measurement kernel.

    Symmetry and the unit diagonal are exact requirements; entries must sit in
    [0, 1]; the smallest eigenvalue may dip to -psd_tol before it counts as a
    violation. Estimated kernels routinely fail the PSD check — callers decide
    whether that matters.
    """
    k = kernel.entries
    out: list[Violation] = []
    asym = np.argwhere(k != k.T)
    for i, j in asym:
        if i < j:
            out.append(Violation("symmetry", (int(i), int(j)),
                                 f"K[{i},{j}]={k[i, j]!r} != K[{j},{i}]={k[j, i]!r}"))
    for i in range(kernel.n):
        if k[i, i] != 1.0:
            out.append(Violation("diagonal", (int(i), int(i)), f"K[{i},{i}]={k[i, i]!r} != 1"))
    bad = np.argwhere((k < 0.0) | (k > 1.0))
    for i, j in bad:
        out.append(Violation("range", (int(i), int(j)), f"K[{i},{j}]={k[i, j]!r} outside [0,1]"))
    # eigvalsh wants exact symmetry; symmetrize defensively for the check only
    lam_min = float(np.linalg.eigvalsh((k + k.T) / 2.0)[0])
    if lam_min < -psd_tol:
        out.append(Violation("psd", None, f"smallest eigenvalue {lam_min:.3e} < -{psd_tol:g}"))
    return out


# ---------------------------------------------------------------- noise model


class NoiseModel:
    """Per-trial miscalibration offsets on top of Bernoulli shot noise.

    ``sigma_phys`` is either a scalar (same scale everywhere) or a flat
    per-pair vector. The offsets themselves are realized lazily — one batched
    normal draw the first time any measurement happens — and then reused for
    every shot of the trial, which is what makes distinct batches of the same
    entry covary by sigma_phys^2. Call :meth:`reset` to begin a new trial.
    """

    def __init__(self, sigma_phys=0.0):
        sig = np.asarray(sigma_phys, dtype=np.float64)
        if np.any(sig < 0):
            raise ValueError("sigma_phys must be nonnegative")
        self.sigma_phys = sig
        self._offsets: np.ndarray | None = None

    def offsets(self, n_pairs: int, rng: np.random.Generator) -> np.ndarray:
        if self._offsets is None:
            if self.sigma_phys.ndim == 1 and len(self.sigma_phys) != n_pairs:
                raise ValueError(
                    f"sigma_phys has {len(self.sigma_phys)} entries, expected {n_pairs}")
            if np.all(self.sigma_phys == 0.0):
                self._offsets = np.zeros(n_pairs)
            else:
                self._offsets = rng.standard_normal(n_pairs) * self.sigma_phys
        elif len(self._offsets) != n_pairs:
            raise ValueError("offset vector realized for a different pair count")
        return self._offsets

    def reset(self) -> None:
        self._offsets = None


def simulate_shots(kernel: KernelMatrix, noise: NoiseModel, pair: tuple[int, int],
                   m: int, rng: np.random.Generator) -> int:
    """Successes out of m shots on one entry, under the trial's frozen offset."""
    if m < 0:
        raise ValueError("shot count must be nonnegative")
    if m == 0:
        return 0
    i, j = pair
    idx = pair_index(i, j, kernel.n)
    off = noise.offsets(num_pairs(kernel.n), rng)[idx]
    p = min(max(kernel.entries[i, j] + off, 0.0), 1.0)
    return int(rng.binomial(m, p))


def simulate_counts(kernel: KernelMatrix, noise: NoiseModel, counts: np.ndarray,
                    rng: np.random.Generator) -> np.ndarray:
    """Vectorized shot simulation for a whole allocation (flat pair vector)."""
    counts = np.asarray(counts)
    if np.any(counts < 0):
        raise ValueError("shot counts must be nonnegative")
    off = noise.offsets(len(counts), rng)
    p = np.clip(kernel.condensed() + off, 0.0, 1.0)
    return rng.binomial(counts.astype(np.int64), p)


# ---------------------------------------------------------------- ledger


@dataclass
class MeasurementLedger:
    """Running (successes, shots) totals per upper-triangle entry."""

    n: int
    successes: np.ndarray = field(repr=False)
    shots: np.ndarray = field(repr=False)

    @classmethod
    def empty(cls, n: int) -> "MeasurementLedger":
        m = num_pairs(n)
        return cls(n=n, successes=np.zeros(m, dtype=np.int64), shots=np.zeros(m, dtype=np.int64))

    def copy(self) -> "MeasurementLedger":
        return MeasurementLedger(self.n, self.successes.copy(), self.shots.copy())

    def _check(self, shots, successes) -> None:
        if np.any(shots < 0) or np.any(successes < 0):
            raise ValueError("negative counts")
        if np.any(successes > shots):
            raise ValueError("successes exceed shots")

    def record(self, shots: np.ndarray, successes: np.ndarray) -> None:
        shots = np.asarray(shots, dtype=np.int64)
        successes = np.asarray(successes, dtype=np.int64)
        self._check(shots, successes)
        self.shots += shots
        self.successes += successes

    def record_pair(self, i: int, j: int, shots: int, successes: int) -> None:
        self._check(np.int64(shots), np.int64(successes))
        idx = pair_index(i, j, self.n)
        self.shots[idx] += shots
        self.successes[idx] += successes

    def total_shots(self) -> int:
        return int(self.shots.sum())

    def shots_for(self, i: int, j: int) -> int:
        return int(self.shots[pair_index(i, j, self.n)])

    def estimate_entry(self, i: int, j: int) -> float:
        idx = pair_index(i, j, self.n)
        if self.shots[idx] == 0:
            raise NoDataError(f"no shots recorded for pair ({i},{j})")
        return float(self.successes[idx] / self.shots[idx])

    def smoothed_estimate(self, i: int, j: int) -> float:
        idx = pair_index(i, j, self.n)
        return float((self.successes[idx] + 1.0) / (self.shots[idx] + 2.0))

    def smoothed(self) -> np.ndarray:
        """Add-one smoothed rates for every entry; always strictly inside (0, 1)."""
        return (self.successes + 1.0) / (self.shots + 2.0)


def estimator_variance(k, n_shots, sigma_phys=0.0):
    """Variance of the N-shot entry estimator; broadcasts over array inputs."""
    k = np.asarray(k, dtype=np.float64)
    n_shots = np.asarray(n_shots, dtype=np.float64)
    sigma_phys = np.asarray(sigma_phys, dtype=np.float64)
    if np.any(n_shots <= 0):
        raise ValueError("n_shots must be positive")
    out = k * (1.0 - k) / n_shots + (1.0 - 1.0 / n_shots) * sigma_phys**2
    return out if out.ndim else float(out)


def assemble_estimate(ledger: MeasurementLedger) -> KernelMatrix:
    """Full symmetric estimate with exact unit diagonal; raises if any entry is unmeasured."""
    missing = np.flatnonzero(ledger.shots == 0)
    if missing.size:
        iu, ju = pair_indices(ledger.n)
        raise IncompleteLedgerError([(int(iu[k]), int(ju[k])) for k in missing])
    vec = ledger.successes / ledger.shots
    return KernelMatrix(expand(vec, ledger.n, diag=1.0))
