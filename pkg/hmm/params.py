"""
HMM Data Model

Stochastic parameter triple, filter belief state and observation datasets.
Hidden states and observations are 0-based contiguous integer ids.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from hmm.errors import StationaryDistributionError

logger = logging.getLogger(__name__)

STOCHASTIC_TOLERANCE = 1e-12


def _readonly(values, ndim: int, name: str) -> np.ndarray:
    array = np.array(values, dtype=np.float64)
    if array.ndim != ndim:
        raise ValueError(f"{name} must have {ndim} dimension(s), got shape {array.shape}")
    array.setflags(write=False)
    return array


def _check_stochastic(array: np.ndarray, name: str, tol: float) -> None:
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{name} contains non-finite entries")
    if np.any(array < 0.0) or np.any(array > 1.0):
        raise ValueError(f"{name} has entries outside [0, 1]")
    sums = array.sum(axis=-1)
    worst = float(np.max(np.abs(sums - 1.0)))
    if worst > tol:
        raise ValueError(f"{name} rows must sum to 1 (max deviation {worst:.3e})")


@dataclass(frozen=True)
class HmmParams:
    """
    The stochastic triple (pi, A, C).

    A[i, j] = P(X_{t+1}=j | X_t=i), C[i, k] = P(Z_t=k | X_t=i).
    Arrays are stored read-only so instances can be shared across threads.
    """
    pi: np.ndarray
    A: np.ndarray
    C: np.ndarray
    tolerance: float = field(default=STOCHASTIC_TOLERANCE, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "pi", _readonly(self.pi, 1, "pi"))
        object.__setattr__(self, "A", _readonly(self.A, 2, "A"))
        object.__setattr__(self, "C", _readonly(self.C, 2, "C"))

        d = self.pi.shape[0]
        if d < 1:
            raise ValueError("HMM needs at least one hidden state")
        if self.A.shape != (d, d):
            raise ValueError(f"A must be {d}x{d}, got {self.A.shape}")
        if self.C.shape[0] != d:
            raise ValueError(f"C must have {d} rows, got {self.C.shape[0]}")
        if self.C.shape[1] < 2:
            raise ValueError(f"HMM needs at least two observation symbols, got m={self.C.shape[1]}")

        _check_stochastic(self.pi, "pi", self.tolerance)
        _check_stochastic(self.A, "A", self.tolerance)
        _check_stochastic(self.C, "C", self.tolerance)

    @property
    def d(self) -> int:
        return int(self.pi.shape[0])

    @property
    def m(self) -> int:
        return int(self.C.shape[1])

    def with_initial(self, pi: np.ndarray) -> "HmmParams":
        """Copy with a different initial distribution."""
        return HmmParams(pi=pi, A=self.A, C=self.C, tolerance=self.tolerance)

    def permuted(self, order: Sequence[int]) -> "HmmParams":
        """Relabel hidden states: new state i is old state order[i]."""
        order = np.asarray(order, dtype=np.int64)
        return HmmParams(
            pi=self.pi[order],
            A=self.A[np.ix_(order, order)],
            C=self.C[order],
            tolerance=self.tolerance,
        )


def param_count(d: int, m: int) -> int:
    """Number of logits (pi, A, C) of a d-state, m-symbol HMM."""
    if d < 1 or m < 1:
        raise ValueError(f"d and m must be positive, got d={d}, m={m}")
    return d + d * d + d * m


def stationary_distribution(
    A: np.ndarray,
    tol: float = 1e-14,
    max_iter: int = 100_000,
) -> np.ndarray:
    """
    Stationary distribution of a row-stochastic matrix by power iteration.

    Starts from uniform; raises StationaryDistributionError if the iterates
    do not settle (periodic or reducible chains).
    """
    A = np.asarray(A, dtype=np.float64)
    d = A.shape[0]
    mu = np.full(d, 1.0 / d)
    for _ in range(max_iter):
        nxt = mu @ A
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - mu)) < tol:
            return nxt
        mu = nxt
    raise StationaryDistributionError(f"power iteration did not converge in {max_iter} steps")


@dataclass(frozen=True)
class BeliefState:
    """
    Filter state carried between steps.

    prior is mu_{t|t-1}; posterior mu_t; likelihood e_t; prediction p_{t+1}.
    Before the first step only prior is meaningful, the rest are zero.
    """
    prior: np.ndarray
    posterior: np.ndarray
    likelihood: np.ndarray
    prediction: np.ndarray


@dataclass(frozen=True)
class SequenceDataset:
    """N integer observation sequences over a vocabulary of size m."""
    m: int
    sequences: Tuple[np.ndarray, ...]
    metadata: Optional[Dict[int, str]] = None

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"vocabulary size must be positive, got {self.m}")
        frozen = []
        for n, seq in enumerate(self.sequences):
            array = np.array(seq, dtype=np.int64)
            if array.ndim != 1 or array.size == 0:
                raise ValueError(f"sequence {n} must be a nonempty 1-D token list")
            if array.min() < 0 or array.max() >= self.m:
                raise ValueError(f"sequence {n} has token ids outside [0, {self.m})")
            array.setflags(write=False)
            frozen.append(array)
        if not frozen:
            raise ValueError("dataset needs at least one sequence")
        object.__setattr__(self, "sequences", tuple(frozen))
        if self.metadata is not None:
            object.__setattr__(self, "metadata", dict(self.metadata))

    @property
    def n_sequences(self) -> int:
        return len(self.sequences)

    @property
    def n_tokens(self) -> int:
        return int(sum(seq.size for seq in self.sequences))

    @property
    def lengths(self) -> Tuple[int, ...]:
        return tuple(int(seq.size) for seq in self.sequences)

    def __len__(self) -> int:
        return len(self.sequences)

    def subset(self, indices: Iterable[int]) -> "SequenceDataset":
        return SequenceDataset(
            m=self.m,
            sequences=tuple(self.sequences[i] for i in indices),
            metadata=self.metadata,
        )
