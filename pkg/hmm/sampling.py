"""
Sequence Sampling

Ancestral sampling from an HMM: X_0 ~ pi, Z_t ~ C[X_t], X_{t+1} ~ A[X_t].
All randomness flows through numpy Generators derived from (seed, stream).
"""

import logging
from typing import Union

import numpy as np

from hmm.params import HmmParams, SequenceDataset

logger = logging.getLogger(__name__)

SeedLike = Union[int, np.random.Generator]


def derive_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for the (seed, stream) pair."""
    if seed < 0 or stream < 0:
        raise ValueError(f"seed and stream must be non-negative, got seed={seed}, stream={stream}")
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream)]))


def as_generator(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return derive_rng(int(seed), 0)


def sample_categorical(rng: np.random.Generator, rows: np.ndarray) -> np.ndarray:
    """Draw one index per row of a row-stochastic matrix by inverse CDF."""
    cdf = np.cumsum(rows, axis=1)
    u = rng.random(rows.shape[0])
    picks = (cdf <= u[:, None]).sum(axis=1)
    # rounding can leave cdf[-1] below u; fall back to the last index with mass
    last_positive = rows.shape[1] - 1 - np.argmax(rows[:, ::-1] > 0, axis=1)
    return np.minimum(picks, last_positive)


def sample_sequences(params: HmmParams, n: int, t: int, seed: SeedLike) -> SequenceDataset:
    """Sample n sequences of length t; identical seeds give identical datasets."""
    if n < 1 or t < 1:
        raise ValueError(f"n and t must be at least 1, got n={n}, t={t}")

    rng = as_generator(seed)
    tokens = np.empty((n, t), dtype=np.int64)

    states = sample_categorical(rng, np.broadcast_to(params.pi, (n, params.d)))
    for step in range(t):
        tokens[:, step] = sample_categorical(rng, params.C[states])
        if step + 1 < t:
            states = sample_categorical(rng, params.A[states])

    logger.debug(f"[SAMPLE] Drew {n} sequences of length {t} (d={params.d}, m={params.m})")
    return SequenceDataset(m=params.m, sequences=tuple(tokens))
