"""
Synthetic HMM Instances

Builds the benchmark generators: uniform pi, transitions mixing a cyclic
permutation with a temperature-softmax random matrix, sparse emissions,
and train/validation datasets sampled on independent streams.
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import softmax

from hmm.params import HmmParams, SequenceDataset
from hmm.sampling import SeedLike, as_generator, derive_rng, sample_sequences

logger = logging.getLogger(__name__)

LAMBDA_PRESETS = {
    "random": 0.0,
    "fast-mixing": 0.7,
    "cyclic": 0.9,
    "slow-mixing": 1.0,
}

# Stream ids for derive_rng(seed, stream)
STREAM_TRANSITION = 0
STREAM_EMISSION = 1
STREAM_TRAIN = 2
STREAM_VAL = 3


@dataclass(frozen=True)
class SyntheticConfig:
    """Generator and dataset sizes for one synthetic instance."""
    d: int
    m: int
    n_train: int
    lam: float = 0.9
    temp_A: float = 0.1
    temp_C: float = 0.01
    t: int = 256
    val_fraction: float = 0.10
    seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"d must be at least 1, got {self.d}")
        if self.m < 2:
            raise ValueError(f"m must be at least 2, got {self.m}")
        if self.n_train < 1:
            raise ValueError(f"n_train must be at least 1, got {self.n_train}")
        if self.t < 1:
            raise ValueError(f"t must be at least 1, got {self.t}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must be in [0, 1], got {self.lam}")
        if self.temp_A <= 0 or self.temp_C <= 0:
            raise ValueError("temperatures must be positive")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must be in (0, 1), got {self.val_fraction}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")

    @property
    def n_val(self) -> int:
        return max(1, int(round(self.val_fraction * self.n_train)))


class SyntheticInstance(NamedTuple):
    params: HmmParams
    train: SequenceDataset
    val: SequenceDataset


def random_stochastic_matrix(rows: int, cols: int, temp: float, seed: SeedLike) -> np.ndarray:
    """Rows are softmax(g / temp) for i.i.d. standard-normal g."""
    if temp <= 0:
        raise ValueError(f"temperature must be positive, got {temp}")
    rng = as_generator(seed)
    logits = rng.standard_normal((rows, cols))
    return softmax(logits / temp, axis=1)


def cyclic_permutation(d: int) -> np.ndarray:
    """x_0 -> x_1 -> ... -> x_{d-1} -> x_0."""
    return np.roll(np.eye(d), 1, axis=1)


def make_transition(d: int, lam: float, temp: float, seed: SeedLike) -> np.ndarray:
    """A = lam * A_cyclic + (1 - lam) * A_random."""
    if d < 1:
        raise ValueError(f"d must be at least 1, got {d}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    random_part = random_stochastic_matrix(d, d, temp, seed)
    return lam * cyclic_permutation(d) + (1.0 - lam) * random_part


def make_instance(cfg: SyntheticConfig) -> SyntheticInstance:
    """Generator parameters plus train/validation datasets for cfg."""
    A = make_transition(cfg.d, cfg.lam, cfg.temp_A, derive_rng(cfg.seed, STREAM_TRANSITION))
    C = random_stochastic_matrix(cfg.d, cfg.m, cfg.temp_C, derive_rng(cfg.seed, STREAM_EMISSION))
    params = HmmParams(pi=np.full(cfg.d, 1.0 / cfg.d), A=A, C=C)

    logger.info(
        f"[DATAGEN] Instance d={cfg.d}, m={cfg.m}, lambda={cfg.lam}, "
        f"train={cfg.n_train}x{cfg.t}, val={cfg.n_val}x{cfg.t}, seed={cfg.seed}"
    )
    train = sample_sequences(params, cfg.n_train, cfg.t, derive_rng(cfg.seed, STREAM_TRAIN))
    val = sample_sequences(params, cfg.n_val, cfg.t, derive_rng(cfg.seed, STREAM_VAL))
    return SyntheticInstance(params=params, train=train, val=val)
