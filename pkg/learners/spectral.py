"""
Spectral Learning

Method-of-moments HMM learning: triple-window moment estimation, an
SVD-based observable representation (b0, binf, B_k), the normalized
recursive update with reset, and prediction with negative-value repair.

Index convention: p21[z', z] = P(Z_{t+1}=z', Z_t=z) and
p3[k][z', z] = P(Z_{t+2}=z', Z_{t+1}=k, Z_t=z).
"""

import logging
from dataclasses import dataclass
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel

from hmm.errors import RankDeficiencyError
from hmm.filtering import cross_entropy
from hmm.params import HmmParams, SequenceDataset, stationary_distribution
from hmm.storage import PathLike, read_json, write_csv, write_json

logger = logging.getLogger(__name__)

SINGULAR_VALUE_FLOOR = 1e-10
PINV_RCOND = 1e-10


@dataclass(frozen=True)
class Moments:
    """Single, pair and triple observation probabilities from one set of windows."""
    p1: np.ndarray
    p21: np.ndarray
    p3: np.ndarray  # m x m x m, p3[k] is the matrix for middle symbol k

    @property
    def m(self) -> int:
        return int(self.p1.shape[0])


@dataclass(frozen=True)
class RankReport:
    singular_values: np.ndarray
    threshold: float
    effective_rank: int

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "k": np.arange(1, self.singular_values.size + 1, dtype=np.int64),
            "sigma": self.singular_values,
        })


@dataclass(frozen=True)
class SpectralModel:
    """Observable representation with its retained singular subspace."""
    d: int
    b0: np.ndarray
    binf: np.ndarray
    b_ops: np.ndarray  # m x d x d
    u: np.ndarray      # m x d
    rank_report: Optional[RankReport] = None

    @property
    def m(self) -> int:
        return int(self.b_ops.shape[0])


class SpectralFile(BaseModel):
    version: Literal[1] = 1
    d: int
    m: int
    b0: List[float]
    binf: List[float]
    B: List[List[List[float]]]
    U: List[List[float]]


def estimate_moments(dataset: SequenceDataset) -> Moments:
    """Counts overlapping (z_t, z_{t+1}, z_{t+2}) windows; p21 and p1 are marginals of the same counts."""
    m = dataset.m
    counts = np.zeros((m, m, m))
    windows = 0
    skipped = 0
    for seq in dataset.sequences:
        if seq.size < 3:
            skipped += 1
            continue
        first, middle, last = seq[:-2], seq[1:-1], seq[2:]
        np.add.at(counts, (middle, last, first), 1.0)
        windows += seq.size - 2

    if windows == 0:
        raise ValueError("no sequence has length >= 3; cannot estimate triple moments")
    if skipped:
        logger.warning(f"[SPECTRAL] Skipped {skipped} sequence(s) shorter than 3")

    p3 = counts / windows
    p21 = p3.sum(axis=1)
    p1 = p21.sum(axis=0)
    logger.info(f"[SPECTRAL] Estimated moments from {windows} windows (m={m})")
    return Moments(p1=p1, p21=p21, p3=p3)


def exact_moments(params: HmmParams) -> Moments:
    """Closed-form moments under the stationary distribution of A."""
    stationary = stationary_distribution(params.A)
    O = params.C.T           # m x d
    T = params.A.T           # d x d, T[j, i] = A[i, j]

    p1 = O @ stationary
    p21 = O @ T @ np.diag(stationary) @ O.T
    p3 = np.stack([
        O @ T @ np.diag(O[k]) @ T @ np.diag(stationary) @ O.T
        for k in range(params.m)
    ])
    return Moments(p1=p1, p21=p21, p3=p3)


def build_observable(moments: Moments, d: int) -> SpectralModel:
    """
    b0 = U^T p1, binf = (p21^T U)^+ p1, B_k = U^T p3[k] (U^T p21)^+
    with U the top-d left singular vectors of p21.
    """
    m = moments.m
    if d < 1:
        raise ValueError(f"d must be at least 1, got {d}")

    U, sigma, _ = np.linalg.svd(moments.p21)
    threshold = SINGULAR_VALUE_FLOOR
    report = RankReport(
        singular_values=sigma,
        threshold=threshold,
        effective_rank=int(np.sum(sigma >= threshold)),
    )
    if d > m or sigma[d - 1] < threshold:
        logger.warning(f"[SPECTRAL] Rank deficiency at d={d} (effective rank {report.effective_rank}, m={m})")
        raise RankDeficiencyError(d, sigma)

    u = U[:, :d]
    b0 = u.T @ moments.p1
    binf = np.linalg.pinv(moments.p21.T @ u, rcond=PINV_RCOND) @ moments.p1
    right = np.linalg.pinv(u.T @ moments.p21, rcond=PINV_RCOND)
    b_ops = np.stack([u.T @ moments.p3[k] @ right for k in range(m)])

    logger.info(f"[SPECTRAL] Built observable representation d={d}, m={m}, sigma_d={sigma[d - 1]:.3e}")
    return SpectralModel(d=d, b0=b0, binf=binf, b_ops=b_ops, u=u, rank_report=report)


def fit_spectral(dataset: SequenceDataset, d: int) -> SpectralModel:
    return build_observable(estimate_moments(dataset), d)


def repair_prediction(raw: np.ndarray) -> np.ndarray:
    """
    Negative entries become the smallest positive entry of the same vector,
    then renormalize; uniform when nothing is positive.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if not np.all(np.isfinite(raw)):
        return np.full(raw.size, 1.0 / raw.size)
    positive = raw[raw > 0]
    if positive.size == 0:
        return np.full(raw.size, 1.0 / raw.size)
    repaired = np.where(raw < 0, positive.min(), raw)
    return repaired / repaired.sum()


def spectral_predict(model: SpectralModel, seq: Sequence[int]) -> np.ndarray:
    """T x m predictions; row t is the repaired estimate of P(Z_{t+1} | Z_{0:t})."""
    seq = np.asarray(seq, dtype=np.int64)
    if seq.ndim != 1 or seq.size == 0:
        raise ValueError("spectral_predict needs a nonempty 1-D sequence")

    readout = np.einsum("i,kij->kj", model.binf, model.b_ops)  # row k is binf^T B_k
    predictions = np.empty((seq.size, model.m))
    b = model.b0
    for t, obs in enumerate(seq):
        propagated = model.b_ops[obs] @ b
        denom = float(model.binf @ propagated)
        if denom == 0.0 or not np.isfinite(denom):
            b = model.b0
        else:
            b = propagated / denom
        predictions[t] = repair_prediction(readout @ b)
    return predictions


def spectral_param_count(d: int, m: int) -> int:
    """Size of (b0, binf, B_1..B_m)."""
    return 2 * d + m * d * d


def spectral_loss(model: SpectralModel, dataset: SequenceDataset) -> float:
    losses = [
        cross_entropy(spectral_predict(model, seq)[:-1], seq[1:])
        for seq in dataset.sequences if seq.size >= 2
    ]
    if not losses:
        raise ValueError("dataset has no sequence with at least two tokens")
    return float(np.mean(losses))


def select_rank(
    train: SequenceDataset,
    val: SequenceDataset,
    max_d: int,
) -> Tuple[SpectralModel, List[Tuple[int, Optional[float]]]]:
    """
    Tries every rank 1..max_d on shared moments and keeps the lowest
    validation loss; rank-deficient ranks are recorded with loss None.
    """
    moments = estimate_moments(train)
    best: Optional[Tuple[float, SpectralModel]] = None
    table: List[Tuple[int, Optional[float]]] = []
    for d in range(1, max_d + 1):
        try:
            model = build_observable(moments, d)
        except RankDeficiencyError:
            table.append((d, None))
            continue
        loss = spectral_loss(model, val)
        table.append((d, loss))
        if best is None or loss < best[0]:
            best = (loss, model)

    if best is None:
        raise RankDeficiencyError(1)
    logger.info(f"[SPECTRAL] Selected rank d={best[1].d} (validation loss {best[0]:.4f})")
    return best[1], table


def model_to_file(model: SpectralModel) -> SpectralFile:
    return SpectralFile(
        d=model.d,
        m=model.m,
        b0=model.b0.tolist(),
        binf=model.binf.tolist(),
        B=model.b_ops.tolist(),
        U=model.u.tolist(),
    )


def model_from_file(document: SpectralFile) -> SpectralModel:
    model = SpectralModel(
        d=document.d,
        b0=np.asarray(document.b0, dtype=np.float64),
        binf=np.asarray(document.binf, dtype=np.float64),
        b_ops=np.asarray(document.B, dtype=np.float64),
        u=np.asarray(document.U, dtype=np.float64),
    )
    if model.b_ops.shape != (document.m, document.d, document.d):
        raise ValueError(f"B has shape {model.b_ops.shape}, expected ({document.m}, {document.d}, {document.d})")
    return model


def write_spectral(path: PathLike, model: SpectralModel):
    return write_json(path, model_to_file(model))


def read_spectral(path: PathLike) -> SpectralModel:
    return model_from_file(read_json(path, SpectralFile))


def write_rank_report(path: PathLike, report: RankReport):
    return write_csv(path, report.to_frame())
