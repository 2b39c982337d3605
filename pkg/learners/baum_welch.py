"""
Baum-Welch (EM) Learning

Scaled forward-backward smoothing, closed-form M-step, fixed iteration cap
and best-of-restarts selection on validation cross entropy.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Literal, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel
from scipy.special import softmax
from tqdm import tqdm

from config.settings import get_config
from hmm.errors import ObservationRangeError
from hmm.filtering import POSTERIOR_EPSILON, POSTERIOR_FLOOR, dataset_loss
from hmm.params import HmmParams, SequenceDataset
from hmm.sampling import derive_rng

logger = logging.getLogger(__name__)

OCCUPANCY_FLOOR = 1e-300


@dataclass(frozen=True)
class EmConfig:
    """EM schedule. max_iters=0 returns the random initialization untouched."""
    max_iters: int = 20
    restarts: int = 5
    seed: int = 0
    ll_tolerance: float = 0.0

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be non-negative, got {self.max_iters}")
        if self.restarts < 1:
            raise ValueError(f"restarts must be at least 1, got {self.restarts}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        if self.ll_tolerance < 0:
            raise ValueError(f"ll_tolerance must be non-negative, got {self.ll_tolerance}")


@dataclass
class SmoothingStats:
    """E-step sufficient statistics, accumulated over sequences."""
    gamma: List[np.ndarray]
    xi_sum: np.ndarray
    obs_sum: np.ndarray
    init_sum: np.ndarray
    loglik: float

    @classmethod
    def empty(cls, d: int, m: int) -> "SmoothingStats":
        return cls(
            gamma=[],
            xi_sum=np.zeros((d, d)),
            obs_sum=np.zeros((d, m)),
            init_sum=np.zeros(d),
            loglik=0.0,
        )

    def accumulate(self, other: "SmoothingStats", keep_gamma: bool = True) -> None:
        if keep_gamma:
            self.gamma.extend(other.gamma)
        self.xi_sum += other.xi_sum
        self.obs_sum += other.obs_sum
        self.init_sum += other.init_sum
        self.loglik += other.loglik


def forward_backward(params: HmmParams, seq: Sequence[int]) -> SmoothingStats:
    """Scaled forward-backward pass over one sequence."""
    seq = np.asarray(seq, dtype=np.int64)
    if seq.ndim != 1 or seq.size == 0:
        raise ValueError("forward_backward needs a nonempty 1-D sequence")
    if seq.min() < 0 or seq.max() >= params.m:
        bad = int(seq[(seq < 0) | (seq >= params.m)][0])
        raise ObservationRangeError(bad, params.m)

    T, d = seq.size, params.d
    A, C = params.A, params.C
    emissions = C[:, seq].T  # T x d

    # A floored step adds epsilon to every unnormalized entry. Since alpha rows
    # sum to one, that is the kernel A[j, i] * e[i] + epsilon, and the backward
    # pass and xi use the same kernel.
    alpha = np.empty((T, d))
    scales = np.empty(T)
    floored = np.zeros(T, dtype=bool)
    for t in range(T):
        unnormalized = (params.pi if t == 0 else alpha[t - 1] @ A) * emissions[t]
        total = unnormalized.sum()
        if total < POSTERIOR_FLOOR:
            logger.debug(f"[EM] Impossible observation at t={t}, applying epsilon floor")
            floored[t] = True
            unnormalized = unnormalized + POSTERIOR_EPSILON
            total = unnormalized.sum()
        scales[t] = total
        alpha[t] = unnormalized / total

    beta = np.empty((T, d))
    beta[-1] = 1.0
    for t in range(T - 2, -1, -1):
        carried = A @ (emissions[t + 1] * beta[t + 1])
        if floored[t + 1]:
            carried = carried + POSTERIOR_EPSILON * beta[t + 1].sum()
        beta[t] = carried / scales[t + 1]

    gamma = alpha * beta
    gamma /= gamma.sum(axis=1, keepdims=True)

    xi_sum = np.zeros((d, d))
    if T > 1:
        weighted = emissions[1:] * beta[1:] / scales[1:, None]  # (T-1) x d
        xi_sum = A * (alpha[:-1].T @ weighted)
        steps = floored[1:]
        if steps.any():
            xi_sum += POSTERIOR_EPSILON * (alpha[:-1][steps].T @ (beta[1:][steps] / scales[1:][steps, None]))

    obs_sum = np.zeros((d, params.m))
    np.add.at(obs_sum.T, seq, gamma)

    return SmoothingStats(
        gamma=[gamma],
        xi_sum=xi_sum,
        obs_sum=obs_sum,
        init_sum=gamma[0].copy(),
        loglik=float(np.log(scales).sum()),
    )


def e_step(params: HmmParams, dataset: SequenceDataset, keep_gamma: bool = False) -> SmoothingStats:
    """Sum of per-sequence contributions, reduced in dataset order."""
    stats = SmoothingStats.empty(params.d, params.m)
    for seq in dataset.sequences:
        stats.accumulate(forward_backward(params, seq), keep_gamma=keep_gamma)
    return stats


def _normalize_rows(counts: np.ndarray, previous: np.ndarray) -> np.ndarray:
    totals = counts.sum(axis=1, keepdims=True)
    empty = totals[:, 0] < OCCUPANCY_FLOOR
    safe = np.where(totals < OCCUPANCY_FLOOR, 1.0, totals)
    rows = counts / safe
    # zero-occupancy states keep their previous row
    rows[empty] = previous[empty]
    return rows / rows.sum(axis=1, keepdims=True)


def m_step(stats: SmoothingStats, previous: HmmParams) -> HmmParams:
    """Closed-form maximizer of the EM bound for the accumulated statistics."""
    if stats.init_sum.sum() < OCCUPANCY_FLOOR:
        pi = previous.pi.copy()
    else:
        pi = stats.init_sum / stats.init_sum.sum()
    A = _normalize_rows(stats.xi_sum, previous.A)
    C = _normalize_rows(stats.obs_sum, previous.C)
    return HmmParams(pi=pi / pi.sum(), A=A, C=C)


def em_step(params: HmmParams, dataset: SequenceDataset) -> Tuple[HmmParams, float]:
    """One EM update; the log-likelihood returned is that of the input params."""
    if dataset.m != params.m:
        raise ValueError(f"model has m={params.m} but dataset has m={dataset.m}")
    stats = e_step(params, dataset)
    return m_step(stats, params), stats.loglik


def random_init(d: int, m: int, rng: np.random.Generator) -> HmmParams:
    """Softmax of standard-normal logits at temperature 1 for pi, A and C rows."""
    return HmmParams(
        pi=softmax(rng.standard_normal(d)),
        A=softmax(rng.standard_normal((d, d)), axis=1),
        C=softmax(rng.standard_normal((d, m)), axis=1),
    )


class FitSummaryFile(BaseModel):
    """JSON summary of a multi-restart EM fit."""
    version: Literal[1] = 1
    selected_restart: int
    validation_loss: float
    validation_losses: List[float]
    iterations: List[int]


@dataclass
class EmFitReport:
    """Per-restart log-likelihood trajectories and validation losses."""
    trajectories: List[List[float]] = field(default_factory=list)
    validation_losses: List[float] = field(default_factory=list)
    selected_restart: int = 0

    @property
    def validation_loss(self) -> float:
        return self.validation_losses[self.selected_restart]

    def to_frame(self) -> pd.DataFrame:
        rows = [
            (restart, iteration, loglik)
            for restart, trajectory in enumerate(self.trajectories)
            for iteration, loglik in enumerate(trajectory)
        ]
        frame = pd.DataFrame(rows, columns=["restart", "iteration", "loglik"])
        return frame.astype({"restart": "int64", "iteration": "int64"})

    def summary(self) -> FitSummaryFile:
        return FitSummaryFile(
            selected_restart=self.selected_restart,
            validation_loss=self.validation_loss,
            validation_losses=list(self.validation_losses),
            iterations=[len(t) for t in self.trajectories],
        )


def run_em(
    params: HmmParams,
    dataset: SequenceDataset,
    max_iters: int,
    ll_tolerance: float = 0.0,
) -> Tuple[HmmParams, List[float]]:
    """Iterate em_step from params; returns final params and the input-loglik trajectory."""
    trajectory: List[float] = []
    for iteration in range(max_iters):
        new_params, loglik = em_step(params, dataset)
        if trajectory and ll_tolerance > 0 and loglik - trajectory[-1] < ll_tolerance:
            trajectory.append(loglik)
            logger.info(f"[EM] Converged at iteration {iteration} (improvement below {ll_tolerance})")
            return params, trajectory
        trajectory.append(loglik)
        params = new_params
    return params, trajectory


def fit(
    dataset: SequenceDataset,
    d: int,
    cfg: EmConfig,
    val: SequenceDataset,
) -> Tuple[HmmParams, EmFitReport]:
    """
    Runs cfg.restarts independent EM runs from random initializations and
    keeps the one with the lowest validation cross entropy.

    Args:
        dataset: Training sequences
        d: Hidden-state count of the model being fit
        cfg: Iterations, restarts, seed and log-likelihood tolerance
        val: Validation sequences used to pick the restart

    Returns:
        Tuple of (params, report): the selected restart's parameters and an
        EmFitReport with every restart's trajectory and validation loss
    """
    if d < 1:
        raise ValueError(f"d must be at least 1, got {d}")
    if val.m != dataset.m:
        raise ValueError(f"train m={dataset.m} and validation m={val.m} differ")

    report = EmFitReport()
    candidates: List[HmmParams] = []
    show_progress = get_config().runtime.progress

    logger.info(f"[EM] Fitting d={d}, m={dataset.m} with {cfg.restarts} restart(s) x {cfg.max_iters} iteration(s)")
    for restart in tqdm(range(cfg.restarts), desc="EM restarts", disable=not show_progress):
        init = random_init(d, dataset.m, derive_rng(cfg.seed, restart))
        params, trajectory = run_em(init, dataset, cfg.max_iters, cfg.ll_tolerance)
        val_loss = dataset_loss(params, val)

        candidates.append(params)
        report.trajectories.append(trajectory)
        report.validation_losses.append(val_loss)
        final_ll = f"{trajectory[-1]:.4f}" if trajectory else "n/a"
        logger.info(f"[EM] Restart {restart}: last loglik {final_ll}, validation loss {val_loss:.4f}")

    report.selected_restart = int(np.argmin(report.validation_losses))
    logger.info(f"[EM] Selected restart {report.selected_restart} (validation loss {report.validation_loss:.4f})")
    return candidates[report.selected_restart], report
