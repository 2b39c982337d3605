"""
Belief Net

The HMM filter run on softmax-parameterized logits, its exact reverse-mode
gradient, and the mini-batch AdamW training loop with grid search over
learning rate and dropout.

Dropout (training only) masks the corrected posterior mu_t element-wise,
rescales by 1/(1-p) and renormalizes before the transition step. A step
whose mask would zero the whole posterior is left undropped.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from config.settings import get_config
from hmm.errors import GradientOverflowError, ObservationRangeError
from hmm.filtering import POSTERIOR_EPSILON, POSTERIOR_FLOOR, PROBABILITY_FLOOR, cross_entropy, dataset_loss
from hmm.params import HmmParams, SequenceDataset
from hmm.sampling import derive_rng
from learners.logits import LogitParams, init_logits, to_probs
from learners.optimizer import adamw_step, cosine_lr, init_optimizer

logger = logging.getLogger(__name__)

# Stream ids for derive_rng(cfg.seed, stream)
STREAM_INIT = 0
STREAM_BATCH = 1
STREAM_DROPOUT = 2

Curve = List[Tuple[int, float]]


@dataclass
class Tape:
    """Intermediates of one forward pass, consumed by backward()."""
    params: HmmParams
    seq: np.ndarray
    priors: np.ndarray       # (T+1) x d, priors[t] = mu_{t|t-1}
    corrected: np.ndarray    # T x d, u_t / s_t before dropout
    posteriors: np.ndarray   # T x d, mu_t fed to the transition
    sums: np.ndarray         # T, s_t
    masks: Optional[np.ndarray]  # T x d scaled dropout masks, None without dropout
    predictions: np.ndarray  # T x m, predictions[t] = p_{t+1}
    loss: float


def forward(
    lp: LogitParams,
    seq: Sequence[int],
    dropout: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[np.ndarray, float, Tape]:
    """
    Filter predictions p_{1:T}, the cross entropy against seq[1:], and the tape.
    With dropout=0 the predictions equal filter_run(to_probs(lp), seq).
    """
    return _filter_with_tape(to_probs(lp), seq, dropout, rng)


def _filter_with_tape(
    params: HmmParams,
    seq: Sequence[int],
    dropout: float,
    rng: Optional[np.random.Generator],
) -> Tuple[np.ndarray, float, Tape]:
    seq = np.asarray(seq, dtype=np.int64)
    if seq.ndim != 1 or seq.size < 2:
        raise ValueError("no prediction targets: sequence needs at least two tokens")
    if dropout > 0 and rng is None:
        raise ValueError("dropout needs a random generator")
    if seq.min() < 0 or seq.max() >= params.m:
        raise ObservationRangeError(int(seq[(seq < 0) | (seq >= params.m)][0]), params.m)

    T, d = seq.size, params.d
    priors = np.empty((T + 1, d))
    corrected = np.empty((T, d))
    posteriors = np.empty((T, d))
    sums = np.empty(T)
    masks = np.ones((T, d)) if dropout > 0 else None
    predictions = np.empty((T, params.m))

    priors[0] = params.pi
    for t in range(T):
        unnormalized = params.C[:, seq[t]] * priors[t]
        total = unnormalized.sum()
        if total < POSTERIOR_FLOOR:
            unnormalized = unnormalized + POSTERIOR_EPSILON
            total = unnormalized.sum()
        sums[t] = total
        corrected[t] = unnormalized / total

        posterior = corrected[t]
        if masks is not None:
            mask = (rng.random(d) >= dropout) / (1.0 - dropout)
            dropped = posterior * mask
            if dropped.sum() > 0:
                masks[t] = mask
                posterior = dropped / dropped.sum()
        posteriors[t] = posterior

        priors[t + 1] = posterior @ params.A
        predictions[t] = priors[t + 1] @ params.C

    loss = cross_entropy(predictions[:-1], seq[1:])

    tape = Tape(
        params=params,
        seq=seq,
        priors=priors,
        corrected=corrected,
        posteriors=posteriors,
        sums=sums,
        masks=masks,
        predictions=predictions,
        loss=loss,
    )
    return predictions, loss, tape


def _softmax_backward(probs: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Pull a gradient on softmax outputs back to the logits (row-wise)."""
    inner = np.sum(grad * probs, axis=-1, keepdims=True)
    return probs * (grad - inner)


def backward(tape: Tape) -> LogitParams:
    """Exact gradient of tape.loss with respect to the logits."""
    params, seq = tape.params, tape.seq
    T = seq.size
    n_targets = T - 1
    A, C = params.A, params.C

    grad_A = np.zeros_like(A)
    grad_C = np.zeros_like(C)
    grad_prior = np.zeros(params.d)  # dL/d mu_{t+1|t}, flowing back from later steps

    for t in range(T - 1, -1, -1):
        # estimation: p_{t+1} = mu_{t+1|t} C, scored against seq[t+1]
        if t + 1 < T:
            target = seq[t + 1]
            p = tape.predictions[t, target]
            if p >= PROBABILITY_FLOOR:
                grad_p = -1.0 / (n_targets * p)
                grad_C[:, target] += tape.priors[t + 1] * grad_p
                grad_prior = grad_prior + C[:, target] * grad_p

        # transition: mu_{t+1|t} = mu_t A
        grad_A += np.outer(tape.posteriors[t], grad_prior)
        grad_post = A @ grad_prior

        # dropout renormalization
        if tape.masks is not None and not np.all(tape.masks[t] == 1.0):
            dropped = tape.corrected[t] * tape.masks[t]
            total = dropped.sum()
            grad_dropped = (grad_post - grad_post @ tape.posteriors[t]) / total
            grad_post = grad_dropped * tape.masks[t]

        # correction: mu_t = u / sum(u), u = e_t * mu_{t|t-1}
        grad_u = (grad_post - grad_post @ tape.corrected[t]) / tape.sums[t]
        obs = seq[t]
        grad_C[:, obs] += grad_u * tape.priors[t]
        grad_prior = grad_u * C[:, obs]

    return LogitParams(
        _softmax_backward(params.pi, grad_prior),
        _softmax_backward(A, grad_A),
        _softmax_backward(C, grad_C),
    )


def batch_loss_and_grad(
    lp: LogitParams,
    batch: Sequence[np.ndarray],
    dropout: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[float, LogitParams]:
    """Mean loss and mean gradient over the batch, reduced in batch order."""
    if not batch:
        raise ValueError("batch is empty")
    params = to_probs(lp)
    total_loss = 0.0
    grads = [np.zeros_like(a) for a in lp.arrays()]
    for seq in batch:
        _, loss, tape = _filter_with_tape(params, seq, dropout, rng)
        total_loss += loss
        for acc, g in zip(grads, backward(tape).arrays()):
            acc += g
    n = len(batch)
    return total_loss / n, LogitParams(*(g / n for g in grads))


@dataclass(frozen=True)
class TrainConfig:
    """Mini-batch AdamW schedule for one Belief Net run."""
    batch_size: int = 10
    max_iters: int = 2000
    lr: float = 0.01
    dropout: float = 0.0
    val_every: int = 50
    seed: int = 0
    weight_decay: float = 0.01
    schedule: str = "constant"
    patience: Optional[int] = None
    init_scale: float = 0.1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be non-negative, got {self.max_iters}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.val_every < 1:
            raise ValueError(f"val_every must be at least 1, got {self.val_every}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        if self.schedule not in ("constant", "cosine"):
            raise ValueError(f"schedule must be 'constant' or 'cosine', got {self.schedule!r}")
        if self.patience is not None and self.patience < 1:
            raise ValueError(f"patience must be at least 1, got {self.patience}")


@dataclass
class TrainResult:
    logits: LogitParams
    training_curve: Curve = field(default_factory=list)
    validation_curve: Curve = field(default_factory=list)
    iterations: int = 0
    stopped_early: bool = False

    @property
    def final_validation_loss(self) -> Optional[float]:
        return self.validation_curve[-1][1] if self.validation_curve else None


def train(
    dataset: SequenceDataset,
    d: int,
    cfg: TrainConfig,
    val: Optional[SequenceDataset] = None,
) -> Tuple[HmmParams, TrainResult]:
    """
    Samples cfg.batch_size sequences with replacement per iteration, records
    J_l every iteration and the validation loss every cfg.val_every iterations
    (and at the last iteration), and returns softmax of the final logits.

    Args:
        dataset: Training sequences, each at least two tokens long
        d: Hidden-state count of the model being fit
        cfg: Batch size, AdamW settings, dropout, schedule and seed
        val: Validation sequences; no validation curve when None

    Returns:
        Tuple of (params, result): the stochastic triple from the final
        logits, and a TrainResult holding those logits and both loss curves

    Raises:
        ValueError: If d < 1, a sequence is too short, or the vocabularies differ
        GradientOverflowError: If the loss or a gradient stops being finite
    """
    if d < 1:
        raise ValueError(f"d must be at least 1, got {d}")
    if any(length < 2 for length in dataset.lengths):
        raise ValueError("every training sequence needs at least two tokens")
    if val is not None and val.m != dataset.m:
        raise ValueError(f"train m={dataset.m} and validation m={val.m} differ")

    lp = init_logits(d, dataset.m, derive_rng(cfg.seed, STREAM_INIT), scale=cfg.init_scale)
    opt = init_optimizer(lp, cfg.lr, weight_decay=cfg.weight_decay)
    batch_rng = derive_rng(cfg.seed, STREAM_BATCH)
    dropout_rng = derive_rng(cfg.seed, STREAM_DROPOUT)

    result = TrainResult(logits=lp)
    best_val = float("inf")
    checks_without_improvement = 0
    show_progress = get_config().runtime.progress

    logger.info(
        f"[TRAIN] d={d}, m={dataset.m}, N={dataset.n_sequences}, lr={cfg.lr}, dropout={cfg.dropout}, "
        f"batch={cfg.batch_size}, iters={cfg.max_iters}, seed={cfg.seed}"
    )
    progress = tqdm(range(1, cfg.max_iters + 1), desc="Belief Net", disable=not show_progress)
    for iteration in progress:
        picks = batch_rng.integers(0, dataset.n_sequences, size=cfg.batch_size)
        batch = [dataset.sequences[i] for i in picks]
        loss, grad = batch_loss_and_grad(lp, batch, dropout=cfg.dropout, rng=dropout_rng)
        if not np.isfinite(loss):
            raise GradientOverflowError(f"non-finite training loss at iteration {iteration}")

        lr = cosine_lr(cfg.lr, iteration - 1, cfg.max_iters) if cfg.schedule == "cosine" else cfg.lr
        lp, opt = adamw_step(lp, grad, opt, lr=lr)
        result.training_curve.append((iteration, loss))
        result.iterations = iteration

        if val is not None and (iteration % cfg.val_every == 0 or iteration == cfg.max_iters):
            val_loss = dataset_loss(to_probs(lp), val)
            result.validation_curve.append((iteration, val_loss))
            progress.set_postfix(train=f"{loss:.4f}", val=f"{val_loss:.4f}")
            logger.debug(f"[TRAIN] iter {iteration}: train {loss:.4f}, val {val_loss:.4f}")

            if val_loss < best_val:
                best_val = val_loss
                checks_without_improvement = 0
            else:
                checks_without_improvement += 1
            if cfg.patience is not None and checks_without_improvement >= cfg.patience:
                logger.info(f"[TRAIN] Early stop at iteration {iteration} (patience {cfg.patience})")
                result.stopped_early = True
                break

    result.logits = lp
    final = result.final_validation_loss
    logger.info(f"[TRAIN] Finished {result.iterations} iteration(s), final validation loss {final}")
    return to_probs(lp), result


@dataclass(frozen=True)
class GridSpec:
    lrs: Tuple[float, ...] = (0.01, 0.1)
    dropouts: Tuple[float, ...] = (0.0, 0.1)

    def __post_init__(self):
        if not self.lrs or not self.dropouts:
            raise ValueError("grid needs at least one learning rate and one dropout value")

    def points(self) -> List[Tuple[float, float]]:
        return [(lr, p) for lr in self.lrs for p in self.dropouts]


@dataclass
class GridSearchResult:
    params: HmmParams
    config: TrainConfig
    result: TrainResult
    table: List[Tuple[float, float, float]]  # (lr, dropout, final validation loss)


def grid_search(
    dataset: SequenceDataset,
    d: int,
    grid: GridSpec,
    val: SequenceDataset,
    base: Optional[TrainConfig] = None,
) -> GridSearchResult:
    """One run per (lr, dropout); lowest final validation loss wins, ties to lower lr then dropout."""
    base = base or TrainConfig()
    runs = []
    for lr, dropout in grid.points():
        cfg = replace(base, lr=lr, dropout=dropout)
        params, result = train(dataset, d, cfg, val)
        final = result.final_validation_loss
        if final is None:
            final = dataset_loss(params, val)
        logger.info(f"[GRID] lr={lr}, dropout={dropout}: validation loss {final:.4f}")
        runs.append((final, lr, dropout, params, cfg, result))

    best = min(runs, key=lambda r: (r[0], r[1], r[2]))
    logger.info(f"[GRID] Selected lr={best[1]}, dropout={best[2]} (validation loss {best[0]:.4f})")
    return GridSearchResult(
        params=best[3],
        config=best[4],
        result=best[5],
        table=[(r[1], r[2], r[0]) for r in runs],
    )
