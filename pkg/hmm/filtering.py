"""
Forward Filtering

Exact HMM filter (emission, correction, transition, estimation) with
per-step renormalization, plus the cross-entropy objective every learner
is scored with.
"""

import logging
import threading
from typing import Sequence

import numpy as np

from hmm.errors import ObservationRangeError
from hmm.params import BeliefState, HmmParams, SequenceDataset

logger = logging.getLogger(__name__)

# Unnormalized posteriors below this sum are treated as impossible observations.
POSTERIOR_FLOOR = 1e-300
POSTERIOR_EPSILON = 1e-12
PROBABILITY_FLOOR = 1e-300

_zero_probability_lock = threading.Lock()
_zero_probability_hits = 0


def zero_probability_events() -> int:
    """How many target probabilities cross_entropy had to clamp since the last reset."""
    return _zero_probability_hits


def reset_zero_probability_events() -> None:
    global _zero_probability_hits
    with _zero_probability_lock:
        _zero_probability_hits = 0


def correct(prior: np.ndarray, likelihood: np.ndarray) -> np.ndarray:
    """Correction step: posterior proportional to likelihood * prior, floored."""
    unnormalized = likelihood * prior
    total = unnormalized.sum()
    if total < POSTERIOR_FLOOR:
        logger.debug("[FILTER] Posterior underflow, applying epsilon floor")
        unnormalized = unnormalized + POSTERIOR_EPSILON
        total = unnormalized.sum()
    return unnormalized / total


def filter_init(params: HmmParams) -> BeliefState:
    """Prior initialization: mu_{0|-1} = pi."""
    d, m = params.d, params.m
    return BeliefState(
        prior=params.pi.copy(),
        posterior=np.zeros(d),
        likelihood=np.zeros(d),
        prediction=np.zeros(m),
    )


def filter_step(state: BeliefState, params: HmmParams, obs: int) -> BeliefState:
    """One emission -> correction -> transition -> estimation update."""
    obs = int(obs)
    if obs < 0 or obs >= params.m:
        raise ObservationRangeError(obs, params.m)

    likelihood = params.C[:, obs]
    posterior = correct(state.prior, likelihood)
    prior_next = posterior @ params.A
    prediction = prior_next @ params.C

    return BeliefState(
        prior=prior_next,
        posterior=posterior,
        likelihood=likelihood.copy(),
        prediction=prediction,
    )


def filter_run(params: HmmParams, seq: Sequence[int]) -> np.ndarray:
    """
    Run the filter over seq and return the T x m array of one-step-ahead
    predictions p_{1:T}; row t is P(Z_{t+1} | Z_{0:t}).
    """
    seq = np.asarray(seq, dtype=np.int64)
    if seq.ndim != 1 or seq.size == 0:
        raise ValueError("filter_run needs a nonempty 1-D sequence")

    predictions = np.empty((seq.size, params.m))
    state = filter_init(params)
    for t, obs in enumerate(seq):
        state = filter_step(state, params, obs)
        predictions[t] = state.prediction
    return predictions


def cross_entropy(predictions: np.ndarray, targets: Sequence[int]) -> float:
    """
    Mean negative log-probability (nats) of targets under predictions.

    predictions[t] is the distribution scored against targets[t]. Literal
    zeros at the target index are clamped to 1e-300 and counted.
    """
    global _zero_probability_hits

    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    if predictions.ndim != 2 or predictions.shape[0] != targets.size:
        raise ValueError(
            f"predictions ({predictions.shape}) and targets ({targets.size}) length mismatch"
        )
    if targets.size == 0:
        raise ValueError("cross_entropy needs at least one target")

    picked = predictions[np.arange(targets.size), targets]
    clamped = picked < PROBABILITY_FLOOR
    if np.any(clamped):
        hits = int(clamped.sum())
        with _zero_probability_lock:
            _zero_probability_hits += hits
        logger.warning(f"[FILTER] Clamped {hits} zero-probability target(s) to {PROBABILITY_FLOOR}")
        picked = np.maximum(picked, PROBABILITY_FLOOR)

    return float(-np.mean(np.log(picked)))


def sequence_loss(params: HmmParams, seq: Sequence[int]) -> float:
    """Cross entropy of filter_run(params, seq) against seq[1:]."""
    seq = np.asarray(seq, dtype=np.int64)
    if seq.size < 2:
        raise ValueError("no prediction targets: sequence needs at least two tokens")
    predictions = filter_run(params, seq)
    return cross_entropy(predictions[:-1], seq[1:])


def dataset_loss(params: HmmParams, dataset: SequenceDataset) -> float:
    """Mean over sequences of the per-sequence cross entropy; length-1 sequences are skipped."""
    if dataset.m != params.m:
        raise ValueError(f"model has m={params.m} but dataset has m={dataset.m}")
    losses = [sequence_loss(params, seq) for seq in dataset.sequences if seq.size >= 2]
    if not losses:
        raise ValueError("dataset has no sequence with at least two tokens")
    return float(np.mean(losses))


def log_likelihood(params: HmmParams, seq: Sequence[int]) -> float:
    """log P(Z_{0:T}) by the scaled forward algorithm (alpha recursion).

    An impossible observation goes through the same epsilon floor as
    ``correct``, so the result stays finite and matches the smoother's loglik.
    """
    seq = np.asarray(seq, dtype=np.int64)
    if seq.ndim != 1 or seq.size == 0:
        raise ValueError("log_likelihood needs a nonempty 1-D sequence")
    if seq.min() < 0 or seq.max() >= params.m:
        bad = int(seq[(seq < 0) | (seq >= params.m)][0])
        raise ObservationRangeError(bad, params.m)

    alpha = params.pi * params.C[:, seq[0]]
    total = 0.0
    for t in range(seq.size):
        if t > 0:
            alpha = (alpha @ params.A) * params.C[:, seq[t]]
        scale = alpha.sum()
        if scale < POSTERIOR_FLOOR:
            alpha = alpha + POSTERIOR_EPSILON
            scale = alpha.sum()
        total += np.log(scale)
        alpha = alpha / scale
    return float(total)
