"""
Evaluation Harness

Validation cross entropy for any one-step predictor, perplexity, the
random and oracle baselines, permutation-matched parameter recovery and
per-state emission reports.

Every predictor maps a sequence Z_{0:T} to a T x m array whose row t is
its estimate of P(Z_{t+1} | Z_{0:t}); row t may depend on seq[:t+1] only.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Mapping, Optional, Protocol

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, ValidationError
from scipy.optimize import linear_sum_assignment

from hmm.errors import DatasetFormatError, VocabularyMismatchError
from hmm.filtering import cross_entropy, filter_run
from hmm.params import HmmParams, SequenceDataset
from hmm.storage import ModelFile, PathLike, model_from_file, read_raw_json
from learners.logits import LogitFile, LogitParams, to_probs
from learners.spectral import SpectralFile, SpectralModel, spectral_predict
from learners.spectral import model_from_file as spectral_from_file

logger = logging.getLogger(__name__)

EMISSION_COLUMNS = ["state", "rank", "symbol", "glyph", "probability"]


class Predictor(Protocol):
    name: str

    @property
    def m(self) -> int: ...

    def predict(self, seq: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class UniformPredictor:
    """The random baseline: 1/m for every symbol."""
    vocab_size: int
    name: str = "random"

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ValueError(f"m must be at least 2, got {self.vocab_size}")

    @property
    def m(self) -> int:
        return self.vocab_size

    def predict(self, seq: np.ndarray) -> np.ndarray:
        return np.full((len(seq), self.vocab_size), 1.0 / self.vocab_size)


@dataclass(frozen=True)
class FilterPredictor:
    """Exact HMM filter; with the generator's parameters this is the oracle."""
    params: HmmParams
    name: str = "filter"

    @property
    def m(self) -> int:
        return self.params.m

    def predict(self, seq: np.ndarray) -> np.ndarray:
        return filter_run(self.params, seq)


@dataclass(frozen=True)
class SpectralPredictor:
    model: SpectralModel
    name: str = "spectral"

    @property
    def m(self) -> int:
        return self.model.m

    def predict(self, seq: np.ndarray) -> np.ndarray:
        return spectral_predict(self.model, seq)


class BeliefNetPredictor:
    """Trained logits run through the filter (no dropout at evaluation)."""

    name = "beliefnet"

    def __init__(self, logits: LogitParams):
        self.logits = logits
        self.params = to_probs(logits)

    @property
    def m(self) -> int:
        return self.params.m

    def predict(self, seq: np.ndarray) -> np.ndarray:
        return filter_run(self.params, seq)


class MetricsFile(BaseModel):
    loss: float = Field(..., ge=0.0)
    perplexity: float = Field(..., ge=1.0)
    m: int
    n_sequences: int


def evaluate(predictor: Predictor, val: SequenceDataset) -> float:
    """
    J = mean over sequences of the per-sequence mean cross entropy of
    predict(seq)[:-1] against seq[1:]. Length-1 sequences carry no target.
    """
    if predictor.m != val.m:
        raise VocabularyMismatchError(
            f"predictor {predictor.name!r} has m={predictor.m} but dataset has m={val.m}"
        )
    losses = []
    for seq in val.sequences:
        if seq.size < 2:
            continue
        predictions = predictor.predict(seq)
        losses.append(cross_entropy(predictions[:-1], seq[1:]))
    if not losses:
        raise ValueError("dataset has no sequence with at least two tokens")

    loss = float(np.mean(losses))
    logger.info(f"[EVAL] {predictor.name}: loss {loss:.4f} over {len(losses)} sequence(s)")
    return loss


def perplexity(loss: float) -> float:
    if loss < 0:
        raise ValueError(f"loss must be non-negative, got {loss}")
    return math.exp(loss)


def metrics(predictor: Predictor, val: SequenceDataset) -> MetricsFile:
    loss = evaluate(predictor, val)
    return MetricsFile(loss=loss, perplexity=perplexity(loss), m=val.m, n_sequences=val.n_sequences)


def load_predictor(path: PathLike) -> Predictor:
    """Reads a model, logits or spectral JSON file, telling them apart by their keys."""
    document = read_raw_json(path)
    if not isinstance(document, dict):
        raise DatasetFormatError(f"{path}: expected a JSON object")
    try:
        if "B" in document and "binf" in document:
            return SpectralPredictor(spectral_from_file(SpectralFile.model_validate(document)))
        if "c_logits" in document:
            lf = LogitFile.model_validate(document)
            return BeliefNetPredictor(LogitParams(lf.pi_logits, lf.a_logits, lf.c_logits))
        if {"pi", "A", "C"} <= document.keys():
            return FilterPredictor(model_from_file(ModelFile.model_validate(document)), name=Path(path).stem)
    except ValidationError as e:
        raise DatasetFormatError(f"{path}: {e}") from e
    raise DatasetFormatError(f"{path}: not a model, logits or spectral file")


def align_states(estimate: HmmParams, truth: HmmParams) -> np.ndarray:
    """
    Hidden-state relabeling that best matches estimate to truth by emission
    rows (L1 cost, Hungarian assignment). estimate.permuted(order) is aligned.
    """
    if estimate.d != truth.d or estimate.m != truth.m:
        raise ValueError(
            f"cannot align d={estimate.d}, m={estimate.m} against d={truth.d}, m={truth.m}"
        )
    cost = np.abs(truth.C[:, None, :] - estimate.C[None, :, :]).sum(axis=2)
    rows, cols = linear_sum_assignment(cost)
    return cols[np.argsort(rows)]


def parameter_error(estimate: HmmParams, truth: HmmParams) -> Dict[str, float]:
    """Largest absolute entry-wise error of pi, A and C after align_states."""
    aligned = estimate.permuted(align_states(estimate, truth))
    return {
        "pi": float(np.max(np.abs(aligned.pi - truth.pi))),
        "A": float(np.max(np.abs(aligned.A - truth.A))),
        "C": float(np.max(np.abs(aligned.C - truth.C))),
    }


def emission_report(
    params: HmmParams,
    labels: Optional[Mapping[int, str]] = None,
    top_k: int = 5,
) -> pd.DataFrame:
    """
    Most probable symbols of every hidden state's emission row.

    Args:
        params: Model whose C rows are ranked
        labels: Symbol id to display text, e.g. CharVocab.metadata(); the
            id itself when None or when an id is missing
        top_k: Symbols listed per state, capped at m

    Returns:
        DataFrame with columns state, rank, symbol, glyph, probability;
        ties keep the lower symbol id first
    """
    if top_k < 1:
        raise ValueError(f"top_k must be at least 1, got {top_k}")
    labels = labels or {}
    k = min(top_k, params.m)
    order = np.argsort(-params.C, axis=1, kind="stable")[:, :k]

    records = []
    for state in range(params.d):
        for rank, symbol in enumerate(order[state], start=1):
            records.append({
                "state": state,
                "rank": rank,
                "symbol": int(symbol),
                "glyph": labels.get(int(symbol), str(int(symbol))),
                "probability": float(params.C[state, symbol]),
            })
    logger.info(f"[EVAL] Emission report: top {k} of m={params.m} symbols for {params.d} state(s)")
    return pd.DataFrame.from_records(records, columns=EMISSION_COLUMNS)


def random_baseline(m: int) -> float:
    """ln m, the loss of the uniform predictor."""
    return math.log(m)


def oracle_loss(truth: HmmParams, val: SequenceDataset) -> float:
    return evaluate(FilterPredictor(truth, name="oracle"), val)

