"""
Text Chunking Module

Turns a raw character corpus into a SequenceDataset: code-point ordered
vocabulary, fixed-length chunks, seeded train/validation split.
"""

import logging
import math
import os
from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from hmm.params import SequenceDataset
from hmm.sampling import derive_rng
from hmm.storage import PathLike, read_json, write_json

logger = logging.getLogger(__name__)


class VocabFile(BaseModel):
    """Vocabulary sidecar written next to ingested datasets."""
    version: Literal[1] = 1
    glyphs: List[str]


@dataclass(frozen=True)
class CharVocab:
    """Ordered glyph list; token id = position."""
    glyphs: Tuple[str, ...]

    def __post_init__(self):
        glyphs = tuple(self.glyphs)
        if not glyphs:
            raise ValueError("vocabulary is empty")
        if len(set(glyphs)) != len(glyphs):
            raise ValueError("vocabulary glyphs must be unique")
        if any(len(g) != 1 for g in glyphs):
            raise ValueError("vocabulary glyphs must be single characters")
        object.__setattr__(self, "glyphs", glyphs)
        object.__setattr__(self, "_index", {g: i for i, g in enumerate(glyphs)})

    @property
    def m(self) -> int:
        return len(self.glyphs)

    @property
    def index(self) -> Dict[str, int]:
        return dict(self._index)

    def encode(self, text: str) -> np.ndarray:
        try:
            return np.fromiter((self._index[ch] for ch in text), dtype=np.int64, count=len(text))
        except KeyError as e:
            raise ValueError(f"character {e.args[0]!r} is not in the vocabulary")

    def decode(self, ids: Sequence[int]) -> str:
        return "".join(self.glyphs[int(i)] for i in ids)

    def metadata(self) -> Dict[int, str]:
        return {i: g for i, g in enumerate(self.glyphs)}


def build_vocab(corpus: str) -> CharVocab:
    """Vocabulary of the corpus alphabet, sorted by code point."""
    if not corpus:
        raise ValueError("corpus is empty")
    return CharVocab(glyphs=tuple(sorted(set(corpus))))


def chunk(corpus: str, vocab: CharVocab, t: int, stride: Optional[int] = None) -> SequenceDataset:
    """
    Cuts the corpus into length-t windows starting every `stride` characters
    (default stride = t, non-overlapping). The trailing partial chunk is dropped.

    Args:
        corpus: Raw text; every character must be in vocab
        vocab: Glyph-to-id mapping, carried along as dataset metadata
        t: Chunk length, at least 2
        stride: Distance between chunk starts (default: t)

    Returns:
        SequenceDataset of equal-length chunks in corpus order
    """
    stride = t if stride is None else stride
    if t < 2:
        raise ValueError(f"chunk length must be at least 2, got {t}")
    if stride < 1:
        raise ValueError(f"stride must be at least 1, got {stride}")
    if len(corpus) < t:
        raise ValueError(f"corpus has {len(corpus)} characters, shorter than chunk length {t}")

    tokens = vocab.encode(corpus)
    count = (len(corpus) - t) // stride + 1
    sequences = tuple(tokens[i * stride:i * stride + t] for i in range(count))

    logger.info(f"[INGEST] Cut {count} chunks of length {t} (stride {stride}) from {len(corpus)} characters")
    return SequenceDataset(m=vocab.m, sequences=sequences, metadata=vocab.metadata())


def split(
    dataset: SequenceDataset,
    val_fraction: float,
    seed: int,
) -> Tuple[SequenceDataset, SequenceDataset]:
    """Seeded shuffle; the last ceil(fraction * N) shuffled sequences go to validation."""
    if not 0.0 < val_fraction < 1.0:
        raise ValueError(f"val_fraction must be in (0, 1), got {val_fraction}")
    n = dataset.n_sequences
    if n < 2:
        raise ValueError(f"need at least 2 sequences to split, got {n}")

    # round() first so 0.1 * 30 does not ceil to 4
    n_val = math.ceil(round(val_fraction * n, 9))
    n_val = min(max(n_val, 1), n - 1)

    order = derive_rng(seed, 0).permutation(n)
    train = dataset.subset(order[:n - n_val].tolist())
    val = dataset.subset(order[n - n_val:].tolist())
    logger.info(f"[INGEST] Split {n} sequences into {train.n_sequences} train / {val.n_sequences} val")
    return train, val


def load_corpus(path: PathLike) -> str:
    """
    Loads a UTF-8 corpus.

    A directory is read as the concatenation of its *.txt files in sorted
    filename order.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"corpus not found: {path}")

    if os.path.isdir(path):
        txt_files = sorted(f for f in os.listdir(path) if f.lower().endswith(".txt"))
        if not txt_files:
            raise ValueError(f"no .txt files found in {path}")
        parts = []
        for filename in txt_files:
            with open(os.path.join(path, filename), "r", encoding="utf-8") as f:
                content = f.read()
            if not content:
                logger.warning(f"[INGEST] {filename} is empty, skipping")
                continue
            parts.append(content)
        corpus = "".join(parts)
    else:
        with open(path, "r", encoding="utf-8") as f:
            corpus = f.read()

    logger.info(f"[INGEST] Loaded {len(corpus)} characters from {path}")
    return corpus


def write_vocab(path: PathLike, vocab: CharVocab):
    return write_json(path, VocabFile(glyphs=list(vocab.glyphs)))


def read_vocab(path: PathLike) -> CharVocab:
    return CharVocab(glyphs=tuple(read_json(path, VocabFile).glyphs))
