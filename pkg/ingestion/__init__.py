"""Ingestion module - synthetic generators and character corpora."""
from .chunking import CharVocab, build_vocab, chunk, load_corpus, read_vocab, split, write_vocab
from .synthetic import (
    LAMBDA_PRESETS,
    SyntheticConfig,
    make_instance,
    make_transition,
    random_stochastic_matrix,
)
