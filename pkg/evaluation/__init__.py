"""Evaluation - validation loss, perplexity, baselines and dimension sweeps."""
from .harness import (
    BeliefNetPredictor,
    FilterPredictor,
    MetricsFile,
    Predictor,
    SpectralPredictor,
    UniformPredictor,
    align_states,
    emission_report,
    evaluate,
    load_predictor,
    metrics,
    oracle_loss,
    parameter_error,
    perplexity,
    random_baseline,
)
from .sweep import METHODS, SweepReport, SweepRow, sweep
