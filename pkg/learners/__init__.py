"""Learners - Baum-Welch, spectral method of moments, Belief Net."""
from .baum_welch import EmConfig, EmFitReport, em_step, fit, forward_backward, random_init
from .beliefnet import (
    GridSpec,
    TrainConfig,
    TrainResult,
    backward,
    batch_loss_and_grad,
    forward,
    grid_search,
    train,
)
from .logits import LogitParams, init_logits, read_logits, to_probs, write_logits
from .optimizer import OptimizerState, adamw_step, cosine_lr, init_optimizer
from .spectral import (
    SpectralModel,
    build_observable,
    estimate_moments,
    exact_moments,
    fit_spectral,
    repair_prediction,
    select_rank,
    spectral_param_count,
    spectral_predict,
)
