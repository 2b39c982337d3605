"""HMM core - data model, forward filter, sampling, file formats."""
from .errors import (
    DatasetFormatError,
    GradientOverflowError,
    HmmForgeError,
    ObservationRangeError,
    RankDeficiencyError,
    StationaryDistributionError,
    VocabularyMismatchError,
)
from .params import (
    BeliefState,
    HmmParams,
    SequenceDataset,
    param_count,
    stationary_distribution,
)
from .filtering import (
    cross_entropy,
    dataset_loss,
    filter_init,
    filter_run,
    filter_step,
    log_likelihood,
    reset_zero_probability_events,
    sequence_loss,
    zero_probability_events,
)
from .sampling import derive_rng, sample_sequences
