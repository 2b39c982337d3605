"""Exception hierarchy shared by every hmmforge module."""


class HmmForgeError(Exception):
    """Base class for errors raised by hmmforge."""


class ObservationRangeError(HmmForgeError, ValueError):
    """A token id is outside [0, m)."""

    def __init__(self, obs: int, m: int):
        super().__init__(f"observation out of range: {obs} not in [0, {m})")
        self.obs = obs
        self.m = m


class DatasetFormatError(HmmForgeError, ValueError):
    """A dataset, model or sidecar file does not follow its declared format."""


class VocabularyMismatchError(HmmForgeError, ValueError):
    """A model and a dataset disagree on the vocabulary size m."""


class StationaryDistributionError(HmmForgeError):
    """Power iteration on a transition matrix did not converge."""

    def __init__(self, detail: str = ""):
        message = "no stationary distribution"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)


class RankDeficiencyError(HmmForgeError):
    """The pair-probability matrix lacks the requested number of significant singular values."""

    def __init__(self, requested: int, singular_values=None):
        shown = "" if singular_values is None else f" (singular values: {list(singular_values)[:8]})"
        super().__init__(f"rank deficiency: cannot retain {requested} singular directions{shown}")
        self.requested = requested
        self.singular_values = singular_values


class GradientOverflowError(HmmForgeError, ArithmeticError):
    """A gradient contains NaN or infinite entries."""

    def __init__(self, detail: str = ""):
        message = "gradient overflow"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)
