"""
Logit Parameterization

Unconstrained weights (pi_logits, a_logits, c_logits) mapped to a valid
HmmParams by row-wise softmax.

c_logits is d x m: the trainable count d + d^2 + d*m is what param_count
reports.
"""

from dataclasses import dataclass
from typing import List, Literal, Tuple

import numpy as np
from pydantic import BaseModel
from scipy.special import softmax

from hmm.params import HmmParams
from hmm.storage import PathLike, read_json, write_json

INIT_SCALE = 0.1


@dataclass(frozen=True)
class LogitParams:
    pi_logits: np.ndarray
    a_logits: np.ndarray
    c_logits: np.ndarray

    def __post_init__(self):
        pi = np.array(self.pi_logits, dtype=np.float64)
        a = np.array(self.a_logits, dtype=np.float64)
        c = np.array(self.c_logits, dtype=np.float64)
        d = pi.shape[0]
        if pi.ndim != 1 or a.shape != (d, d) or c.ndim != 2 or c.shape[0] != d:
            raise ValueError(f"inconsistent logit shapes: pi {pi.shape}, A {a.shape}, C {c.shape}")
        for name, array in (("pi", pi), ("A", a), ("C", c)):
            if not np.all(np.isfinite(array)):
                raise ValueError(f"{name} logits contain non-finite entries")
        object.__setattr__(self, "pi_logits", pi)
        object.__setattr__(self, "a_logits", a)
        object.__setattr__(self, "c_logits", c)

    @property
    def d(self) -> int:
        return int(self.pi_logits.shape[0])

    @property
    def m(self) -> int:
        return int(self.c_logits.shape[1])

    def arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.pi_logits, self.a_logits, self.c_logits

    @classmethod
    def zeros(cls, d: int, m: int) -> "LogitParams":
        return cls(np.zeros(d), np.zeros((d, d)), np.zeros((d, m)))

    @classmethod
    def from_probs(cls, params: HmmParams, floor: float = 1e-300) -> "LogitParams":
        """Log of the probabilities; softmax maps it back to params."""
        return cls(
            np.log(np.maximum(params.pi, floor)),
            np.log(np.maximum(params.A, floor)),
            np.log(np.maximum(params.C, floor)),
        )


def to_probs(lp: LogitParams) -> HmmParams:
    """pi = softmax(pi_logits); A and C row-wise softmax."""
    return HmmParams(
        pi=softmax(lp.pi_logits),
        A=softmax(lp.a_logits, axis=1),
        C=softmax(lp.c_logits, axis=1),
    )


def init_logits(d: int, m: int, rng: np.random.Generator, scale: float = INIT_SCALE) -> LogitParams:
    """i.i.d. Normal(0, scale^2) logits: near-uniform with symmetry broken."""
    return LogitParams(
        scale * rng.standard_normal(d),
        scale * rng.standard_normal((d, d)),
        scale * rng.standard_normal((d, m)),
    )


class LogitFile(BaseModel):
    version: Literal[1] = 1
    pi_logits: List[float]
    a_logits: List[List[float]]
    c_logits: List[List[float]]


def write_logits(path: PathLike, lp: LogitParams):
    return write_json(path, LogitFile(
        pi_logits=lp.pi_logits.tolist(),
        a_logits=lp.a_logits.tolist(),
        c_logits=lp.c_logits.tolist(),
    ))


def read_logits(path: PathLike) -> LogitParams:
    document = read_json(path, LogitFile)
    return LogitParams(document.pi_logits, document.a_logits, document.c_logits)
