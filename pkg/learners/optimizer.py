"""
AdamW

Adam moments with bias correction and decoupled weight decay, applied to
the three logit blocks.
"""

import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from hmm.errors import GradientOverflowError
from learners.logits import LogitParams


@dataclass(frozen=True)
class OptimizerState:
    first_moment: LogitParams
    second_moment: LogitParams
    step_count: int = 0
    lr: float = 0.01
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01

    def __post_init__(self):
        if self.step_count < 0:
            raise ValueError(f"step_count must be non-negative, got {self.step_count}")
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        shapes = [a.shape for a in self.first_moment.arrays()]
        if shapes != [a.shape for a in self.second_moment.arrays()]:
            raise ValueError("first and second moments must have identical shapes")


def init_optimizer(
    lp: LogitParams,
    lr: float,
    betas: Tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 0.01,
) -> OptimizerState:
    zeros = LogitParams.zeros(lp.d, lp.m)
    return OptimizerState(
        first_moment=zeros,
        second_moment=zeros,
        lr=lr,
        betas=betas,
        eps=eps,
        weight_decay=weight_decay,
    )


def cosine_lr(base_lr: float, iteration: int, total: int) -> float:
    """Cosine decay from base_lr at iteration 0 to 0 at iteration total."""
    if total <= 0:
        return base_lr
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * min(iteration, total) / total))


def adamw_step(
    lp: LogitParams,
    grad: LogitParams,
    opt: OptimizerState,
    lr: Optional[float] = None,
) -> Tuple[LogitParams, OptimizerState]:
    """
    m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
    theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)
    """
    for name, array in zip(("pi", "A", "C"), grad.arrays()):
        if not np.all(np.isfinite(array)):
            raise GradientOverflowError(f"non-finite entries in the {name} logit gradient at step {opt.step_count + 1}")

    lr = opt.lr if lr is None else lr
    beta1, beta2 = opt.betas
    step = opt.step_count + 1
    correction1 = 1.0 - beta1 ** step
    correction2 = 1.0 - beta2 ** step

    new_theta, new_m, new_v = [], [], []
    for theta, g, m, v in zip(lp.arrays(), grad.arrays(), opt.first_moment.arrays(), opt.second_moment.arrays()):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        theta = theta - lr * (m_hat / (np.sqrt(v_hat) + opt.eps) + opt.weight_decay * theta)
        new_theta.append(theta)
        new_m.append(m)
        new_v.append(v)

    updated = replace(
        opt,
        first_moment=LogitParams(*new_m),
        second_moment=LogitParams(*new_v),
        step_count=step,
    )
    return LogitParams(*new_theta), updated
