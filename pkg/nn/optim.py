"""Adam and a plateau learning-rate schedule."""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from nn.tensor import Tensor
from utils.errors import NonFiniteError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """First and second moments of one parameter plus the shared step count."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0


def adam_step(
    param: np.ndarray,
    grad: np.ndarray,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> Tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update.

    Returns:
        New parameter values and the advanced state

    Raises:
        NonFiniteError: If ``grad`` holds NaN or Inf
    """
    if not np.all(np.isfinite(grad)):
        raise NonFiniteError("Adam received non-finite gradients")
    if state.m.shape != param.shape or grad.shape != param.shape:
        raise ValueError(f"Adam state shape {state.m.shape} does not match parameter {param.shape}")
    step = state.step + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    return param - lr * m_hat / (np.sqrt(v_hat) + eps), AdamState(m, v, step)


class Adam:
    """Adam over a fixed parameter list; missing gradients count as zero."""

    def __init__(self, params: List[Tensor], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.states = [AdamState(np.zeros_like(p.data), np.zeros_like(p.data)) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        for i, p in enumerate(self.params):
            grad = np.zeros_like(p.data) if p.grad is None else p.grad
            try:
                p.data, self.states[i] = adam_step(p.data, grad, self.states[i], self.lr, *self.betas, self.eps)
            except NonFiniteError:
                raise NonFiniteError(f"Adam received non-finite gradients for {p.name or i}") from None


@dataclass
class PlateauScheduler:
    """Multiply the learning rate by ``factor`` when the tracked metric stalls.

    The metric is maximized (validation AUC). The rate drops once more than
    ``patience`` consecutive epochs pass without improvement.
    """

    optimizer: Adam
    factor: float = 0.5
    patience: int = 1
    min_lr: float = 1e-6
    best: Optional[float] = None
    bad_epochs: int = field(default=0)

    def step(self, metric: float) -> bool:
        """Record one epoch; returns True when the rate was reduced."""
        if self.best is None or metric > self.best:
            self.best = metric
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        if self.bad_epochs <= self.patience:
            return False
        new_lr = max(self.optimizer.lr * self.factor, self.min_lr)
        reduced = new_lr < self.optimizer.lr
        if reduced:
            logger.info(f"Learning rate {self.optimizer.lr:.3g} -> {new_lr:.3g}")
        self.optimizer.lr = new_lr
        self.bad_epochs = 0
        return reduced
