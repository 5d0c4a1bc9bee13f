"""The Adadelta update rule.

Per parameter the optimizer keeps running averages of squared gradients
and squared updates:

    E[g^2]  <- rho * E[g^2]  + (1 - rho) * g^2
    step    <- -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
    E[dx^2] <- rho * E[dx^2] + (1 - rho) * step^2
    param   <- param + step

No learning rate is involved; the ratio of the two accumulators sets the
effective step size.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .autograd import Tensor
from .errors import DomainError, NumericFailure, ShapeMismatchError


@dataclass
class AdadeltaState:
    """Per-parameter accumulators; shapes always match the parameter."""

    avg_sq_grad: np.ndarray
    avg_sq_step: np.ndarray
    rho: float = 0.95
    epsilon: float = 1e-6

    @classmethod
    def for_param(cls, param: np.ndarray, rho: float = 0.95, epsilon: float = 1e-6) -> "AdadeltaState":
        if not 0.0 < rho < 1.0:
            raise DomainError(f"adadelta decay must lie in (0, 1), got {rho}")
        if epsilon <= 0.0:
            raise DomainError(f"adadelta stabilizer must be positive, got {epsilon}")
        return cls(np.zeros_like(param), np.zeros_like(param), rho, epsilon)


def adadelta_step(param: np.ndarray, grad, state: AdadeltaState, name: str | None = None):
    """Apply one update in place; returns (param, state) for convenience.

    A non-finite gradient aborts before touching the parameter or the
    accumulators.
    """
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != param.shape:
        raise ShapeMismatchError(f"gradient shape {grad.shape} does not match parameter shape {param.shape}")
    if state.avg_sq_grad.shape != param.shape:
        raise ShapeMismatchError(
            f"optimizer state shape {state.avg_sq_grad.shape} does not match parameter shape {param.shape}"
        )
    if not np.all(np.isfinite(grad)):
        label = f" for {name}" if name else ""
        raise NumericFailure(f"non-finite gradient{label}; update aborted")

    rho, eps = state.rho, state.epsilon
    state.avg_sq_grad *= rho
    state.avg_sq_grad += (1.0 - rho) * grad * grad
    step = -np.sqrt(state.avg_sq_step + eps) / np.sqrt(state.avg_sq_grad + eps) * grad
    state.avg_sq_step *= rho
    state.avg_sq_step += (1.0 - rho) * step * step
    param += step
    return param, state


class Adadelta:
    """Adadelta over a named set of parameter tensors.

    ``step(batch_size)`` treats each tensor's accumulated ``grad`` as a sum
    over the batch and divides by ``batch_size``, so the update sees the
    mean per-example gradient.  Parameters whose gradient is unset this
    batch receive the zero-gradient update (accumulators decay, value
    unchanged).
    """

    def __init__(self, params: Mapping[str, Tensor], rho: float = 0.95, epsilon: float = 1e-6):
        self._params = dict(params)
        self._states = {
            name: AdadeltaState.for_param(p.data, rho, epsilon) for name, p in self._params.items()
        }

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def step(self, batch_size: int = 1) -> None:
        if batch_size < 1:
            raise DomainError(f"batch size must be at least 1, got {batch_size}")
        inv = 1.0 / batch_size
        for name, p in self._params.items():
            state = self._states[name]
            if p.grad is None:
                # Zero gradient: value is a fixed point, accumulators decay.
                state.avg_sq_grad *= state.rho
                state.avg_sq_step *= state.rho
                continue
            grad = p.grad
            grad *= inv
            adadelta_step(p.data, grad, state, name=name)
        self.zero_grad()
