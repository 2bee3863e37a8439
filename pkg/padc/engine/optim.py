"""First-order optimizers over named parameter dicts."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Tuple

import numpy as np

from ..errors import ConfigurationError, ShapeError


class OptimizerKind(str, Enum):
    ADAM = "adam"
    ADAGRAD = "adagrad"


@dataclass
class OptimizerState:
    algorithm: OptimizerKind
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first: Dict[str, np.ndarray] = field(default_factory=dict)  # Adam m
    second: Dict[str, np.ndarray] = field(default_factory=dict)  # Adam v, AdaGrad sum of squares

    def __post_init__(self) -> None:
        self.algorithm = OptimizerKind(self.algorithm)
        if self.learning_rate <= 0 or self.eps <= 0:
            raise ConfigurationError("learning_rate and eps must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigurationError("Adam betas must lie in [0, 1)")

    @classmethod
    def create(cls, algorithm, params: Dict[str, np.ndarray], **hyper) -> "OptimizerState":
        state = cls(algorithm=algorithm, **hyper)
        state.second = {name: np.zeros_like(p) for name, p in params.items()}
        if state.algorithm is OptimizerKind.ADAM:
            state.first = {name: np.zeros_like(p) for name, p in params.items()}
        return state

    def arrays(self) -> Dict[str, np.ndarray]:
        out = {f"second/{k}": v for k, v in self.second.items()}
        out.update({f"first/{k}": v for k, v in self.first.items()})
        return out


def _check(state: OptimizerState, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
    if set(params) != set(grads) or set(params) != set(state.second):
        raise ShapeError("parameters, gradients and optimizer state name different tensors")
    for name, p in params.items():
        if grads[name].shape != p.shape or state.second[name].shape != p.shape:
            raise ShapeError(f"{name}: gradient or accumulator shape differs from {p.shape}")


def opt_step(
    state: OptimizerState, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]
) -> Tuple[Dict[str, np.ndarray], OptimizerState]:
    """One update, applied in place to ``params`` and the state accumulators."""
    _check(state, params, grads)
    state.step += 1
    lr = state.learning_rate
    if state.algorithm is OptimizerKind.ADAM:
        correction1 = 1.0 - state.beta1**state.step
        correction2 = 1.0 - state.beta2**state.step
        for name, p in params.items():
            g = grads[name]
            m, v = state.first[name], state.second[name]
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * g * g
            p -= lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
    else:
        for name, p in params.items():
            g = grads[name]
            acc = state.second[name]
            acc += g * g
            p -= lr * g / (np.sqrt(acc) + state.eps)
    return params, state
