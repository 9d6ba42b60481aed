"""
Adam optimizer over named leaf tensors
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

from core.errors import ConfigurationError, GraphError
from core.tensor import Tensor


@dataclass
class AdamState:
    """First/second moments and step counter for one set of parameters"""

    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigurationError(f"Adam betas must be in [0, 1), got ({self.beta1}, {self.beta2})")
        if self.epsilon <= 0:
            raise ConfigurationError(f"Adam epsilon must be positive, got {self.epsilon}")

    def hyperparameters(self) -> Dict[str, Any]:
        return {
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
            "step_count": self.step_count,
        }

    def moments(self) -> Dict[str, np.ndarray]:
        tensors = {f"m/{name}": value for name, value in self.first_moment.items()}
        tensors.update({f"v/{name}": value for name, value in self.second_moment.items()})
        return tensors

    @classmethod
    def restore(cls, hyperparameters: Dict[str, Any], moments: Dict[str, np.ndarray]) -> "AdamState":
        state = cls(
            learning_rate=hyperparameters["learning_rate"],
            beta1=hyperparameters["beta1"],
            beta2=hyperparameters["beta2"],
            epsilon=hyperparameters["epsilon"],
            step_count=int(hyperparameters["step_count"]),
        )
        for key, value in moments.items():
            kind, _, name = key.partition("/")
            target = state.first_moment if kind == "m" else state.second_moment
            target[name] = np.array(value, dtype=np.float64)
        return state


def adam_step(
    params: Dict[str, Tensor],
    state: AdamState,
    learning_rate: Optional[float] = None,
    grads: Optional[Dict[str, np.ndarray]] = None,
):
    """Apply one bias-corrected Adam update in place of each tensor's data"""
    if learning_rate is None:
        learning_rate = state.learning_rate
    if learning_rate < 0:
        raise ConfigurationError(f"learning rate must be non-negative, got {learning_rate}")
    if grads is None:
        grads = {name: tensor.grad for name, tensor in params.items()}
    missing = [name for name, grad in grads.items() if grad is None]
    if missing:
        raise GraphError(f"no gradient for parameter '{missing[0]}' ({len(missing)} missing); run backward first")

    state.step_count += 1
    correction1 = 1.0 - state.beta1**state.step_count
    correction2 = 1.0 - state.beta2**state.step_count

    for name, tensor in params.items():
        grad = grads[name]
        if grad.shape != tensor.shape:
            raise GraphError(f"gradient for '{name}' has shape {grad.shape}, parameter has {tensor.shape}")
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(tensor.data, dtype=np.float64)
            v = np.zeros_like(tensor.data, dtype=np.float64)
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.first_moment[name] = m
        state.second_moment[name] = v
        update = learning_rate * (m / correction1) / (np.sqrt(v / correction2) + state.epsilon)
        tensor.data = (tensor.data - update).astype(tensor.data.dtype)
