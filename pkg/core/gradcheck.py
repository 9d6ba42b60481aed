"""
Central finite-difference gradient checking
"""

import logging
from typing import Callable, Optional, Sequence

import numpy as np

from core.tensor import ComputeGraph, Tensor, no_grad


def finite_diff_check(
    fn: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    epsilon: float = 1e-6,
    floor: float = 1e-5,
    max_elements: Optional[int] = None,
    seed: int = 0,
) -> float:
    """Largest relative error between analytic and central-difference gradients

    `fn` rebuilds a scalar from the current data of `inputs` on every call. The
    error of one element is |analytic - numeric| / max(|analytic|, |numeric|, floor).
    With `max_elements`, that many elements per input are sampled instead of all.
    """
    for tensor in inputs:
        tensor.grad = None
        tensor.requires_grad = True
        tensor.data = np.ascontiguousarray(tensor.data, dtype=np.float64)

    with ComputeGraph() as graph:
        loss = fn()
        graph.backward(loss)
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in inputs]

    rng = np.random.default_rng(seed)
    worst = 0.0
    with no_grad():
        for tensor, grad in zip(inputs, analytic):
            flat = tensor.data.reshape(-1)
            indices = np.arange(flat.size)
            if max_elements is not None and flat.size > max_elements:
                indices = rng.choice(flat.size, size=max_elements, replace=False)
            grad_flat = grad.reshape(-1)
            for i in indices:
                original = flat[i]
                flat[i] = original + epsilon
                upper = fn().item()
                flat[i] = original - epsilon
                lower = fn().item()
                flat[i] = original
                numeric = (upper - lower) / (2.0 * epsilon)
                error = abs(grad_flat[i] - numeric) / max(abs(grad_flat[i]), abs(numeric), floor)
                if error > worst:
                    worst = error
                    logging.debug(f"gradcheck {tensor.name or 'input'}[{i}]: analytic={grad_flat[i]:.6e} "
                                  f"numeric={numeric:.6e}")

    for tensor in inputs:
        tensor.grad = None
    return worst
