"""
Parameter and Module containers for the vocoder networks
"""

import copy
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from core.errors import CheckpointError, ShapeError
from core.functional import weight_norm
from core.tensor import Tensor


class Parameter:
    """Trainable weight, optionally reparameterized as g * v / ||v|| per leading-axis slice"""

    def __init__(self, value: np.ndarray, weight_norm: bool = False):
        value = np.array(value, dtype=np.float64)
        self.v = Tensor(value, requires_grad=True)
        self.g: Optional[Tensor] = None
        if weight_norm:
            axes = tuple(range(1, value.ndim))
            self.g = Tensor(np.sqrt((value * value).sum(axis=axes)), requires_grad=True)

    @property
    def weight_normed(self) -> bool:
        return self.g is not None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.v.shape

    def tensor(self) -> Tensor:
        """Effective weight as a graph node (weight-norm applied when enabled)"""
        if self.g is None:
            return self.v
        return weight_norm(self.v, self.g)

    @property
    def value(self) -> np.ndarray:
        if self.g is None:
            return self.v.data
        axes = tuple(range(1, self.v.ndim))
        norm = np.sqrt((self.v.data * self.v.data).sum(axis=axes, keepdims=True))
        return self.g.data.reshape((-1,) + (1,) * (self.v.ndim - 1)) * self.v.data / norm

    def leaves(self) -> Dict[str, Tensor]:
        if self.g is None:
            return {"": self.v}
        return {".v": self.v, ".g": self.g}


class Module:
    """Container walking its Parameter and sub-Module attributes in definition order"""

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for key, value in vars(self).items():
            yield from _walk(f"{prefix}{key}", value)

    def parameters(self) -> List[Parameter]:
        return [param for _, param in self.named_parameters()]

    def named_tensors(self) -> Dict[str, Tensor]:
        """Every trainable leaf tensor keyed by its qualified name"""
        tensors = {}
        for name, param in self.named_parameters():
            for suffix, tensor in param.leaves().items():
                tensor.name = f"{name}{suffix}"
                tensors[tensor.name] = tensor
        return tensors

    def num_parameters(self) -> int:
        return sum(t.size for t in self.named_tensors().values())

    def zero_grad(self):
        for tensor in self.named_tensors().values():
            tensor.grad = None

    def requires_grad_(self, flag: bool = True) -> "Module":
        for tensor in self.named_tensors().values():
            tensor.requires_grad = flag
        return self

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: tensor.data.copy() for name, tensor in self.named_tensors().items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        """Copy tensors in by name, widening or narrowing to each tensor's own dtype"""
        tensors = self.named_tensors()
        missing = sorted(set(tensors) - set(state))
        unexpected = sorted(set(state) - set(tensors))
        if missing or unexpected:
            raise CheckpointError(f"state mismatch: missing {missing[:3]}, unexpected {unexpected[:3]}")
        for name, tensor in tensors.items():
            array = np.asarray(state[name])
            if array.shape != tensor.shape:
                raise ShapeError("load_state_dict", name, tensor.shape, array.shape)
            tensor.data = array.astype(tensor.data.dtype, copy=True)

    def fold_for_inference(self, dtype=np.float32) -> "Module":
        """Copy with weight norm collapsed into plain weights of the given dtype and no gradients"""
        folded = copy.deepcopy(self)
        for param in folded.parameters():
            param.v = Tensor(param.value.astype(dtype), requires_grad=False)
            param.g = None
        return folded


def _walk(name: str, value) -> Iterator[Tuple[str, Parameter]]:
    if isinstance(value, Parameter):
        yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(prefix=f"{name}.")
    elif isinstance(value, (list, tuple)):
        for index, item in enumerate(value):
            yield from _walk(f"{name}.{index}", item)
