"""Parameter containers and initialisers."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor, as_tensor, get_dtype, parameter, relu


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    shape = shape or (fan_in, fan_out)
    return parameter(rng.uniform(-limit, limit, size=shape).astype(get_dtype()))


def zeros(shape) -> Tensor:
    return parameter(np.zeros(shape, dtype=get_dtype()))


class Module:
    """Base class that discovers parameters from instance attributes.

    Attributes holding a grad-tracked :class:`Tensor`, another ``Module`` or a
    list of modules are walked in attribute-definition order, so parameter
    names are stable across runs.
    """

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict) -> None:
        own = dict(self.named_parameters())
        if set(own) != set(state):
            missing = sorted(set(own) - set(state))
            extra = sorted(set(state) - set(own))
            raise KeyError(f"parameter mismatch: missing={missing[:5]} unexpected={extra[:5]}")
        for name, p in own.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ValueError(f"{name}: shape {value.shape} != {p.shape}")
            p.data = value.astype(p.dtype, copy=True)

    def astype(self, dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self


class Linear(Module):
    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int, bias: bool = True):
        self.weight = glorot(rng, d_in, d_out)
        self.bias = zeros((d_out,)) if bias else None

    def __call__(self, x):
        x = as_tensor(x)
        if x.ndim == 1:
            return self(x.reshape(1, -1)).reshape(-1)
        out = x @ self.weight
        return out + self.bias if self.bias is not None else out


class MLP(Module):
    """Affine layers with ReLU in between; the last layer stays linear."""

    def __init__(self, rng: np.random.Generator, widths: list[int]):
        self.layers = [Linear(rng, a, b) for a, b in zip(widths[:-1], widths[1:])]

    def __call__(self, x):
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = relu(x)
        return x
