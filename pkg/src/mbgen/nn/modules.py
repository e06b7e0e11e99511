"""Parameter containers and the shared neural building blocks."""

from __future__ import annotations

from collections.abc import Iterator

import numpy as np

from . import tensor as T
from .tensor import DimensionError, Parameter, Tensor


class Module:
    """Holds Parameters and sub-Modules as attributes, in definition order."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Parameter):
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{name}.{i}", item

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        if missing:
            raise KeyError(f"missing tensor {missing[0]!r}")
        for name, p in own.items():
            value = np.asarray(state[name], dtype=T.DTYPE)
            if value.shape != p.shape:
                raise DimensionError(f"tensor {name!r}: stored shape {value.shape} != model shape {p.shape}")
            p.data[...] = value

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())


def glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / (fan_in + fan_out)), size=(fan_out, fan_in))


class Linear(Module):
    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int, bias: bool = True):
        self.weight = Parameter(glorot(rng, d_out, d_in))
        self.bias = Parameter(np.zeros(d_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return T.linear(x, self.weight, self.bias)


class FeedForward(Module):
    """Residual two-layer GELU block: ``x + W2 gelu(W1 x + b1) + b2``."""

    def __init__(self, rng: np.random.Generator, width: int, hidden: int):
        self.inner = Linear(rng, width, hidden)
        self.outer = Linear(rng, hidden, width)

    def __call__(self, x: Tensor) -> Tensor:
        return x + self.outer(T.gelu(self.inner(x)))


def film(o: Tensor, y: Tensor, W1: Tensor, W2: Tensor) -> Tensor:
    """Feature-wise modulation ``y W2 + o * (y W1) + o``.

    ``y`` has shape (B, d_y); its projections broadcast over every middle
    axis of ``o`` (B, ..., d_o).
    """
    if y.ndim != 2 or o.shape[0] != y.shape[0]:
        raise DimensionError(f"film: condition shape {y.shape} does not match feature shape {o.shape}")
    if W1.shape != (o.shape[-1], y.shape[-1]) or W2.shape != W1.shape:
        raise DimensionError(f"film: weights {W1.shape}/{W2.shape} cannot map {y.shape} onto {o.shape}")
    lift = (y.shape[0],) + (1,) * (o.ndim - 2) + (o.shape[-1],)
    scale = T.linear(y, W1).reshape(lift)
    shift = T.linear(y, W2).reshape(lift)
    return shift + o * scale + o


class FiLM(Module):
    def __init__(self, rng: np.random.Generator, d_cond: int, d_feat: int):
        # small init keeps the modulation near identity at the start of training
        self.W1 = Parameter(0.1 * glorot(rng, d_feat, d_cond))
        self.W2 = Parameter(0.1 * glorot(rng, d_feat, d_cond))

    def __call__(self, o: Tensor, y: Tensor) -> Tensor:
        return film(o, y, self.W1, self.W2)
