"""Module containers, parameters and the basic layers shared by all models."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Parameter(Tensor):
    """A trainable tensor.

    ``weight_decay_eligible`` is fixed by the layer that owns the parameter:
    biases, normalisation affines and embedding/tokenizer tables are created
    with ``False``.
    """

    __slots__ = ("name", "weight_decay_eligible")

    def __init__(self, data, weight_decay_eligible: bool = True):
        super().__init__(np.array(data, copy=True), requires_grad=True)
        self.name = ""
        self.weight_decay_eligible = weight_decay_eligible

    def __repr__(self) -> str:
        return f"Parameter({self.name or '?'}, shape={self.shape})"


def uniform_(rng: np.random.Generator, shape, bound: float, dtype=T.DEFAULT_DTYPE) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Module:
    training: bool = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def _children(self) -> Iterator[tuple[str, object]]:
        for key, value in vars(self).items():
            if isinstance(value, (Parameter, Module)):
                yield key, value
            elif isinstance(value, (list, tuple)) and value and all(
                isinstance(v, Module) for v in value
            ):
                for i, v in enumerate(value):
                    yield f"{key}.{i}", v

    def named_modules(self, prefix: str = "") -> Iterator[tuple[str, Module]]:
        yield prefix, self
        for key, value in self._children():
            if isinstance(value, Module):
                yield from value.named_modules(f"{prefix}.{key}" if prefix else key)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, value in self._children():
            path = f"{prefix}.{key}" if prefix else key
            if isinstance(value, Parameter):
                value.name = path
                yield path, value
            else:
                yield from value.named_parameters(path)

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self) -> Iterator[tuple[str, np.ndarray]]:
        for path, module in self.named_modules():
            for key in getattr(module, "_buffer_names", ()):
                yield (f"{path}.{key}" if path else key), getattr(module, key)

    def train(self, mode: bool = True) -> Module:
        for _, module in self.named_modules():
            module.training = mode
        return self

    def eval(self) -> Module:
        return self.train(False)

    def set_rng(self, rng: np.random.Generator) -> None:
        for _, module in self.named_modules():
            module.rng = rng

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update({name: b.copy() for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        expected = set(params) | set(buffers)
        missing = expected - set(state)
        unexpected = set(state) - expected
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in params.items():
            if state[name].shape != p.shape:
                raise ValueError(f"{name}: shape {state[name].shape} != {p.shape}")
            p.data[...] = state[name]
        for name, b in buffers.items():
            b[...] = state[name]


class Linear(Module):
    """``y = x W + b`` with W stored as (in, out).

    Weight and bias are drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)), i.e.
    Kaiming-uniform with the leaky-ReLU slope sqrt(5).
    """

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True,
                 dtype=T.DEFAULT_DTYPE):
        bound = 1.0 / math.sqrt(d_in)
        self.weight = Parameter(uniform_(rng, (d_in, d_out), bound, dtype))
        self.bias = (
            Parameter(uniform_(rng, (d_out,), bound, dtype), weight_decay_eligible=False)
            if bias else None
        )

    def forward(self, x: Tensor) -> Tensor:
        return T.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = T.LAYER_NORM_EPS, dtype=T.DEFAULT_DTYPE):
        self.weight = Parameter(np.ones(d, dtype=dtype), weight_decay_eligible=False)
        self.bias = Parameter(np.zeros(d, dtype=dtype), weight_decay_eligible=False)
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.weight, self.bias, self.eps)


class BatchNorm1d(Module):
    _buffer_names = ("running_mean", "running_var")

    def __init__(self, d: int, eps: float = T.BATCH_NORM_EPS,
                 momentum: float = T.BATCH_NORM_MOMENTUM, dtype=T.DEFAULT_DTYPE):
        self.weight = Parameter(np.ones(d, dtype=dtype), weight_decay_eligible=False)
        self.bias = Parameter(np.zeros(d, dtype=dtype), weight_decay_eligible=False)
        self.running_mean = np.zeros(d, dtype=dtype)
        self.running_var = np.ones(d, dtype=dtype)
        self.eps = eps
        self.momentum = momentum

    def forward(self, x: Tensor) -> Tensor:
        return T.batch_norm(x, self.weight, self.bias, self.running_mean, self.running_var,
                            self.training, self.momentum, self.eps)


class Dropout(Module):
    rng: np.random.Generator | None = None

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x: Tensor) -> Tensor:
        return T.dropout(x, self.rate, self.training, self.rng)


class CategoricalEmbeddings(Module):
    """One lookup table per categorical feature, stored as a single offset table.

    ``forward`` returns the (batch, k_cat, d) stack of looked-up rows.
    """

    def __init__(self, cardinalities: list[int], d: int, rng: np.random.Generator,
                 dtype=T.DEFAULT_DTYPE):
        if any(c < 1 for c in cardinalities):
            raise ValueError("every categorical cardinality must be >= 1")
        self.cardinalities = list(cardinalities)
        self.offsets = np.concatenate([[0], np.cumsum(cardinalities)[:-1]]).astype(np.int64)
        bound = 1.0 / math.sqrt(d)
        self.weight = Parameter(uniform_(rng, (sum(cardinalities), d), bound, dtype),
                                weight_decay_eligible=False)

    def forward(self, x_cat: np.ndarray) -> Tensor:
        x_cat = np.asarray(x_cat, dtype=np.int64)
        if x_cat.ndim != 2 or x_cat.shape[1] != len(self.cardinalities):
            raise ValueError(
                f"expected categorical input of shape (n, {len(self.cardinalities)}), got {x_cat.shape}"
            )
        card = np.asarray(self.cardinalities)
        bad = (x_cat < 0) | (x_cat >= card)
        if bad.any():
            row, col = map(int, np.argwhere(bad)[0])
            raise IndexError(
                f"categorical index {x_cat[row, col]} out of range [0, {card[col]}) "
                f"for feature {col} (row {row})"
            )
        return T.embedding(self.weight, x_cat + self.offsets)
