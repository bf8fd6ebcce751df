"""ResNet and MLP baselines over concatenated numerical + embedded categorical inputs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import tensor as T
from ..nn import BatchNorm1d, CategoricalEmbeddings, Dropout, Linear, Module
from ..tensor import Tensor
from .ft_transformer import ConfigError


def _check_rate(name: str, rate: float) -> None:
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"{name} must lie in [0, 1), got {rate}")


class _FlatInput(Module):
    """Numerical features followed by one embedding per categorical feature."""

    def __init__(self, n_num: int, cardinalities: list[int], d_embedding: int,
                 rng: np.random.Generator, dtype):
        self.n_num = n_num
        self.dtype = np.dtype(dtype)
        self.embeddings = (
            CategoricalEmbeddings(cardinalities, d_embedding, rng, dtype) if cardinalities else None
        )
        self.d_out = n_num + len(cardinalities) * d_embedding

    def forward(self, x_num, x_cat=None) -> Tensor:
        parts = []
        if self.n_num:
            x_num = T.as_tensor(x_num, self.dtype)
            if x_num.ndim != 2 or x_num.shape[1] != self.n_num:
                raise ValueError(f"expected numerical input (n, {self.n_num}), got {x_num.shape}")
            parts.append(x_num)
        if self.embeddings is not None:
            if x_cat is None:
                raise ValueError("model expects categorical features")
            e = self.embeddings(x_cat)
            parts.append(e.reshape(e.shape[0], -1))
        elif x_cat is not None and np.asarray(x_cat).size:
            raise ValueError("model has no categorical features")
        return parts[0] if len(parts) == 1 else T.concat(parts, axis=1)


@dataclass
class MLPConfig:
    n_num: int
    cardinalities: list[int] = field(default_factory=list)
    d_out: int = 1
    d_layers: list[int] = field(default_factory=lambda: [256, 256])
    dropout: float = 0.0
    d_embedding: int = 64

    def __post_init__(self):
        self.cardinalities = [int(c) for c in self.cardinalities]
        self.d_layers = [int(d) for d in self.d_layers]
        if any(d < 1 for d in self.d_layers) or self.d_out < 1 or self.d_embedding < 1:
            raise ConfigError("layer sizes must be positive")
        _check_rate("dropout", self.dropout)

    @property
    def d_in(self) -> int:
        return self.n_num + len(self.cardinalities) * self.d_embedding


class MLP(Module):
    family = "mlp"

    def __init__(self, config: MLPConfig, rng: np.random.Generator, dtype=T.DEFAULT_DTYPE):
        c = config
        self.config = c
        self.dtype = np.dtype(dtype)
        self.input = _FlatInput(c.n_num, c.cardinalities, c.d_embedding, rng, dtype)
        dims = [c.d_in, *c.d_layers]
        self.blocks = [Linear(a, b, rng, dtype=dtype) for a, b in zip(dims[:-1], dims[1:])]
        self.dropout = Dropout(c.dropout)
        self.head = Linear(dims[-1], c.d_out, rng, dtype=dtype)

    def forward(self, x_num, x_cat=None) -> Tensor:
        x = self.input(x_num, x_cat)
        for linear in self.blocks:
            x = self.dropout(T.relu(linear(x)))
        return self.head(x)


@dataclass
class ResNetConfig:
    n_num: int
    cardinalities: list[int] = field(default_factory=list)
    d_out: int = 1
    n_blocks: int = 2
    d_main: int = 128
    hidden_factor: float = 2.0
    hidden_dropout: float = 0.0
    residual_dropout: float = 0.0
    d_embedding: int = 64

    def __post_init__(self):
        self.cardinalities = [int(c) for c in self.cardinalities]
        if self.n_blocks < 0 or self.d_main < 1 or self.d_out < 1 or self.d_embedding < 1:
            raise ConfigError("sizes must be positive (n_blocks may be 0)")
        if self.hidden_factor <= 0:
            raise ConfigError("hidden_factor must be positive")
        _check_rate("hidden_dropout", self.hidden_dropout)
        _check_rate("residual_dropout", self.residual_dropout)

    @property
    def d_in(self) -> int:
        return self.n_num + len(self.cardinalities) * self.d_embedding

    @property
    def d_hidden(self) -> int:
        return int(round(self.hidden_factor * self.d_main))


class ResNetBlock(Module):
    def __init__(self, d: int, d_hidden: int, hidden_dropout: float, residual_dropout: float,
                 rng: np.random.Generator, dtype):
        self.norm = BatchNorm1d(d, dtype=dtype)
        self.linear_first = Linear(d, d_hidden, rng, dtype=dtype)
        self.hidden_dropout = Dropout(hidden_dropout)
        self.linear_second = Linear(d_hidden, d, rng, dtype=dtype)
        self.residual_dropout = Dropout(residual_dropout)

    def forward(self, x: Tensor) -> Tensor:
        z = self.hidden_dropout(T.relu(self.linear_first(self.norm(x))))
        return x + self.residual_dropout(self.linear_second(z))


class ResNet(Module):
    family = "resnet"

    def __init__(self, config: ResNetConfig, rng: np.random.Generator, dtype=T.DEFAULT_DTYPE):
        c = config
        self.config = c
        self.dtype = np.dtype(dtype)
        self.input = _FlatInput(c.n_num, c.cardinalities, c.d_embedding, rng, dtype)
        self.first = Linear(c.d_in, c.d_main, rng, dtype=dtype)
        self.blocks = [
            ResNetBlock(c.d_main, c.d_hidden, c.hidden_dropout, c.residual_dropout, rng, dtype)
            for _ in range(c.n_blocks)
        ]
        self.head_norm = BatchNorm1d(c.d_main, dtype=dtype)
        self.head = Linear(c.d_main, c.d_out, rng, dtype=dtype)

    def forward(self, x_num, x_cat=None) -> Tensor:
        x = self.first(self.input(x_num, x_cat))
        for block in self.blocks:
            x = block(x)
        return self.head(T.relu(self.head_norm(x)))


def count_mlp_parameters(c: MLPConfig) -> int:
    dims = [c.d_in, *c.d_layers, c.d_out]
    total = sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))
    return total + sum(c.cardinalities) * c.d_embedding


def count_resnet_parameters(c: ResNetConfig) -> int:
    d, h = c.d_main, c.d_hidden
    block = 2 * d + (d * h + h) + (h * d + d)
    return (sum(c.cardinalities) * c.d_embedding + c.d_in * d + d + c.n_blocks * block
            + 2 * d + d * c.d_out + c.d_out)
