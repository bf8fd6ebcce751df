"""Hyperparameter spaces and random search over them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class Distribution:
    def sample(self, rng: np.random.Generator):
        raise NotImplementedError

    def contains(self, value) -> bool:
        raise NotImplementedError


@dataclass(frozen=True)
class Const(Distribution):
    value: float

    def sample(self, rng):
        return self.value

    def contains(self, value) -> bool:
        return value == self.value


@dataclass(frozen=True)
class Uniform(Distribution):
    low: float
    high: float

    def __post_init__(self):
        if self.low > self.high:
            raise ValueError(f"Uniform[{self.low}, {self.high}]: low > high")

    def sample(self, rng):
        return float(rng.uniform(self.low, self.high))

    def contains(self, value) -> bool:
        return self.low <= value <= self.high


@dataclass(frozen=True)
class UniformInt(Distribution):
    low: int
    high: int

    def __post_init__(self):
        if self.low > self.high:
            raise ValueError(f"UniformInt[{self.low}, {self.high}]: low > high")

    def sample(self, rng):
        return int(rng.integers(self.low, self.high + 1))

    def contains(self, value) -> bool:
        return float(value).is_integer() and self.low <= value <= self.high


@dataclass(frozen=True)
class LogUniform(Distribution):
    low: float
    high: float

    def __post_init__(self):
        if self.low <= 0 or self.low > self.high:
            raise ValueError(f"LogUniform[{self.low}, {self.high}] needs 0 < low <= high")

    def sample(self, rng):
        return float(math.exp(rng.uniform(math.log(self.low), math.log(self.high))))

    def contains(self, value) -> bool:
        # sampled through exp(log(.)), so allow one ulp of slack at the ends
        return self.low * (1 - 1e-12) <= value <= self.high * (1 + 1e-12)


@dataclass(frozen=True)
class ZeroOr(Distribution):
    """Point mass at 0 with probability 1/2, otherwise ``inner``."""

    inner: Distribution

    def sample(self, rng):
        if rng.random() < 0.5:
            return 0
        return self.inner.sample(rng)

    def contains(self, value) -> bool:
        return value == 0 or self.inner.contains(value)


Space = dict[str, Distribution]

# Dataset-group (A): small and mid-size datasets.
FT_TRANSFORMER_SPACE: Space = {
    "model.n_layers": UniformInt(1, 4),
    "model.d_token": UniformInt(64, 512),
    "model.residual_dropout": ZeroOr(Uniform(0.0, 0.2)),
    "model.attention_dropout": Uniform(0.0, 0.5),
    "model.ffn_dropout": Uniform(0.0, 0.5),
    "model.ffn_factor": Uniform(2 / 3, 8 / 3),
    "train.lr": LogUniform(1e-5, 1e-3),
    "train.weight_decay": LogUniform(1e-6, 1e-3),
}

# Dataset-group (B): large datasets.
FT_TRANSFORMER_SPACE_LARGE: Space = {
    **FT_TRANSFORMER_SPACE,
    "model.n_layers": UniformInt(1, 6),
    "model.residual_dropout": Const(0.0),
    "model.ffn_factor": Const(4 / 3),
    "train.lr": LogUniform(3e-5, 3e-4),
}

RESNET_SPACE: Space = {
    "model.n_blocks": UniformInt(1, 8),
    "model.d_main": UniformInt(64, 512),
    "model.hidden_factor": Uniform(1.0, 4.0),
    "model.hidden_dropout": Uniform(0.0, 0.5),
    "model.residual_dropout": ZeroOr(Uniform(0.0, 0.5)),
    "train.lr": LogUniform(1e-5, 1e-2),
    "train.weight_decay": ZeroOr(LogUniform(1e-6, 1e-3)),
    "model.d_embedding": UniformInt(64, 512),
}

RESNET_SPACE_LARGE: Space = {
    **RESNET_SPACE,
    "model.n_blocks": UniformInt(1, 16),
    "model.d_main": UniformInt(64, 1024),
}

MLP_SPACE: Space = {
    "model.n_layers": UniformInt(1, 8),
    "model.d_first": UniformInt(1, 512),
    "model.d_middle": UniformInt(1, 512),
    "model.d_last": UniformInt(1, 512),
    "model.dropout": ZeroOr(Uniform(0.0, 0.5)),
    "train.lr": LogUniform(1e-5, 1e-2),
    "train.weight_decay": ZeroOr(LogUniform(1e-6, 1e-3)),
    "model.d_embedding": UniformInt(64, 512),
}

MLP_SPACE_LARGE: Space = {
    **MLP_SPACE,
    "model.n_layers": UniformInt(1, 16),
    "model.d_first": UniformInt(1, 1024),
    "model.d_middle": UniformInt(1, 1024),
    "model.d_last": UniformInt(1, 1024),
}

SPACES = {
    ("ft_transformer", "A"): FT_TRANSFORMER_SPACE,
    ("ft_transformer", "B"): FT_TRANSFORMER_SPACE_LARGE,
    ("resnet", "A"): RESNET_SPACE,
    ("resnet", "B"): RESNET_SPACE_LARGE,
    ("mlp", "A"): MLP_SPACE,
    ("mlp", "B"): MLP_SPACE_LARGE,
}


def sample_config(space: Space, rng: np.random.Generator) -> dict:
    """One draw per key, in the space's key order."""
    return {key: dist.sample(rng) for key, dist in space.items()}


def split_sample(family: str, sample: dict, n_heads: int = 8) -> tuple[dict, dict]:
    """Turn a flat sample into (model kwargs, train kwargs).

    MLP layer sizes become ``[first, middle * (n - 2), last]``; the FT-Transformer
    token width is rounded up to a multiple of ``n_heads``.
    """
    model = {k[6:]: v for k, v in sample.items() if k.startswith("model.")}
    train = {k[6:]: v for k, v in sample.items() if k.startswith("train.")}
    if family == "mlp" and "n_layers" in model:
        n = model.pop("n_layers")
        first, middle, last = model.pop("d_first"), model.pop("d_middle"), model.pop("d_last")
        model["d_layers"] = [first] if n == 1 else [first] + [middle] * (n - 2) + [last]
    if family == "ft_transformer" and "d_token" in model:
        model["d_token"] = int(math.ceil(model["d_token"] / n_heads) * n_heads)
    return model, train


@dataclass
class Trial:
    index: int
    params: dict
    score: float


@dataclass
class SearchResult:
    best: Trial
    trials: list[Trial] = field(default_factory=list)


def random_search(space: Space, budget: int, objective: Callable[[dict], float],
                  rng: np.random.Generator, higher_is_better: bool = False,
                  on_trial: Callable[[Trial], None] | None = None) -> SearchResult:
    """Evaluate ``budget`` independent samples; keep the best validation score.

    Ties keep the earlier trial.
    """
    if budget < 1:
        raise ValueError("search budget must be >= 1")
    trials: list[Trial] = []
    best: Trial | None = None
    for i in range(budget):
        params = sample_config(space, rng)
        trial = Trial(i, params, float(objective(params)))
        trials.append(trial)
        if on_trial is not None:
            on_trial(trial)
        if best is None or (trial.score > best.score if higher_is_better else trial.score < best.score):
            best = trial
    return SearchResult(best, trials)
