"""Model families and helpers shared by training, explanation and the CLI."""

from __future__ import annotations

from dataclasses import asdict, fields

import numpy as np

from ..nn import Module, Parameter
from .baselines import (
    MLP,
    MLPConfig,
    ResNet,
    ResNetConfig,
    count_mlp_parameters,
    count_resnet_parameters,
)
from .ft_transformer import (
    ConfigError,
    FeatureTokenizer,
    FTTransformer,
    FTTransformerConfig,
    MultiheadAttention,
    TransformerLayer,
)
from .ft_transformer import count_parameters as count_ft_parameters

FAMILIES = {
    "mlp": (MLP, MLPConfig, count_mlp_parameters),
    "resnet": (ResNet, ResNetConfig, count_resnet_parameters),
    "ft_transformer": (FTTransformer, FTTransformerConfig, count_ft_parameters),
}


def make_config(family: str, **values):
    """Build a config dataclass, rejecting keys it does not define."""
    if family not in FAMILIES:
        raise ConfigError(f"unknown model family {family!r}; expected one of {sorted(FAMILIES)}")
    cls = FAMILIES[family][1]
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown {family} config key(s): {', '.join(unknown)}")
    return cls(**values)


def family_of(config) -> str:
    for name, (_, cls, _) in FAMILIES.items():
        if isinstance(config, cls):
            return name
    raise ConfigError(f"not a model config: {type(config).__name__}")


def build_model(config, seed: int = 0, dtype=np.float64) -> Module:
    """Instantiate the model for ``config`` with initialisation drawn from ``seed``."""
    model_cls = FAMILIES[family_of(config)][0]
    rng = np.random.default_rng(seed)
    model = model_cls(config, rng, dtype=dtype)
    model.set_rng(np.random.default_rng([seed, 1]))
    list(model.named_parameters())  # assigns hierarchical names
    return model


def count_parameters(config) -> int:
    """Closed-form parameter total (no model is built)."""
    return FAMILIES[family_of(config)][2](config)


def config_to_dict(config) -> dict:
    return {"family": family_of(config), **asdict(config)}


def config_from_dict(d: dict):
    d = dict(d)
    return make_config(d.pop("family"), **d)


def param_groups(model: Module) -> list[tuple[str, Parameter, bool]]:
    """``(name, parameter, weight_decay_eligible)`` for every parameter of ``model``."""
    return [(name, p, p.weight_decay_eligible) for name, p in model.named_parameters()]


__all__ = [
    "ConfigError",
    "FAMILIES",
    "FTTransformer",
    "FTTransformerConfig",
    "FeatureTokenizer",
    "MLP",
    "MLPConfig",
    "MultiheadAttention",
    "ResNet",
    "ResNetConfig",
    "TransformerLayer",
    "build_model",
    "config_from_dict",
    "config_to_dict",
    "count_parameters",
    "family_of",
    "make_config",
    "param_groups",
]
