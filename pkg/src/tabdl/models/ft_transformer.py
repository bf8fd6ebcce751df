"""FT-Transformer: Feature Tokenizer + PreNorm Transformer + CLS prediction head."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import tensor as T
from ..nn import CategoricalEmbeddings, Dropout, LayerNorm, Linear, Module, Parameter, uniform_
from ..tensor import Tensor


class ConfigError(ValueError):
    pass


@dataclass
class FTTransformerConfig:
    n_num: int
    cardinalities: list[int] = field(default_factory=list)
    d_out: int = 1
    n_layers: int = 3
    d_token: int = 192
    n_heads: int = 8
    ffn_factor: float = 4 / 3
    attention_dropout: float = 0.2
    ffn_dropout: float = 0.1
    residual_dropout: float = 0.0
    token_bias: bool = True

    def __post_init__(self):
        self.cardinalities = [int(c) for c in self.cardinalities]
        if self.n_layers < 1:
            raise ConfigError("n_layers must be >= 1")
        if self.d_token % self.n_heads:
            raise ConfigError(f"d_token={self.d_token} is not divisible by n_heads={self.n_heads}")
        for name in ("attention_dropout", "ffn_dropout", "residual_dropout"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {rate}")
        if self.n_num < 0 or self.d_out < 1 or self.ffn_factor <= 0:
            raise ConfigError("n_num >= 0, d_out >= 1 and ffn_factor > 0 are required")

    @property
    def n_features(self) -> int:
        return self.n_num + len(self.cardinalities)

    @property
    def d_hidden(self) -> int:
        return int(round(self.ffn_factor * self.d_token))

    @classmethod
    def default(cls, n_num: int, cardinalities=(), d_out: int = 1) -> FTTransformerConfig:
        """The untuned default: 3 layers, d=192, 8 heads, ReGLU with factor 4/3."""
        return cls(n_num=n_num, cardinalities=list(cardinalities), d_out=d_out)


class FeatureTokenizer(Module):
    """Maps every feature to a d-dimensional token ``bias_j + f_j(x_j)``.

    Numerical features are scaled copies of a per-feature vector, categorical
    features are table lookups.  Also owns the CLS embedding.
    """

    def __init__(self, n_num: int, cardinalities: list[int], d: int, rng: np.random.Generator,
                 bias: bool = True, dtype=T.DEFAULT_DTYPE):
        bound = 1.0 / math.sqrt(d)
        self.n_num = n_num
        self.d = d
        self.weight_num = (
            Parameter(uniform_(rng, (n_num, d), bound, dtype), weight_decay_eligible=False)
            if n_num else None
        )
        self.bias_num = (
            Parameter(uniform_(rng, (n_num, d), bound, dtype), weight_decay_eligible=False)
            if n_num and bias else None
        )
        self.embeddings = CategoricalEmbeddings(cardinalities, d, rng, dtype) if cardinalities else None
        self.bias_cat = (
            Parameter(uniform_(rng, (len(cardinalities), d), bound, dtype), weight_decay_eligible=False)
            if cardinalities and bias else None
        )
        self.cls_token = Parameter(uniform_(rng, (d,), bound, dtype), weight_decay_eligible=False)

    @property
    def n_tokens(self) -> int:
        return self.n_num + (len(self.embeddings.cardinalities) if self.embeddings else 0)

    def forward(self, x_num, x_cat=None) -> Tensor:
        parts = []
        if self.n_num:
            x_num = T.as_tensor(x_num, self.weight_num.dtype)
            if x_num.ndim != 2 or x_num.shape[1] != self.n_num:
                raise ValueError(f"expected numerical input (n, {self.n_num}), got {x_num.shape}")
            tok = x_num.reshape(x_num.shape[0], self.n_num, 1) * self.weight_num
            if self.bias_num is not None:
                tok = tok + self.bias_num
            parts.append(tok)
        if self.embeddings is not None:
            if x_cat is None:
                raise ValueError("model expects categorical features")
            tok = self.embeddings(x_cat)
            if self.bias_cat is not None:
                tok = tok + self.bias_cat
            parts.append(tok)
        elif x_cat is not None and np.asarray(x_cat).size:
            raise ValueError("model has no categorical features")
        if not parts:
            raise ValueError("no input features")
        return parts[0] if len(parts) == 1 else T.concat(parts, axis=1)

    def append_cls(self, tokens: Tensor) -> Tensor:
        """Prepend the shared CLS embedding at token position 0."""
        n = tokens.shape[0]
        cls = T.broadcast_to(self.cls_token.reshape(1, 1, self.d), (n, 1, self.d))
        return T.concat([cls, tokens], axis=1)


class MultiheadAttention(Module):
    def __init__(self, d: int, n_heads: int, dropout: float, rng: np.random.Generator,
                 dtype=T.DEFAULT_DTYPE):
        if d % n_heads:
            raise ConfigError(f"d={d} is not divisible by n_heads={n_heads}")
        self.n_heads = n_heads
        self.W_q = Linear(d, d, rng, dtype=dtype)
        self.W_k = Linear(d, d, rng, dtype=dtype)
        self.W_v = Linear(d, d, rng, dtype=dtype)
        self.W_out = Linear(d, d, rng, dtype=dtype)
        self.dropout = Dropout(dropout)

    def _split(self, x: Tensor) -> Tensor:
        n, t, d = x.shape
        return x.reshape(n, t, self.n_heads, d // self.n_heads).transpose(0, 2, 1, 3)

    def forward(self, x_q: Tensor, x_kv: Tensor) -> tuple[Tensor, np.ndarray]:
        """Returns the attended output and the pre-dropout probabilities (n, heads, t_q, t_kv)."""
        q = self._split(self.W_q(x_q))
        k = self._split(self.W_k(x_kv))
        v = self._split(self.W_v(x_kv))
        d_head = q.shape[-1]
        scores = (q @ k.swapaxes(-1, -2)) * (1.0 / math.sqrt(d_head))
        probs = T.softmax(scores, axis=-1)
        out = self.dropout(probs) @ v
        n, _, t, _ = out.shape
        out = out.transpose(0, 2, 1, 3).reshape(n, t, self.n_heads * d_head)
        return self.W_out(out), probs.data


class TransformerLayer(Module):
    """Two PreNorm residual branches: MHSA then a ReGLU feed-forward network."""

    def __init__(self, d: int, n_heads: int, d_hidden: int, attention_dropout: float,
                 ffn_dropout: float, residual_dropout: float, prenormalize_attention: bool,
                 rng: np.random.Generator, dtype=T.DEFAULT_DTYPE):
        self.attention_norm = LayerNorm(d, dtype=dtype) if prenormalize_attention else None
        self.attention = MultiheadAttention(d, n_heads, attention_dropout, rng, dtype)
        self.ffn_norm = LayerNorm(d, dtype=dtype)
        self.ffn_first = Linear(d, 2 * d_hidden, rng, dtype=dtype)
        self.ffn_dropout = Dropout(ffn_dropout)
        self.ffn_second = Linear(d_hidden, d, rng, dtype=dtype)
        self.residual_dropout = Dropout(residual_dropout)

    def forward(self, x: Tensor, cls_only: bool = False) -> tuple[Tensor, np.ndarray]:
        h = self.attention_norm(x) if self.attention_norm is not None else x
        if cls_only:
            # only the CLS row of the last layer reaches the head
            x = x[:, :1]
            a, probs = self.attention(h[:, :1], h)
        else:
            a, probs = self.attention(h, h)
        x = x + self.residual_dropout(a)
        f = self.ffn_second(self.ffn_dropout(T.reglu(self.ffn_first(self.ffn_norm(x)))))
        return x + self.residual_dropout(f), probs


class FTTransformer(Module):
    family = "ft_transformer"

    def __init__(self, config: FTTransformerConfig, rng: np.random.Generator,
                 dtype=T.DEFAULT_DTYPE):
        c = config
        self.config = c
        self.dtype = np.dtype(dtype)
        self.tokenizer = FeatureTokenizer(c.n_num, c.cardinalities, c.d_token, rng,
                                          bias=c.token_bias, dtype=dtype)
        self.layers = [
            TransformerLayer(c.d_token, c.n_heads, c.d_hidden, c.attention_dropout, c.ffn_dropout,
                             c.residual_dropout, prenormalize_attention=i > 0, rng=rng, dtype=dtype)
            for i in range(c.n_layers)
        ]
        self.head_norm = LayerNorm(c.d_token, dtype=dtype)
        self.head = Linear(c.d_token, c.d_out, rng, dtype=dtype)
        self.attention_maps: np.ndarray | None = None

    def forward(self, x_num, x_cat=None, record_attention: bool = False,
                full_last_layer: bool = False) -> Tensor:
        """Predictions of shape (n, d_out).

        With ``record_attention`` the CLS-query attention rows of every layer
        are kept in ``self.attention_maps`` as (n, layers, heads, tokens + 1).
        """
        x = self.tokenizer.append_cls(self.tokenizer(x_num, x_cat))
        rows = []
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x, probs = layer(x, cls_only=(i == last and not full_last_layer))
            if record_attention:
                rows.append(probs[:, :, 0, :])
        if record_attention:
            self.attention_maps = np.stack(rows, axis=1)
        cls = x[:, 0]
        return self.head(T.relu(self.head_norm(cls)))


def count_parameters(c: FTTransformerConfig) -> int:
    """Closed-form parameter total for ``c``."""
    d, h, k = c.d_token, c.d_hidden, c.n_features
    tokenizer = c.n_num * d + sum(c.cardinalities) * d + d  # weights, tables, CLS
    if c.token_bias:
        tokenizer += k * d
    attention = 4 * (d * d + d)
    ffn = (d * 2 * h + 2 * h) + (h * d + d)
    norms = 2 * d * (2 * c.n_layers - 1)
    head = 2 * d + d * c.d_out + c.d_out
    return tokenizer + c.n_layers * (attention + ffn) + norms + head
