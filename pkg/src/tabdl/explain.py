"""Feature importances: CLS attention maps, Integrated Gradients, permutation test."""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import rankdata

from . import tensor as T
from .models import FTTransformer
from .nn import Module
from .training import predict, score


class UnsupportedMethod(TypeError):
    pass


@dataclass
class ImportanceVector:
    scores: np.ndarray
    method: str
    feature_names: list[str] = field(default_factory=list)
    n_evaluations: int = 0  # forward passes (am) or split evaluations (pt)

    def ranks(self) -> np.ndarray:
        """Rank 1 = most important; ties share the average rank."""
        return rankdata(-self.scores, method="average")

    def rows(self) -> list[dict]:
        names = self.feature_names or [f"f{j}" for j in range(len(self.scores))]
        return [{"feature": n, "score": float(s), "rank": float(r)}
                for n, s, r in zip(names, self.scores, self.ranks())]


@dataclass
class RankCorrelationReport:
    methods: tuple[str, str]
    rho: float
    n: int
    seed: int | None = None


@contextlib.contextmanager
def _frozen(model: Module):
    """Eval mode with parameter gradients switched off."""
    params = model.parameters()
    flags = [p.requires_grad for p in params]
    was_training = model.training
    model.eval()
    for p in params:
        p.requires_grad = False
    try:
        yield
    finally:
        for p, f in zip(params, flags):
            p.requires_grad = f
        model.train(was_training)


def attention_importance(model: Module, x_num, x_cat=None, batch_size: int = 1024) -> ImportanceVector:
    """Average CLS-query attention over heads and layers, then over samples.

    The CLS key column is dropped and each per-sample distribution is
    renormalised over the k feature tokens before averaging.
    """
    if not isinstance(model, FTTransformer):
        raise UnsupportedMethod(f"attention maps need an FT-Transformer, got {type(model).__name__}")
    n = len(x_num) if x_num is not None else len(x_cat)
    total = None
    with _frozen(model), T.no_grad():
        for start in range(0, n, batch_size):
            sl = slice(start, start + batch_size)
            model(None if x_num is None else x_num[sl], None if x_cat is None else x_cat[sl],
                  record_attention=True)
            p = model.attention_maps.astype(np.float64).mean(axis=(1, 2))[:, 1:]
            p /= p.sum(axis=1, keepdims=True)
            part = p.sum(axis=0)
            total = part if total is None else total + part
    return ImportanceVector(total / n, "am", n_evaluations=n)


def _scalar_output(out: T.Tensor, target: np.ndarray | None) -> T.Tensor:
    if out.shape[1] == 1:
        return out.sum()
    if target is None:
        target = out.data.argmax(axis=1)
    onehot = np.zeros(out.shape, dtype=out.dtype)
    onehot[np.arange(len(target)), target] = 1.0
    return (out * onehot).sum()


def integrated_gradients(model: Module, x_num, baseline=None, steps: int = 64, x_cat=None,
                         target=None, chunk: int = 256) -> np.ndarray:
    """Signed IG attributions for the numerical features, same shape as ``x_num``.

    Right-endpoint Riemann sum over ``steps`` points of the straight path from
    ``baseline`` (default zeros) to ``x_num``.  The attributed scalar is the
    regression output / binary logit, or the logit of ``target`` (default:
    predicted class) for multiclass models.  Categorical inputs stay fixed.
    Path points are differentiated ``chunk`` rows at a time to bound memory.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x = np.asarray(x_num, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    base = np.zeros_like(x) if baseline is None else np.asarray(baseline, dtype=np.float64)
    if base.shape not in (x.shape, x.shape[1:]):
        raise ValueError(f"baseline shape {base.shape} does not match input {x.shape}")
    base = np.broadcast_to(base, x.shape)
    if x_cat is not None:
        x_cat = np.atleast_2d(x_cat)
    diff = x - base
    n, k = x.shape
    alphas = np.arange(1, steps + 1) / steps
    # rows are (step, sample) pairs, flattened
    path = (base[None] + alphas[:, None, None] * diff[None]).reshape(-1, k)
    cat_path = None if x_cat is None else np.tile(x_cat, (steps, 1))
    tgt_path = None if target is None else np.tile(np.atleast_1d(target), steps)
    sums = np.zeros((steps * n, k))
    with _frozen(model):
        for start in range(0, len(path), chunk):
            sl = slice(start, start + chunk)
            xt = T.Tensor(path[sl].astype(model.dtype), requires_grad=True)
            out = model(xt, None if cat_path is None else cat_path[sl])
            _scalar_output(out, None if tgt_path is None else tgt_path[sl]).backward()
            sums[sl] = xt.grad
    grads = sums.reshape(steps, n, k).mean(axis=0)
    ig = diff * grads
    return ig[0] if single else ig


def ig_importance(model: Module, x_num, steps: int = 64, x_cat=None, baseline=None) -> ImportanceVector:
    """Mean absolute IG attribution per numerical feature over the given samples."""
    ig = integrated_gradients(model, x_num, baseline, steps, x_cat=x_cat)
    return ImportanceVector(np.abs(np.atleast_2d(ig)).mean(axis=0), "ig", n_evaluations=len(np.atleast_2d(ig)))


def permutation_importance(evaluate: Callable[[np.ndarray | None, np.ndarray | None], float],
                           x_num, x_cat=None, higher_is_better: bool = False, repeats: int = 5,
                           seed: int = 0) -> ImportanceVector:
    """Metric degradation when one feature column is shuffled, averaged over repeats.

    ``evaluate(x_num, x_cat)`` scores the model on the split.  Degradation is
    signed so that a worse metric gives a larger importance.  Shuffles use
    per-(feature, repeat) seeds, so results do not depend on evaluation order.
    Columns are numerical features first, then categorical ones.
    """
    n = len(x_num) if x_num is not None else (0 if x_cat is None else len(x_cat))
    if n == 0:
        raise ValueError("permutation importance needs a non-empty split")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    k_num = 0 if x_num is None else x_num.shape[1]
    k_cat = 0 if x_cat is None else x_cat.shape[1]
    sign = -1.0 if higher_is_better else 1.0
    base = evaluate(x_num, x_cat)
    calls = 1
    scores = np.zeros(k_num + k_cat)
    for j in range(k_num + k_cat):
        for r in range(repeats):
            perm = np.random.default_rng([seed, j, r]).permutation(n)
            xn, xc = x_num, x_cat
            if j < k_num:
                xn = x_num.copy()
                xn[:, j] = x_num[perm, j]
            else:
                xc = x_cat.copy()
                xc[:, j - k_num] = x_cat[perm, j - k_num]
            scores[j] += sign * (evaluate(xn, xc) - base)
            calls += 1
    return ImportanceVector(scores / repeats, "pt", n_evaluations=calls)


def model_permutation_importance(model: Module, task: str, x_num, x_cat, y, repeats: int = 5,
                                 seed: int = 0) -> ImportanceVector:
    """Permutation importance of ``model`` under the task metric on one split."""
    def evaluate(xn, xc):
        return score(task, predict(model, xn, xc), y)

    return permutation_importance(evaluate, x_num, x_cat, higher_is_better=task != "regression",
                                  repeats=repeats, seed=seed)


def spearman(a, b) -> float:
    """Spearman rank correlation with average ranks for ties."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if len(a) != len(b):
        raise ValueError("score vectors differ in length")
    if len(a) < 2:
        raise ValueError("rank correlation needs at least two items")
    ra, rb = rankdata(a) - (len(a) + 1) / 2, rankdata(b) - (len(b) + 1) / 2
    denom = np.sqrt((ra * ra).sum() * (rb * rb).sum())
    if denom == 0:
        return float("nan")
    return float(np.clip((ra * rb).sum() / denom, -1.0, 1.0))


def correlation_report(a: ImportanceVector, b: ImportanceVector, seed: int | None = None) -> RankCorrelationReport:
    return RankCorrelationReport((a.method, b.method), spearman(a.scores, b.scores), len(a.scores), seed)
