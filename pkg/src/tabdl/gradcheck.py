"""Central finite-difference checks for the autodiff engine."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor


def numerical_gradient(f: Callable[[], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of the scalar ``f()`` w.r.t. ``x``, perturbed in place."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 0.0) -> float:
    """``||a - b|| / max(||a||, ||b||, floor)``, zero when both vanish."""
    scale = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


def check_gradients(fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-5,
                    seed: int = 0, floor: float = 1e-6) -> float:
    """Max relative error between analytic and numerical gradients over ``inputs``.

    ``fn`` is re-evaluated from scratch for every perturbation and must be
    deterministic.  Non-scalar outputs are contracted with a fixed random
    projection so every output component contributes.

    ``floor`` bounds the denominator from below so that gradients which are
    exactly zero by symmetry (e.g. attention key biases, which softmax
    cancels) compare round-off against round-off as an absolute error.
    """
    out = fn()
    projection = None
    if out.size != 1:
        projection = np.random.default_rng(seed).standard_normal(out.shape)

    def scalar() -> Tensor:
        y = fn()
        return y if projection is None else (y * projection).sum()

    for x in inputs:
        x.grad = None
    scalar().backward()
    analytic = [np.zeros_like(x.data) if x.grad is None else x.grad.copy() for x in inputs]

    worst = 0.0
    for x, a in zip(inputs, analytic):
        numeric = numerical_gradient(lambda: scalar().item(), x.data, h)
        worst = max(worst, relative_error(a, numeric, floor))
    return worst


def _leaf(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


def primitive_cases() -> dict[str, Callable]:
    """Toy-shaped case per differentiable primitive: ``builder(rng) -> (fn, inputs)``."""
    def binary(op, sa, sb):
        def build(rng):
            a, b = _leaf(rng, *sa), _leaf(rng, *sb)
            return (lambda: op(a, b)), [a, b]
        return build

    def unary(op, *shape):
        def build(rng):
            a = _leaf(rng, *shape)
            return (lambda: op(a)), [a]
        return build

    def batch_norm_train(rng):
        x, g, b = _leaf(rng, 8, 3), _leaf(rng, 3), _leaf(rng, 3)
        return (lambda: T.batch_norm(x, g, b, np.zeros(3), np.ones(3), True)), [x, g, b]

    def batch_norm_eval(rng):
        x, g, b = _leaf(rng, 8, 3), _leaf(rng, 3), _leaf(rng, 3)
        mean, var = rng.standard_normal(3), rng.uniform(0.5, 2, 3)
        return (lambda: T.batch_norm(x, g, b, mean, var, False)), [x, g, b]

    def embedding(rng):
        table = _leaf(rng, 5, 3)
        idx = rng.integers(0, 5, size=(4, 2))
        return (lambda: T.embedding(table, idx)), [table]

    def cross_entropy(rng):
        logits = _leaf(rng, 6, 4)
        labels = rng.integers(0, 4, 6)
        return (lambda: T.cross_entropy(logits, labels)), [logits]

    def bce(rng):
        logits = _leaf(rng, 6, 1)
        t = rng.integers(0, 2, 6)
        return (lambda: T.binary_cross_entropy_with_logits(logits, t)), [logits]

    def mse(rng):
        p = _leaf(rng, 6, 1)
        t = rng.standard_normal(6)
        return (lambda: T.mse(p, t)), [p]

    def dropout_train(rng):
        x = _leaf(rng, 4, 5)
        return (lambda: T.dropout(x, 0.3, True, np.random.default_rng(0))), [x]

    def layer_norm(rng):
        x, g, b = _leaf(rng, 3, 4, 6), _leaf(rng, 6), _leaf(rng, 6)
        return (lambda: T.layer_norm(x, g, b)), [x, g, b]

    def linear(rng):
        x, w, b = _leaf(rng, 2, 3, 4), _leaf(rng, 4, 5), _leaf(rng, 5)
        return (lambda: T.linear(x, w, b)), [x, w, b]

    def getitem(rng):
        x = _leaf(rng, 3, 4, 2)
        return (lambda: x[:, 0]), [x]

    def concat(rng):
        a, b = _leaf(rng, 2, 3, 4), _leaf(rng, 2, 1, 4)
        return (lambda: T.concat([a, b], axis=1)), [a, b]

    def broadcast(rng):
        a = _leaf(rng, 1, 1, 4)
        return (lambda: T.broadcast_to(a, (3, 1, 4))), [a]

    return {
        "add": binary(T.add, (3, 4), (4,)),
        "mul": binary(T.mul, (3, 4), (3, 1)),
        "matmul": binary(T.matmul, (2, 3, 4), (2, 4, 5)),
        "linear": linear,
        "relu": unary(T.relu, 4, 5),
        "reglu": unary(T.reglu, 3, 6),
        "softmax": unary(T.softmax, 3, 5),
        "log_softmax": unary(T.log_softmax, 3, 5),
        "exp": unary(T.exp, 3, 2),
        "sum_axis": unary(lambda a: T.sum_(a, axis=1), 3, 4),
        "mean": unary(lambda a: T.mean(a, axis=0), 3, 4),
        "reshape": unary(lambda a: a.reshape(4, 3), 3, 4),
        "transpose": unary(lambda a: a.transpose(1, 0, 2), 2, 3, 4),
        "getitem": getitem,
        "concat": concat,
        "broadcast_to": broadcast,
        "layer_norm": layer_norm,
        "batch_norm_train": batch_norm_train,
        "batch_norm_eval": batch_norm_eval,
        "dropout_train": dropout_train,
        "embedding": embedding,
        "cross_entropy": cross_entropy,
        "bce_with_logits": bce,
        "mse": mse,
    }


def architecture_cases() -> dict[str, Callable]:
    """One toy instance of each model family (k <= 6, d <= 16, L <= 2), dropout off."""
    from .models import FTTransformerConfig, MLPConfig, ResNetConfig, build_model

    configs = {
        "ft_transformer": FTTransformerConfig(n_num=4, cardinalities=[3], n_layers=2, d_token=8, n_heads=2,
                                              attention_dropout=0.0, ffn_dropout=0.0, residual_dropout=0.0),
        "resnet": ResNetConfig(n_num=4, cardinalities=[3], n_blocks=2, d_main=8, d_embedding=4),
        "mlp": MLPConfig(n_num=4, cardinalities=[3], d_layers=[5, 6], d_embedding=2),
    }

    def case(config):
        def build(rng):
            model = build_model(config, seed=int(rng.integers(2**31)))
            x = _leaf(rng, 5, 4)
            x_cat = rng.integers(0, 3, size=(5, 1))
            return (lambda: model(x, x_cat)), [x] + model.parameters()
        return build

    return {name: case(c) for name, c in configs.items()}


def gradient_suite(seeds=range(3), h: float = 1e-5) -> dict[str, float]:
    """Worst relative error per primitive and per architecture over ``seeds``."""
    cases = {**primitive_cases(), **architecture_cases()}
    worst = {}
    for name, build in cases.items():
        worst[name] = 0.0
        for seed in seeds:
            fn, inputs = build(np.random.default_rng(seed))
            worst[name] = max(worst[name], check_gradients(fn, inputs, h=h, seed=seed))
    return worst
