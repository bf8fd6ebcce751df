"""Synthetic regression tasks interpolating between tree-like and MLP-like targets.

Objects are drawn once as x ~ N(0, I_k); the target is

    y = alpha * f_gbdt(x) + (1 - alpha) * f_dl(x)

standardised on the training split, where ``f_gbdt`` averages 30 random
decision trees and ``f_dl`` is a fixed, randomly initialised MLP.  Both only
read the informative prefix of the features.
"""

from __future__ import annotations

import functools
from dataclasses import asdict, dataclass, replace

import numpy as np

from .data import TabularDataset
from .models import build_model
from .training import TrainConfig, train


@dataclass
class RandomTree:
    left: np.ndarray
    right: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    value: np.ndarray
    depth: np.ndarray
    n_added: int  # nodes added by the growth loop (every node except the root)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.left < 0

    @property
    def n_leaves(self) -> int:
        return int(self.is_leaf.sum())

    @property
    def n_splits(self) -> int:
        return int((~self.is_leaf).sum())

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def leaf_index(self, x: np.ndarray) -> np.ndarray:
        """Leaf reached by every row; ``x[f] < threshold`` goes left."""
        x = np.atleast_2d(x)
        node = np.zeros(len(x), dtype=np.int64)
        rows = np.arange(len(x))
        active = ~self.is_leaf[node]
        while active.any():
            r, nd = rows[active], node[active]
            go_left = x[r, self.feature[nd]] < self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = ~self.is_leaf[node]
        return node

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.value[self.leaf_index(x)]


def build_random_tree(rng: np.random.Generator, k: int = 100, max_depth: int = 10,
                      target_nodes: int = 100) -> RandomTree:
    """Grow a tree by repeatedly splitting a uniformly chosen shallow leaf.

    Each iteration picks a leaf of depth < ``max_depth``, gives it a uniform
    feature in ``[0, k)`` and an N(0, 1) threshold, and attaches two leaves with
    N(0, 1) values; the loop adds two nodes per iteration until
    ``target_nodes`` nodes have been added.
    """
    if target_nodes < 2:
        raise ValueError("target_nodes must be >= 2 (an unsplit root has no value)")
    cap = target_nodes + 1
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.full(cap, np.nan)
    value = np.full(cap, np.nan)
    depth = np.zeros(cap, dtype=np.int64)
    leaves = [0]
    size = 1
    n = 0
    while n < target_nodes:
        eligible = [z for z in leaves if depth[z] < max_depth]
        if not eligible:
            raise RuntimeError("no leaf shallow enough to split")
        z = eligible[int(rng.integers(len(eligible)))]
        feature[z] = rng.integers(k)
        threshold[z] = rng.standard_normal()
        l, r = size, size + 1
        size += 2
        leaves.remove(z)
        leaves += [l, r]
        value[z] = np.nan
        left[z], right[z] = l, r
        depth[l] = depth[r] = depth[z] + 1
        value[l] = rng.standard_normal()
        value[r] = rng.standard_normal()
        n += 2
    return RandomTree(left[:size], right[:size], feature[:size], threshold[:size], value[:size],
                      depth[:size], n)


def tree_predict(tree: RandomTree, x) -> np.ndarray:
    return tree.predict(np.asarray(x, dtype=np.float64))


def f_gbdt(forest: list[RandomTree], x) -> np.ndarray:
    """Mean leaf value over the forest."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    total = np.zeros(len(x))
    for tree in forest:
        total += tree.predict(x)
    return total / len(forest)


class RandomMLPTarget:
    """Untrained ReLU MLP with hidden widths ``hidden``.

    Weights and biases are drawn from U(-a, a) with a = fan_in^-0.5 (the
    Kaiming-uniform default of a linear layer) and never change.
    """

    def __init__(self, d_in: int, rng: np.random.Generator, hidden=(256, 256, 256)):
        dims = [d_in, *hidden, 1]
        self.weights, self.biases = [], []
        for a, b in zip(dims[:-1], dims[1:]):
            bound = a ** -0.5
            w = rng.uniform(-bound, bound, size=(a, b))
            bias = rng.uniform(-bound, bound, size=b)
            w.setflags(write=False)
            bias.setflags(write=False)
            self.weights.append(w)
            self.biases.append(bias)

    def __call__(self, x) -> np.ndarray:
        h = np.asarray(x, dtype=np.float64)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
        return h[:, 0]


@dataclass(frozen=True)
class SyntheticTaskSpec:
    alpha: float = 0.5
    n_train: int = 20_000
    n_val: int = 2_000
    n_test: int = 4_000
    n_features: int = 100
    n_informative: int = 50
    n_trees: int = 30
    seed_data: int = 0
    seed_trees: int = 1
    seed_mlp: int = 2

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0 < self.n_informative <= self.n_features:
            raise ValueError("need 0 < n_informative <= n_features")
        if min(self.n_train, self.n_val, self.n_test) < 2:
            raise ValueError("every split needs at least two rows")

    @classmethod
    def paper_scale(cls, **kw) -> SyntheticTaskSpec:
        return cls(n_train=500_000, n_val=50_000, n_test=100_000, **kw)


class SyntheticGenerator:
    """Objects and target functions for one spec; shared by every alpha."""

    def __init__(self, spec: SyntheticTaskSpec):
        self.spec = spec
        n = spec.n_train + spec.n_val + spec.n_test
        self.x = np.random.default_rng(spec.seed_data).standard_normal((n, spec.n_features))
        tree_rng = np.random.default_rng(spec.seed_trees)
        self.forest = [build_random_tree(tree_rng, k=spec.n_informative) for _ in range(spec.n_trees)]
        self.mlp = RandomMLPTarget(spec.n_informative, np.random.default_rng(spec.seed_mlp))
        informative = self.x[:, :spec.n_informative]
        self.gbdt_values = _standardize_on_train(f_gbdt(self.forest, informative), spec.n_train)
        self.dl_values = _standardize_on_train(self.mlp(informative), spec.n_train)

    def target(self, alpha: float) -> np.ndarray:
        """Standardised target for every object (train, val, test order)."""
        y = alpha * self.gbdt_values + (1.0 - alpha) * self.dl_values
        return _standardize_on_train(y, self.spec.n_train)

    def task(self, alpha: float) -> TabularDataset:
        s = self.spec
        y = self.target(alpha)
        cut = np.cumsum([s.n_train, s.n_val])
        xs = np.split(self.x, cut)
        ys = np.split(y, cut)
        return TabularDataset(
            "regression",
            dict(zip(("train", "val", "test"), xs)),
            {},
            dict(zip(("train", "val", "test"), ys)),
            feature_names=[f"x{j + 1}" for j in range(s.n_features)],
        )


def _standardize_on_train(v: np.ndarray, n_train: int) -> np.ndarray:
    mu = v[:n_train].mean()
    sd = v[:n_train].std()
    return (v - mu) / sd


@functools.lru_cache(maxsize=4)
def generator_for(spec: SyntheticTaskSpec) -> SyntheticGenerator:
    """Cached generator keyed by everything except alpha."""
    return SyntheticGenerator(replace(spec, alpha=0.0))


def make_task(spec: SyntheticTaskSpec) -> TabularDataset:
    return generator_for(replace(spec, alpha=0.0)).task(spec.alpha)


def constant_baseline_rmse(ds: TabularDataset) -> float:
    """Test RMSE of predicting the training mean."""
    mean = ds.get("train")[2].mean()
    y_test = ds.get("test")[2]
    return float(np.sqrt(np.mean((y_test - mean) ** 2)))


# Laptop-scale settings for the alpha sweep: (model kwargs, train kwargs) per family.
# Attention dropout is off because mask sampling dominates the CPU cost of a step.
DESK_PRESETS = {
    "resnet": (
        dict(n_blocks=2, d_main=48, hidden_factor=2.0, hidden_dropout=0.3, residual_dropout=0.0),
        dict(lr=1e-3, weight_decay=1e-5, patience=8, max_epochs=100),
    ),
    "ft_transformer": (
        dict(n_layers=2, d_token=32, n_heads=2, attention_dropout=0.0, ffn_dropout=0.1,
             residual_dropout=0.0),
        dict(lr=1e-3, weight_decay=1e-5, patience=8, max_epochs=16),
    ),
}


def alpha_sweep(spec: SyntheticTaskSpec, alphas, model_configs: dict, train_cfg, seeds=(0, 1),
                dtype=np.float64, on_run=None) -> list[dict]:
    """Train every model on every alpha-task for every seed.

    ``train_cfg`` is one :class:`TrainConfig` or a dict of them keyed like
    ``model_configs``. Returns one row per run: ``alpha, model, seed, test_rmse``.
    """
    rows = []
    for alpha in alphas:
        ds = make_task(replace(spec, alpha=float(alpha)))
        for name, config in model_configs.items():
            for seed in seeds:
                model = build_model(config, seed=seed, dtype=dtype)
                base = train_cfg[name] if isinstance(train_cfg, dict) else train_cfg
                report = train(model, ds, TrainConfig(**{**asdict(base), "seed": seed}))
                row = {"alpha": float(alpha), "model": name, "seed": int(seed),
                       "test_rmse": report.test_metric}
                rows.append(row)
                if on_run is not None:
                    on_run(row, report)
    return rows


def summarize_sweep(rows: list[dict]) -> list[dict]:
    """Mean and population std of test RMSE per (alpha, model), in first-seen order."""
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        groups.setdefault((r["alpha"], r["model"]), []).append(r["test_rmse"])
    return [
        {"alpha": a, "model": m, "n": len(v), "mean_rmse": float(np.mean(v)), "std_rmse": float(np.std(v))}
        for (a, m), v in groups.items()
    ]
