"""Feature and target preprocessing fitted on the training split only."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.preprocessing import QuantileTransformer

from .data import TabularDataset


class PreprocessingError(ValueError):
    pass


class QuantileNormalizer:
    """Quantile transform to a standard normal output law.

    Reference quantiles are computed on training data plus N(0, noise_std^2)
    noise so that features with few distinct values still get distinct
    landmarks; the fitted map is then applied to the original values.
    Inputs outside the fitted range clamp to the extreme landmarks.
    """

    def __init__(self, noise_std: float = 1e-3, n_quantiles: int = 1000, seed: int = 0):
        self.noise_std = noise_std
        self.n_quantiles = n_quantiles
        self.seed = seed
        self._qt: QuantileTransformer | None = None

    def fit(self, x_train: np.ndarray) -> QuantileNormalizer:
        x = np.asarray(x_train, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        rng = np.random.default_rng(self.seed)
        noised = x + rng.normal(0.0, self.noise_std, size=x.shape) if self.noise_std else x
        self._qt = QuantileTransformer(
            n_quantiles=min(self.n_quantiles, len(x)),
            output_distribution="normal",
            subsample=max(len(x), 1),
            random_state=self.seed,
        ).fit(noised)
        return self

    @property
    def references(self) -> np.ndarray:
        """Landmark values, shape (n_quantiles, n_features)."""
        return self._qt.quantiles_

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            return self._qt.transform(x[:, None])[:, 0]
        return self._qt.transform(x)


def fit_quantile(train_col, noise_std: float = 1e-3, seed: int = 0, n_quantiles: int = 1000):
    return QuantileNormalizer(noise_std, n_quantiles, seed).fit(train_col)


def apply_quantile(state: QuantileNormalizer, col) -> np.ndarray:
    return state.transform(col)


@dataclass
class Standardizer:
    """Mean/population-std scaling; refuses constant columns."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x_train) -> Standardizer:
        x = np.asarray(x_train, dtype=np.float64)
        std = x.std(axis=0)
        if np.any(std == 0):
            raise PreprocessingError("cannot standardize a constant column (std = 0)")
        return cls(x.mean(axis=0), std)

    def transform(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def inverse(self, z) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.std + self.mean


def standardize(train_stats: Standardizer, col) -> np.ndarray:
    return train_stats.transform(col)


class TargetScaler(Standardizer):
    """Regression-target standardisation ``(y - mean(y_train)) / std(y_train)``."""

    def scale(self, y) -> np.ndarray:
        return self.transform(y)

    def unscale(self, y) -> np.ndarray:
        return self.inverse(y)


@dataclass
class Preprocessing:
    numerical: QuantileNormalizer | Standardizer | None
    target: TargetScaler | None


def preprocess(ds: TabularDataset, policy: str = "quantile", seed: int = 0,
               noise_std: float = 1e-3) -> tuple[TabularDataset, Preprocessing]:
    """Fit on the training split, transform every split.

    ``policy`` is ``quantile``, ``standard`` or ``none`` for the numerical
    features; regression targets are always standardized.
    """
    x_num = {k: ds._x_num[k] for k in ("train", "val", "test")}
    y = {k: ds._y[k] for k in ("train", "val", "test")}
    num_state = None
    if ds.n_num:
        if policy == "quantile":
            num_state = QuantileNormalizer(noise_std=noise_std, seed=seed).fit(x_num["train"])
        elif policy == "standard":
            num_state = Standardizer.fit(x_num["train"])
        elif policy != "none":
            raise PreprocessingError(f"unknown preprocessing policy {policy!r}")
        if num_state is not None:
            x_num = {k: num_state.transform(v) for k, v in x_num.items()}
    target_state = None
    if ds.task == "regression":
        target_state = TargetScaler.fit(y["train"])
        y = {k: target_state.scale(v) for k, v in y.items()}
    return ds.replace(x_num=x_num, y=y), Preprocessing(num_state, target_state)
