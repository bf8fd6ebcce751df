"""Training protocol: minibatch AdamW, early stopping, seed replicas and ensembles."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import tensor as T
from .data import TabularDataset, accuracy, higher_is_better, rmse
from .models import build_model
from .nn import BatchNorm1d, Module
from .optim import AdamW


class TrainingDiverged(FloatingPointError):
    def __init__(self, message: str, last_good_epoch: int):
        super().__init__(message)
        self.last_good_epoch = last_good_epoch


@dataclass
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-5
    batch_size: int = 256
    patience: int = 16
    max_epochs: int = 10_000
    seed: int = 0
    eval_batch_size: int = 2048

    def __post_init__(self):
        if self.patience < 0:
            raise ValueError("patience must be >= 0")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")
        if self.lr <= 0 or self.weight_decay < 0:
            raise ValueError("lr must be > 0 and weight_decay >= 0")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_metric: float
    timestamp: float = field(default=0.0, compare=False)


@dataclass
class TrainReport:
    metric: str
    epochs: list[EpochRecord]
    best_epoch: int
    best_val: float
    test_metric: float
    n_parameters: int

    def to_dict(self) -> dict:
        return asdict(self)


class EarlyStopping:
    """Stops after ``patience + 1`` consecutive epochs without strict improvement."""

    def __init__(self, patience: int, higher_is_better: bool):
        self.patience = patience
        self.higher_is_better = higher_is_better
        self.best: float | None = None
        self.best_epoch = 0
        self.bad_epochs = 0
        self.epoch = 0

    def update(self, value: float) -> bool:
        """Record one epoch's validation metric; returns whether it improved."""
        self.epoch += 1
        if self.best is None or (value > self.best if self.higher_is_better else value < self.best):
            self.best = value
            self.best_epoch = self.epoch
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience + 1


def _loss(task: str, out: T.Tensor, y: np.ndarray) -> T.Tensor:
    if task == "regression":
        return T.mse(out, y)
    if task == "binclass":
        return T.binary_cross_entropy_with_logits(out, y)
    return T.cross_entropy(out, y)


def _slice(x, idx):
    return None if x is None else x[idx]


def predict(model: Module, x_num, x_cat=None, batch_size: int = 2048) -> np.ndarray:
    """Raw eval-mode outputs (n, d_out) as a float64 array."""
    was_training = model.training
    model.eval()
    n = len(x_num) if x_num is not None else len(x_cat)
    outs = []
    with T.no_grad():
        for start in range(0, n, batch_size):
            idx = slice(start, start + batch_size)
            outs.append(model(_slice(x_num, idx), _slice(x_cat, idx)).data.astype(np.float64))
    model.train(was_training)
    return np.concatenate(outs, axis=0)


def to_labels(task: str, outputs: np.ndarray) -> np.ndarray:
    if task == "binclass":
        return (outputs.reshape(-1) > 0).astype(np.int64)
    return outputs.argmax(axis=1)


def score(task: str, outputs: np.ndarray, y: np.ndarray) -> float:
    if task == "regression":
        return rmse(outputs[:, 0], y)
    return accuracy(to_labels(task, outputs), y)


def evaluate(model: Module, ds: TabularDataset, split: str, batch_size: int = 2048) -> float:
    x_num, x_cat, y = ds.get(split)
    return score(ds.task, predict(model, x_num, x_cat, batch_size), y)


def _has_batchnorm(model: Module) -> bool:
    return any(isinstance(m, BatchNorm1d) for _, m in model.named_modules())


def train(model: Module, ds: TabularDataset, cfg: TrainConfig,
          on_epoch: Callable[[EpochRecord], None] | None = None,
          evaluate_test: bool = True) -> TrainReport:
    """Train until early stopping, restore the best epoch, evaluate test once.

    With ``evaluate_test=False`` (hyperparameter search) the test split is
    never read and ``test_metric`` is NaN.
    """
    higher = higher_is_better(ds.task)
    metric = "accuracy" if higher else "rmse"
    rng = np.random.default_rng([cfg.seed, 2])
    model.set_rng(np.random.default_rng([cfg.seed, 3]))
    opt = AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    stopper = EarlyStopping(cfg.patience, higher)
    x_num, x_cat, y = ds.get("train")
    if x_num is not None:
        x_num = x_num.astype(model.dtype, copy=False)
    n = ds.size("train")
    drop_singleton = _has_batchnorm(model)
    records: list[EpochRecord] = []
    best_state = model.state_dict()

    for epoch in range(1, cfg.max_epochs + 1):
        model.train()
        perm = rng.permutation(n)
        total, count = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            if drop_singleton and len(idx) < 2:
                continue
            opt.zero_grad()
            loss = _loss(ds.task, model(_slice(x_num, idx), _slice(x_cat, idx)), y[idx])
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDiverged(f"non-finite training loss at epoch {epoch}", epoch - 1)
            loss.backward()
            try:
                opt.step()
            except FloatingPointError as exc:
                raise TrainingDiverged(f"{exc} at epoch {epoch}", epoch - 1) from None
            total += value * len(idx)
            count += len(idx)
        val = evaluate(model, ds, "val", cfg.eval_batch_size)
        if not math.isfinite(val):
            raise TrainingDiverged(f"non-finite validation metric at epoch {epoch}", epoch - 1)
        if stopper.update(val):
            best_state = model.state_dict()
        record = EpochRecord(epoch, total / max(count, 1), val, time.time())
        records.append(record)
        if on_epoch is not None:
            on_epoch(record)
        if stopper.should_stop:
            break

    model.load_state_dict(best_state)
    model.eval()
    test = evaluate(model, ds, "test", cfg.eval_batch_size) if evaluate_test else math.nan
    return TrainReport(metric, records, stopper.best_epoch, stopper.best, test, model.n_parameters())


@dataclass
class SeedRuns:
    models: list[Module]
    reports: list[TrainReport]

    @property
    def test_metrics(self) -> list[float]:
        return [r.test_metric for r in self.reports]

    def summary(self) -> dict:
        values = np.asarray(self.test_metrics)
        return {"n": len(values), "mean": float(values.mean()), "std": float(values.std())}


def run_seeds(model_config, ds: TabularDataset, cfg: TrainConfig, n_seeds: int = 15,
              seeds=None, dtype=np.float64,
              on_epoch: Callable[[int, EpochRecord], None] | None = None) -> SeedRuns:
    """Train one model per seed; the seed drives initialisation, batch order and dropout."""
    seeds = list(range(n_seeds)) if seeds is None else list(seeds)
    models, reports = [], []
    for seed in seeds:
        model = build_model(model_config, seed=seed, dtype=dtype)
        hook = None if on_epoch is None else (lambda rec, s=seed: on_epoch(s, rec))
        run_cfg = TrainConfig(**{**asdict(cfg), "seed": seed})
        reports.append(train(model, ds, run_cfg, hook))
        models.append(model)
    return SeedRuns(models, reports)


def make_groups(models: list, n_groups: int = 3) -> list[list]:
    """Split into ``n_groups`` disjoint consecutive groups of equal size."""
    if n_groups < 1 or len(models) % n_groups:
        raise ValueError(f"{len(models)} models cannot form {n_groups} equal groups")
    size = len(models) // n_groups
    return [models[i * size:(i + 1) * size] for i in range(n_groups)]


def ensemble_outputs(models: list[Module], task: str, x_num, x_cat=None) -> np.ndarray:
    """Averaged member outputs: raw values for regression, probabilities otherwise."""
    acc = None
    for m in models:
        out = predict(m, x_num, x_cat)
        if task == "binclass":
            out = 1.0 / (1.0 + np.exp(-out))
        elif task == "multiclass":
            out = np.exp(out - out.max(axis=1, keepdims=True))
            out /= out.sum(axis=1, keepdims=True)
        acc = out if acc is None else acc + out
    return acc / len(models)


def ensemble_predict(models: list[Module], task: str, x_num, x_cat=None) -> np.ndarray:
    """Regression values, or class labels from averaged probabilities."""
    avg = ensemble_outputs(models, task, x_num, x_cat)
    if task == "regression":
        return avg[:, 0]
    if task == "binclass":
        return (avg[:, 0] > 0.5).astype(np.int64)
    return avg.argmax(axis=1)
