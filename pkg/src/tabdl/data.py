"""Tabular datasets: CSV ingestion, seeded splits, binary cache and metrics."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TASKS = ("regression", "binclass", "multiclass")
KINDS = ("numerical", "categorical", "target")
SPLITS = ("train", "val", "test")


class DataError(ValueError):
    pass


@dataclass
class DatasetSchema:
    """Column kinds plus the task.

    ``columns`` maps column name to one of ``numerical``, ``categorical`` or
    ``target`` and keeps file order.
    """

    columns: dict[str, str]
    task: str
    n_classes: int | None = None
    allow_unknown_categories: bool = False

    def __post_init__(self):
        if self.task not in TASKS:
            raise DataError(f"task must be one of {TASKS}, got {self.task!r}")
        bad = {k: v for k, v in self.columns.items() if v not in KINDS}
        if bad:
            raise DataError(f"unknown column kinds: {bad}")
        targets = [k for k, v in self.columns.items() if v == "target"]
        if len(targets) != 1:
            raise DataError(f"schema needs exactly one target column, found {len(targets)}")
        if self.task == "binclass":
            self.n_classes = 2
        if self.task != "regression" and (self.n_classes is None or self.n_classes < 2):
            raise DataError("classification needs n_classes >= 2")

    @property
    def target(self) -> str:
        return next(k for k, v in self.columns.items() if v == "target")

    @property
    def numerical(self) -> list[str]:
        return [k for k, v in self.columns.items() if v == "numerical"]

    @property
    def categorical(self) -> list[str]:
        return [k for k, v in self.columns.items() if v == "categorical"]

    @property
    def d_out(self) -> int:
        return self.n_classes if self.task == "multiclass" else 1


class CategoryEncoder:
    """Dictionary encoding in first-appearance order.

    With ``allow_unknown`` unseen values map to the reserved index
    ``len(categories)``; otherwise they raise.
    """

    def __init__(self, allow_unknown: bool = False):
        self.allow_unknown = allow_unknown
        self.categories: list[str] = []
        self._index: dict[str, int] = {}

    def fit(self, values) -> CategoryEncoder:
        self._index = {}
        for v in values:
            if v not in self._index:
                self._index[v] = len(self._index)
        self.categories = list(self._index)
        return self

    @property
    def cardinality(self) -> int:
        return len(self.categories) + int(self.allow_unknown)

    def transform(self, values) -> np.ndarray:
        out = np.empty(len(values), dtype=np.int64)
        for i, v in enumerate(values):
            idx = self._index.get(v)
            if idx is None:
                if not self.allow_unknown:
                    raise DataError(f"unknown category {v!r} at position {i}")
                idx = len(self.categories)
            out[i] = idx
        return out

    def decode(self, indices) -> list[str]:
        return [self.categories[i] if i < len(self.categories) else "<unknown>" for i in indices]


@dataclass
class Table:
    """An unsplit, parsed CSV file."""

    schema: DatasetSchema
    x_num: np.ndarray
    cat_values: np.ndarray  # raw strings, (n, k_cat)
    y: np.ndarray
    encoders: list[CategoryEncoder] = field(default_factory=list)

    @property
    def x_cat(self) -> np.ndarray:
        cols = [enc.transform(self.cat_values[:, j]) for j, enc in enumerate(self.encoders)]
        return np.stack(cols, axis=1) if cols else np.zeros((len(self.y), 0), dtype=np.int64)

    @property
    def cardinalities(self) -> list[int]:
        return [enc.cardinality for enc in self.encoders]

    def __len__(self) -> int:
        return len(self.y)


def load_csv(path, schema: DatasetSchema) -> Table:
    """Parse a headered UTF-8 CSV according to ``schema``.

    Categorical columns are dictionary-encoded in first-appearance order over
    the whole file; :meth:`TabularDataset.from_table` re-fits the encoding on
    the training rows.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if header != list(schema.columns):
            raise DataError(f"{path}: header {header} does not match schema columns {list(schema.columns)}")
        rows = list(reader)

    num_idx = [header.index(c) for c in schema.numerical]
    cat_idx = [header.index(c) for c in schema.categorical]
    tgt_idx = header.index(schema.target)
    n = len(rows)
    x_num = np.empty((n, len(num_idx)))
    cat_values = np.empty((n, len(cat_idx)), dtype=object)
    raw_y = []
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r + 2} has {len(row)} cells, expected {len(header)}")
        for j, c in enumerate(num_idx):
            try:
                x_num[r, j] = float(row[c])
            except ValueError:
                raise DataError(
                    f"{path}: row {r + 2}, column {header[c]!r}: cannot parse {row[c]!r} as a number"
                ) from None
        for j, c in enumerate(cat_idx):
            cat_values[r, j] = row[c]
        raw_y.append(row[tgt_idx])

    if schema.task == "regression":
        try:
            y = np.array([float(v) for v in raw_y])
        except ValueError as exc:
            raise DataError(f"{path}: non-numeric regression target ({exc})") from None
    else:
        labels = sorted(set(raw_y), key=_label_key)
        if len(labels) > schema.n_classes:
            raise DataError(f"{path}: found {len(labels)} classes, schema declares {schema.n_classes}")
        lookup = {v: i for i, v in enumerate(labels)}
        y = np.array([lookup[v] for v in raw_y], dtype=np.int64)

    encoders = [
        CategoryEncoder(schema.allow_unknown_categories).fit(cat_values[:, j])
        for j in range(len(cat_idx))
    ]
    return Table(schema, x_num, cat_values, y, encoders)


def _label_key(v: str):
    try:
        return (0, float(v), v)
    except ValueError:
        return (1, 0.0, v)


def split_dataset(n_rows: int, ratios=(0.8, 0.1, 0.1), seed: int = 0):
    """Seeded shuffled partition of ``range(n_rows)`` into train/val/test index arrays."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"ratios must be three positive numbers summing to 1, got {ratios}")
    n_val = int(round(n_rows * ratios[1]))
    n_test = int(round(n_rows * ratios[2]))
    n_train = n_rows - n_val - n_test
    sizes = dict(train=n_train, val=n_val, test=n_test)
    empty = [k for k, v in sizes.items() if v <= 0]
    if empty:
        raise DataError(f"split of {n_rows} rows with ratios {ratios} leaves {empty} empty")
    perm = np.random.default_rng(seed).permutation(n_rows)
    return perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]


class TabularDataset:
    """Train/val/test arrays for one task.

    Reads of the test split through :meth:`get` are counted in
    ``test_reads`` so callers can audit that the test data was touched only
    for final evaluation.
    """

    def __init__(self, task: str, x_num: dict, x_cat: dict, y: dict,
                 cardinalities: list[int] | None = None, n_classes: int | None = None,
                 feature_names: list[str] | None = None):
        if task not in TASKS:
            raise DataError(f"unknown task {task!r}")
        self.task = task
        self.n_classes = 2 if task == "binclass" else n_classes
        self._x_num = {k: (None if x_num.get(k) is None else np.asarray(x_num[k], dtype=np.float64))
                       for k in SPLITS}
        self._x_cat = {k: (None if x_cat.get(k) is None or np.asarray(x_cat[k]).size == 0
                           else np.asarray(x_cat[k], dtype=np.int64)) for k in SPLITS}
        self._y = {k: np.asarray(y[k]) for k in SPLITS}
        self.cardinalities = list(cardinalities or [])
        self.test_reads = 0
        for k in SPLITS:
            xc = self._x_cat[k]
            if xc is not None:
                card = np.asarray(self.cardinalities)
                if xc.shape[1] != len(card) or (xc < 0).any() or (xc >= card).any():
                    raise DataError(f"{k}: categorical indices outside [0, S_j)")
        self.feature_names = feature_names or (
            [f"num_{j}" for j in range(self.n_num)] + [f"cat_{j}" for j in range(self.n_cat)]
        )

    @classmethod
    def from_table(cls, table: Table, splits) -> TabularDataset:
        """Split ``table`` by index arrays, fitting category encodings on train rows only."""
        train, val, test = (np.asarray(s) for s in splits)
        allidx = np.concatenate([train, val, test])
        if len(np.unique(allidx)) != len(allidx) or len(allidx) != len(table):
            raise DataError("splits must be disjoint and cover every row")
        schema = table.schema
        encoders = [
            CategoryEncoder(schema.allow_unknown_categories).fit(table.cat_values[train, j])
            for j in range(table.cat_values.shape[1])
        ]
        parts = dict(train=train, val=val, test=test)

        def enc(rows):
            cols = [e.transform(table.cat_values[rows, j]) for j, e in enumerate(encoders)]
            return np.stack(cols, axis=1) if cols else None

        ds = cls(
            schema.task,
            {k: table.x_num[v] if table.x_num.shape[1] else None for k, v in parts.items()},
            {k: enc(v) for k, v in parts.items()},
            {k: table.y[v] for k, v in parts.items()},
            cardinalities=[e.cardinality for e in encoders],
            n_classes=schema.n_classes,
            feature_names=schema.numerical + schema.categorical,
        )
        ds.encoders = encoders
        return ds

    @property
    def n_num(self) -> int:
        x = self._x_num["train"]
        return 0 if x is None else x.shape[1]

    @property
    def n_cat(self) -> int:
        return len(self.cardinalities)

    @property
    def n_features(self) -> int:
        return self.n_num + self.n_cat

    @property
    def d_out(self) -> int:
        return self.n_classes if self.task == "multiclass" else 1

    def size(self, split: str) -> int:
        return len(self._y[split])

    def get(self, split: str):
        """``(x_num, x_cat, y)`` of one split."""
        if split not in SPLITS:
            raise KeyError(split)
        if split == "test":
            self.test_reads += 1
        return self._x_num[split], self._x_cat[split], self._y[split]

    def replace(self, x_num=None, y=None) -> TabularDataset:
        """Copy with numerical features and/or targets swapped out per split."""
        ds = TabularDataset(
            self.task,
            x_num if x_num is not None else self._x_num,
            self._x_cat,
            y if y is not None else self._y,
            self.cardinalities,
            self.n_classes,
            list(self.feature_names),
        )
        if hasattr(self, "encoders"):
            ds.encoders = self.encoders
        return ds

    # -- binary cache --------------------------------------------------------

    def save(self, path) -> None:
        arrays = {}
        for k in SPLITS:
            if self._x_num[k] is not None:
                arrays[f"x_num_{k}"] = self._x_num[k]
            if self._x_cat[k] is not None:
                arrays[f"x_cat_{k}"] = self._x_cat[k]
            arrays[f"y_{k}"] = self._y[k]
        meta = dict(task=self.task, n_classes=self.n_classes, cardinalities=self.cardinalities,
                    feature_names=self.feature_names)
        arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path) -> TabularDataset:
        with np.load(path) as z:
            meta = json.loads(z["meta"].tobytes().decode())
            get = lambda key: z[key] if key in z.files else None  # noqa: E731
            return cls(
                meta["task"],
                {k: get(f"x_num_{k}") for k in SPLITS},
                {k: get(f"x_cat_{k}") for k in SPLITS},
                {k: z[f"y_{k}"] for k in SPLITS},
                meta["cardinalities"],
                meta["n_classes"],
                meta["feature_names"],
            )


# -- metrics -------------------------------------------------------------------


def rmse(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    return float(np.sqrt(np.mean((pred - target) ** 2)))


def accuracy(pred_labels, target) -> float:
    pred_labels = np.asarray(pred_labels).reshape(-1)
    target = np.asarray(target).reshape(-1)
    return float(np.mean(pred_labels == target))


def metric_name(task: str) -> str:
    return "rmse" if task == "regression" else "accuracy"


def higher_is_better(task: str) -> bool:
    return task != "regression"
