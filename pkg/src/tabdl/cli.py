"""Batch command line: ``train``, ``synth``, ``explain`` and ``tune``.

Each run reads one flat JSON config (dotted keys such as ``model.d_token`` or
``train.lr``), applies flag overrides, validates everything before any compute
and writes its artifacts plus a ``manifest.json`` into the output directory.

Exit codes: 0 success, 2 config or user error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import __version__
from .data import DataError, DatasetSchema, TabularDataset, load_csv, metric_name, split_dataset
from .explain import (
    UnsupportedMethod,
    attention_importance,
    correlation_report,
    ig_importance,
    model_permutation_importance,
)
from .models import (
    FAMILIES,
    ConfigError,
    FTTransformer,
    build_model,
    config_to_dict,
    count_parameters,
    family_of,
    make_config,
)
from .models import checkpoint
from .preprocessing import PreprocessingError, preprocess
from .search import SPACES, random_search, split_sample
from .synth import DESK_PRESETS, SyntheticTaskSpec, make_task, summarize_sweep
from .training import TrainConfig, TrainingDiverged, evaluate, train

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
DEFAULT_ALPHAS = [0.0, 0.25, 0.5, 0.75, 1.0]
METHODS = ("am", "ig", "pt")

# Architecture presets; dataset-dependent sizes (n_num, cardinalities, d_out) are filled in later.
PRESETS = {
    "ft_transformer": {"default": {}},
    "resnet": {"default": {}},
    "mlp": {"default": {}},
}
for _family, (_model, _train) in DESK_PRESETS.items():
    PRESETS[_family]["desk"] = dict(_model)

# Keys accepted outside the ``model.`` and ``train.`` namespaces, with defaults.
KNOWN_KEYS = {
    "data.source": None,
    "data.csv": None,
    "data.columns": None,
    "data.task": "regression",
    "data.n_classes": None,
    "data.allow_unknown_categories": False,
    "data.split": [0.8, 0.1, 0.1],
    "data.seed": 0,
    "data.preprocessing": None,
    "data.data_home": None,
    "model.family": "ft_transformer",
    "model.preset": "default",
    "seeds": 1,
    "dtype": "float64",
    "threads": None,
    "synth.alphas": DEFAULT_ALPHAS,
    "synth.models": ["resnet", "ft_transformer"],
    "explain.checkpoint": None,
    "explain.methods": list(METHODS),
    "explain.split": "train",
    "explain.max_samples": 2000,
    "explain.ig_steps": 64,
    "explain.pt_repeats": 5,
    "explain.seed": 0,
    "tune.budget": 10,
    "tune.space": "A",
    "tune.seed": 0,
}
SPEC_KEYS = {f"synth.{f.name}" for f in fields(SyntheticTaskSpec)}
TRAIN_KEYS = {f"train.{f.name}" for f in fields(TrainConfig)} - {"train.seed"}


class UsageError(Exception):
    """Invalid configuration or input; maps to exit code 2."""


# -- configuration -------------------------------------------------------------


def load_config(path) -> dict:
    """Read a flat JSON config, or the ``config`` block of a manifest."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise UsageError(f"{path}: expected a JSON object")
    if "manifest_version" in raw:
        return dict(raw["config"])
    return raw


def validate(cfg: dict) -> dict:
    """Reject unknown keys and fill defaults; returns the resolved config."""
    family = cfg.get("model.family", KNOWN_KEYS["model.family"])
    if family not in FAMILIES:
        raise UsageError(f"model.family: unknown family {family!r}")
    model_keys = {f"model.{f.name}" for f in fields(FAMILIES[family][1])}
    for key in cfg:
        if key in KNOWN_KEYS or key in SPEC_KEYS or key in TRAIN_KEYS or key in model_keys:
            continue
        raise UsageError(f"unknown config key {key!r}")
    out = {k: v for k, v in KNOWN_KEYS.items()}
    out.update(cfg)
    preset = out["model.preset"]
    if preset not in PRESETS[family]:
        raise UsageError(f"model.preset: {family} has no preset {preset!r} "
                         f"(available: {', '.join(sorted(PRESETS[family]))})")
    if out["dtype"] not in ("float64", "float32"):
        raise UsageError("dtype: expected float64 or float32")
    seeds = out["seeds"]
    if isinstance(seeds, int):
        if seeds < 1:
            raise UsageError("seeds: need at least one seed")
    elif not (isinstance(seeds, list) and seeds and all(isinstance(s, int) for s in seeds)):
        raise UsageError("seeds: expected a positive integer or a list of integers")
    if out["data.source"] is None:
        out["data.source"] = "csv" if out["data.csv"] is not None else "synthetic"
    if out["data.source"] not in ("csv", "synthetic", "california_housing"):
        raise UsageError(f"data.source: unknown source {out['data.source']!r}")
    if out["data.preprocessing"] is None:
        out["data.preprocessing"] = "none" if out["data.source"] == "synthetic" else "quantile"
    try:
        train_config(out)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"train.*: {exc}") from None
    return out


def seed_list(cfg: dict) -> list[int]:
    s = cfg["seeds"]
    return list(range(s)) if isinstance(s, int) else list(s)


def train_config(cfg: dict, base: dict | None = None, seed: int = 0) -> TrainConfig:
    values = dict(base or {})
    values.update({k[6:]: v for k, v in cfg.items() if k in TRAIN_KEYS})
    return TrainConfig(**values, seed=seed)


def model_config(cfg: dict, ds: TabularDataset, family: str | None = None, preset: str | None = None,
                 overrides: dict | None = None):
    """Preset, then ``model.*`` keys, then ``overrides``; sizes come from ``ds``."""
    family = family or cfg["model.family"]
    preset = preset or cfg["model.preset"]
    values = dict(PRESETS[family][preset])
    if family == cfg["model.family"]:
        values.update({k[6:]: v for k, v in cfg.items()
                       if k.startswith("model.") and k not in ("model.family", "model.preset")})
    values.update(overrides or {})
    values.update(n_num=ds.n_num, cardinalities=ds.cardinalities, d_out=ds.d_out)
    try:
        return make_config(family, **values)
    except (ConfigError, TypeError) as exc:
        raise UsageError(f"model.*: {exc}") from None


def dtype_of(cfg: dict):
    return np.dtype(cfg["dtype"])


# -- datasets ------------------------------------------------------------------


def synthetic_spec(cfg: dict, alpha: float | None = None) -> SyntheticTaskSpec:
    values = {k[6:]: v for k, v in cfg.items() if k in SPEC_KEYS}
    if alpha is not None:
        values["alpha"] = alpha
    try:
        return SyntheticTaskSpec(**values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"synth.*: {exc}") from None


def _california(cfg: dict) -> TabularDataset:
    # network fetch on first use, then cached under data_home
    from sklearn.datasets import fetch_california_housing

    try:
        bunch = fetch_california_housing(data_home=cfg["data.data_home"])
    except OSError as exc:
        raise UsageError(f"California Housing is not available offline ({exc})") from None
    x, y = bunch.data, bunch.target
    train_idx, val_idx, test_idx = split_dataset(len(y), cfg["data.split"], cfg["data.seed"])
    parts = dict(train=train_idx, val=val_idx, test=test_idx)
    return TabularDataset("regression", {k: x[v] for k, v in parts.items()}, {},
                          {k: y[v] for k, v in parts.items()}, feature_names=list(bunch.feature_names))


def load_dataset(cfg: dict, alpha: float | None = None) -> tuple[TabularDataset, float]:
    """Dataset from the ``data.*`` keys, preprocessed with training statistics.

    Also returns the factor that converts a standardized-target RMSE back to
    target units (1.0 for classification).
    """
    source = cfg["data.source"]
    try:
        if source == "synthetic":
            ds = make_task(synthetic_spec(cfg, alpha))
        elif source == "california_housing":
            ds = _california(cfg)
        else:
            if cfg["data.csv"] is None or cfg["data.columns"] is None:
                raise UsageError("data.csv and data.columns are required for CSV data")
            schema = DatasetSchema(cfg["data.columns"], task=cfg["data.task"],
                                   n_classes=cfg["data.n_classes"],
                                   allow_unknown_categories=cfg["data.allow_unknown_categories"])
            table = load_csv(cfg["data.csv"], schema)
            ds = TabularDataset.from_table(table, split_dataset(len(table), cfg["data.split"], cfg["data.seed"]))
        ds, prep = preprocess(ds, cfg["data.preprocessing"], seed=cfg["data.seed"])
    except FileNotFoundError as exc:
        raise UsageError(f"data.csv: {exc}") from None
    except (DataError, PreprocessingError) as exc:
        raise UsageError(f"data: {exc}") from None
    return ds, (float(prep.target.std) if prep.target is not None else 1.0)


# -- output --------------------------------------------------------------------


class RunWriter:
    """Single owner of every file in one run directory."""

    def __init__(self, out: Path):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.artifacts: list[str] = []

    def path(self, name: str) -> Path:
        return self.out / name

    def _atomic(self, name: str, text: str) -> Path:
        path = self.path(name)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)
        if name not in self.artifacts:
            self.artifacts.append(name)
        return path

    def jsonl(self, name: str, records) -> Path:
        return self._atomic(name, "".join(json.dumps(r) + "\n" for r in records))

    def csv(self, name: str, rows: list[dict], columns: list[str]) -> Path:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
        return self._atomic(name, buf.getvalue())

    def json(self, name: str, obj) -> Path:
        return self._atomic(name, json.dumps(obj, indent=2) + "\n")

    def checkpoint(self, blob: bytes, prefix: str) -> str:
        directory = self.out / "checkpoints"
        directory.mkdir(exist_ok=True)
        rel = str(checkpoint.write_content_addressed(blob, directory, prefix).relative_to(self.out))
        self.artifacts.append(rel)
        return rel

    def manifest(self, command: str, cfg: dict, timings: dict, results: dict) -> Path:
        return self.json("manifest.json", {
            "manifest_version": 1,
            "command": command,
            "config": cfg,
            "version": __version__,
            "timings": timings,
            "artifacts": sorted(set(self.artifacts) | {"manifest.json"}),
            "results": results,
        })


def _workers(cfg: dict, flag: int | None) -> int:
    n = flag or cfg.get("threads") or os.environ.get("TABDL_THREADS") or 1
    try:
        n = int(n)
    except ValueError:
        raise UsageError(f"threads: expected an integer, got {n!r}") from None
    if n < 1:
        raise UsageError("threads: must be >= 1")
    return n


def _map(fn, jobs: list, workers: int) -> list:
    """Order-preserving map, fanned out to a bounded process pool when workers > 1."""
    if workers == 1 or len(jobs) < 2:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


# -- train ---------------------------------------------------------------------


def _train_job(job: tuple) -> dict:
    mcfg, ds, tcfg, dtype, meta = job
    model = build_model(mcfg, seed=tcfg.seed, dtype=dtype)
    start, reads = time.perf_counter(), ds.test_reads
    try:
        report = train(model, ds, tcfg)
    except TrainingDiverged as exc:
        return {"diverged": str(exc), "last_good_epoch": exc.last_good_epoch, "seed": tcfg.seed}
    return {
        "report": report,
        "blob": checkpoint.to_bytes(model, {**meta, "seed": tcfg.seed}),
        "seconds": time.perf_counter() - start,
        "test_reads": ds.test_reads - reads,
    }


def cmd_train(cfg: dict, writer: RunWriter, workers: int) -> int:
    t0 = time.perf_counter()
    ds, unit = load_dataset(cfg)
    mcfg = model_config(cfg, ds)
    family = family_of(mcfg)
    n_params = count_parameters(mcfg)
    print(f"{family}: {n_params} parameters", flush=True)
    seeds = seed_list(cfg)
    meta = {"run_config": cfg}
    jobs = [(mcfg, ds, train_config(cfg, seed=s), dtype_of(cfg), meta) for s in seeds]
    results = _map(_train_job, jobs, workers)
    failed = [r for r in results if "diverged" in r]
    if failed:
        for r in failed:
            print(f"seed {r['seed']}: {r['diverged']} (last good epoch {r['last_good_epoch']})",
                  file=sys.stderr)
        return EXIT_NUMERIC
    epochs, rows = [], []
    for seed, r in zip(seeds, results):
        rep = r["report"]
        epochs += [{"seed": seed, **asdict(e)} for e in rep.epochs]
        ckpt = writer.checkpoint(r["blob"], f"{family}-seed{seed}")
        rows.append({"seed": seed, "best_epoch": rep.best_epoch, "best_val": rep.best_val,
                     "test_metric": rep.test_metric,
                     "test_metric_target_units": rep.test_metric * unit, "n_parameters": rep.n_parameters, "checkpoint": ckpt})
    writer.jsonl("metrics.jsonl", epochs)
    writer.csv("summary.csv", rows, list(rows[0]))
    values = np.array([r["test_metric"] for r in rows])
    summary = {"metric": metric_name(ds.task), "n": len(values), "mean": float(values.mean()),
               "std": float(values.std()), "per_seed": [float(v) for v in values],
               "mean_target_units": float(values.mean() * unit),
               "n_parameters": n_params, "test_reads": sum(r["test_reads"] for r in results)}
    print(f"test {summary['metric']}: {summary['mean']:.4f} ± {summary['std']:.4f} over {len(values)} seed(s)")
    if ds.task == "regression":
        print(f"test rmse in target units: {summary['mean_target_units']:.4f}")
    writer.manifest("train", cfg, {"total_seconds": time.perf_counter() - t0,
                                   "per_seed_seconds": [r["seconds"] for r in results]}, summary)
    return EXIT_OK


# -- synth ---------------------------------------------------------------------


def _synth_job(job: tuple) -> dict:
    cfg, alpha, name, seed = job
    ds, _ = load_dataset(cfg, alpha)  # synthetic targets are already standardized
    mcfg = model_config(cfg, ds, family=name, preset="desk")
    tcfg = train_config(cfg, base=DESK_PRESETS[name][1], seed=seed)
    model = build_model(mcfg, seed=seed, dtype=dtype_of(cfg))
    start = time.perf_counter()
    report = train(model, ds, tcfg)
    return {"alpha": alpha, "model": name, "seed": seed, "report": report,
            "seconds": time.perf_counter() - start}


def cmd_synth(cfg: dict, writer: RunWriter, workers: int) -> int:
    t0 = time.perf_counter()
    cfg = {**cfg, "data.source": "synthetic"}
    alphas = [float(a) for a in cfg["synth.alphas"]]
    names = list(cfg["synth.models"])
    for name in names:
        if name not in DESK_PRESETS:
            raise UsageError(f"synth.models: no desk preset for {name!r}")
    for a in alphas:
        synthetic_spec(cfg, a)
    jobs = [(cfg, a, name, s) for a in alphas for name in names for s in seed_list(cfg)]
    try:
        results = _map(_synth_job, jobs, workers)
    except TrainingDiverged as exc:
        print(f"synthetic sweep diverged: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    rows = [{"alpha": r["alpha"], "model": r["model"], "seed": r["seed"],
             "test_rmse": r["report"].test_metric} for r in results]
    epochs = [{"alpha": r["alpha"], "model": r["model"], "seed": r["seed"], **asdict(e)}
              for r in results for e in r["report"].epochs]
    summary = summarize_sweep(rows)
    writer.jsonl("metrics.jsonl", epochs)
    writer.csv("sweep.csv", rows, ["alpha", "model", "seed", "test_rmse"])
    writer.csv("summary.csv", summary, ["alpha", "model", "n", "mean_rmse", "std_rmse"])
    for r in summary:
        print(f"alpha={r['alpha']:.2f} {r['model']:>15}: {r['mean_rmse']:.4f} ± {r['std_rmse']:.4f}")
    writer.manifest("synth", cfg, {"total_seconds": time.perf_counter() - t0,
                                   "per_run_seconds": [r["seconds"] for r in results]},
                    {"summary": summary})
    return EXIT_OK


# -- explain -------------------------------------------------------------------


def _checkpoint_data_config(path) -> dict:
    """Dataset keys recorded by the run that produced ``path``."""
    if path is None:
        raise UsageError("explain.checkpoint is required")
    try:
        meta, _ = checkpoint.read(path)
    except FileNotFoundError:
        raise UsageError(f"explain.checkpoint: no such file {path}") from None
    except ValueError as exc:
        raise UsageError(f"explain.checkpoint: {exc}") from None
    stored = meta.get("meta", {}).get("run_config", {})
    return {k: v for k, v in stored.items() if k.startswith(("data.", "synth.", "dtype"))}


def cmd_explain(cfg: dict, writer: RunWriter, workers: int) -> int:
    t0 = time.perf_counter()
    path = cfg["explain.checkpoint"]
    if path is None:
        raise UsageError("explain.checkpoint is required")
    methods = list(cfg["explain.methods"])
    unknown = sorted(set(methods) - set(METHODS))
    if unknown or not methods:
        raise UsageError(f"explain.methods: unknown or empty method list {unknown or methods}")
    try:
        model, meta = checkpoint.load(path)
    except FileNotFoundError:
        raise UsageError(f"explain.checkpoint: no such file {path}") from None
    except ValueError as exc:
        raise UsageError(f"explain.checkpoint: {exc}") from None
    if "am" in methods and not isinstance(model, FTTransformer):
        raise UsageError(f"method 'am' needs an FT-Transformer checkpoint, got {family_of(model.config)}")
    ds, _ = load_dataset(cfg)
    split = cfg["explain.split"]
    if split == "test":
        raise UsageError("explain.split: attributions are computed on train or val, never test")
    x_num, x_cat, y = ds.get(split)
    n = len(y)
    rng = np.random.default_rng(cfg["explain.seed"])
    if n > cfg["explain.max_samples"]:
        idx = np.sort(rng.choice(n, cfg["explain.max_samples"], replace=False))
        x_num = None if x_num is None else x_num[idx]
        x_cat = None if x_cat is None else x_cat[idx]
        y = y[idx]
    if x_num is not None:
        x_num = x_num.astype(model.dtype)
    names = ds.feature_names
    vectors = {}
    try:
        if "am" in methods:
            vectors["am"] = attention_importance(model, x_num, x_cat)
        if "ig" in methods:
            if x_num is None:
                raise UsageError("method 'ig' needs numerical features")
            vectors["ig"] = ig_importance(model, x_num, steps=cfg["explain.ig_steps"], x_cat=x_cat)
        if "pt" in methods:
            vectors["pt"] = model_permutation_importance(model, ds.task, x_num, x_cat, y,
                                                         repeats=cfg["explain.pt_repeats"],
                                                         seed=cfg["explain.seed"])
    except UnsupportedMethod as exc:
        raise UsageError(str(exc)) from None
    for m, vec in vectors.items():
        vec.feature_names = names[:len(vec.scores)]
        writer.csv(f"importances_{m}.csv", vec.rows(), ["feature", "score", "rank"])
    pairs = []
    ordered = [m for m in METHODS if m in vectors]
    for i, a in enumerate(ordered):
        for b in ordered[i + 1:]:
            va, vb = vectors[a], vectors[b]
            k = min(len(va.scores), len(vb.scores))  # IG covers numerical features only
            va_k = type(va)(va.scores[:k], va.method)
            vb_k = type(vb)(vb.scores[:k], vb.method)
            rep = correlation_report(va_k, vb_k, seed=cfg["explain.seed"])
            pairs.append({"methods": list(rep.methods), "rho": rep.rho, "n": rep.n, "seed": rep.seed})
    writer.json("correlations.json", {"split": split, "n_samples": int(len(y)), "pairs": pairs})
    for p in pairs:
        print(f"spearman({p['methods'][0]}, {p['methods'][1]}) = {p['rho']:.3f}")
    writer.manifest("explain", cfg, {"total_seconds": time.perf_counter() - t0},
                    {"pairs": pairs, "evaluations": {m: v.n_evaluations for m, v in vectors.items()},
                     "test_reads": ds.test_reads})
    return EXIT_OK


# -- tune ----------------------------------------------------------------------


def cmd_tune(cfg: dict, writer: RunWriter, workers: int) -> int:
    t0 = time.perf_counter()
    budget = cfg["tune.budget"]
    if not isinstance(budget, int) or budget < 1:
        raise UsageError(f"tune.budget: need a positive integer, got {budget!r}")
    family = cfg["model.family"]
    key = (family, cfg["tune.space"])
    if key not in SPACES:
        raise UsageError(f"tune.space: expected 'A' or 'B', got {cfg['tune.space']!r}")
    space = SPACES[key]
    ds, _ = load_dataset(cfg)
    higher = ds.task != "regression"
    records = []

    def objective(params: dict) -> float:
        model_kw, train_kw = split_sample(family, params)
        mcfg = model_config(cfg, ds, overrides=model_kw)
        tcfg = train_config(cfg, base=train_kw, seed=cfg["tune.seed"])
        model = build_model(mcfg, seed=cfg["tune.seed"], dtype=dtype_of(cfg))
        try:
            report = train(model, ds, tcfg, evaluate_test=False)
        except TrainingDiverged:
            return -np.inf if higher else np.inf
        return report.best_val

    def log(trial):
        records.append({"index": trial.index, "params": trial.params, "score": trial.score})
        print(f"trial {trial.index}: val {trial.score:.4f}", flush=True)

    result = random_search(space, budget, objective, np.random.default_rng(cfg["tune.seed"]),
                           higher_is_better=higher, on_trial=log)
    writer.jsonl("trials.jsonl", records)
    model_kw, train_kw = split_sample(family, result.best.params)
    best = {"index": result.best.index, "score": result.best.score, "params": result.best.params,
            "model": config_to_dict(model_config(cfg, ds, overrides=model_kw)), "train": train_kw}
    writer.json("best.json", best)
    writer.manifest("tune", cfg, {"total_seconds": time.perf_counter() - t0},
                    {"best": best, "n_trials": len(records), "test_reads": ds.test_reads})
    return EXIT_OK


# -- entry point ---------------------------------------------------------------

COMMANDS = {"train": cmd_train, "synth": cmd_synth, "explain": cmd_explain, "tune": cmd_tune}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tabdl", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"tabdl {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="flat JSON config or a manifest.json to replay")
        s.add_argument("--model", help="model family (model.family)")
        s.add_argument("--preset", help="architecture preset (model.preset)")
        s.add_argument("--seeds", type=int, help="number of seeds 0..N-1")
        s.add_argument("--alphas", help="comma-separated alpha grid (synth)")
        s.add_argument("--budget", type=int, help="number of search trials (tune)")
        s.add_argument("--checkpoint", help="checkpoint to explain (explain)")
        s.add_argument("--methods", help="comma-separated subset of am,ig,pt (explain)")
        s.add_argument("--out", default="runs/latest", help="output directory")
        s.add_argument("--threads", type=int, help="worker processes (default: $TABDL_THREADS or 1)")
        s.add_argument("--set", action="append", default=[], metavar="KEY=JSON",
                       help="override one config key, e.g. --set train.lr=3e-4")
    return p


def _overrides(args) -> dict:
    out = {}
    pairs = {"model.family": args.model, "model.preset": args.preset, "seeds": args.seeds,
             "tune.budget": args.budget, "explain.checkpoint": args.checkpoint}
    out.update({k: v for k, v in pairs.items() if v is not None})
    if args.alphas is not None:
        try:
            out["synth.alphas"] = [float(a) for a in args.alphas.split(",") if a.strip()]
        except ValueError:
            raise UsageError(f"--alphas: not a comma-separated list of numbers: {args.alphas!r}") from None
    if args.methods is not None:
        out["explain.methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = load_config(args.config) if args.config else {}
        flags = _overrides(args)
        merged = {**raw, **flags}
        if args.command == "explain":
            merged = {**_checkpoint_data_config(merged.get("explain.checkpoint")), **merged}
        cfg = validate(merged)
        writer = RunWriter(Path(args.out))
        code = COMMANDS[args.command](cfg, writer, _workers(cfg, args.threads))
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return code


if __name__ == "__main__":
    sys.exit(main())
