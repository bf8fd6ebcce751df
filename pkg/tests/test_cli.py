import csv
import json

import numpy as np
import pytest

from tabdl import __version__, cli
from tabdl.models import checkpoint

COLUMNS = {"x1": "numerical", "x2": "numerical", "x3": "numerical", "color": "categorical", "y": "target"}
TINY_FT = {"model.n_layers": 1, "model.d_token": 8, "model.n_heads": 2}
FAST = {"train.lr": 1e-3, "train.max_epochs": 2, "train.batch_size": 64}


@pytest.fixture(scope="module")
def toy_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "toy.csv"
    rng = np.random.default_rng(0)
    x = rng.standard_normal((200, 3))
    color = rng.choice(["red", "green", "blue"], 200)
    y = x[:, 0] - x[:, 1] ** 2 + (color == "red")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x1,x2,x3,color,y\n")
        for row, c, t in zip(x, color, y):
            fh.write(f"{row[0]},{row[1]},{row[2]},{c},{t}\n")
    return path


@pytest.fixture
def config(tmp_path, toy_csv):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"data.csv": str(toy_csv), "data.columns": COLUMNS, **TINY_FT, **FAST}))
    return path


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def trained(tmp_path_factory, toy_csv):
    d = tmp_path_factory.mktemp("train")
    cfg = d / "cfg.json"
    cfg.write_text(json.dumps({"data.csv": str(toy_csv), "data.columns": COLUMNS, **TINY_FT, **FAST}))
    out = d / "run"
    assert run("train", "--config", cfg, "--seeds", 2, "--out", out) == 0
    return out


class TestTrain:
    def test_artifacts(self, trained):
        manifest = json.loads((trained / "manifest.json").read_text())
        assert manifest["command"] == "train" and manifest["version"] == __version__
        for name in manifest["artifacts"]:
            assert (trained / name).exists()
        assert len(list((trained / "checkpoints").glob("ft_transformer-seed*-*.ckpt"))) == 2

    def test_metrics_log_one_record_per_epoch(self, trained):
        records = [json.loads(line) for line in (trained / "metrics.jsonl").read_text().splitlines()]
        assert sorted({r["seed"] for r in records}) == [0, 1]
        assert [r["epoch"] for r in records if r["seed"] == 0] == [1, 2]
        assert {"train_loss", "val_metric", "timestamp"} <= set(records[0])

    def test_summary_agrees_with_manifest(self, trained):
        rows = read_csv(trained / "summary.csv")
        results = json.loads((trained / "manifest.json").read_text())["results"]
        values = [float(r["test_metric"]) for r in rows]
        assert results["mean"] == pytest.approx(np.mean(values), abs=1e-12)
        assert results["std"] == pytest.approx(np.std(values), abs=1e-12)
        assert results["test_reads"] == 2  # one final read per seed

    def test_checkpoint_reproduces_test_metric(self, trained):
        from tabdl.training import evaluate

        row = read_csv(trained / "summary.csv")[0]
        model, meta = checkpoint.load(trained / row["checkpoint"])
        cfg = cli.validate({k: v for k, v in meta["run_config"].items()})
        ds, _ = cli.load_dataset(cfg)
        assert evaluate(model, ds, "test") == pytest.approx(float(row["test_metric"]), abs=1e-12)

    def test_manifest_replay_is_bit_identical(self, trained, tmp_path):
        assert run("train", "--config", trained / "manifest.json", "--out", tmp_path) == 0
        first, again = read_csv(trained / "summary.csv"), read_csv(tmp_path / "summary.csv")
        assert [r["test_metric"] for r in first] == [r["test_metric"] for r in again]
        assert [r["checkpoint"] for r in first] == [r["checkpoint"] for r in again]

    def test_prints_parameter_count(self, config, tmp_path, capsys):
        assert run("train", "--config", config, "--out", tmp_path) == 0
        assert "parameters" in capsys.readouterr().out

    def test_threads_do_not_change_results(self, config, tmp_path):
        assert run("train", "--config", config, "--seeds", 2, "--threads", 2, "--out", tmp_path / "a") == 0
        assert run("train", "--config", config, "--seeds", 2, "--out", tmp_path / "b") == 0
        a, b = read_csv(tmp_path / "a" / "summary.csv"), read_csv(tmp_path / "b" / "summary.csv")
        assert [r["test_metric"] for r in a] == [r["test_metric"] for r in b]

    @pytest.mark.parametrize("family", ["resnet", "mlp"])
    def test_other_families(self, toy_csv, tmp_path, family):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"data.csv": str(toy_csv), "data.columns": COLUMNS, **FAST}))
        assert run("train", "--config", cfg, "--model", family, "--out", tmp_path / "o") == 0


class TestUsageErrors:
    def test_unknown_key_is_named(self, tmp_path, capsys):
        assert run("train", "--set", "model.bogus=1", "--out", tmp_path) == 2
        assert "model.bogus" in capsys.readouterr().err

    def test_unknown_preset(self, tmp_path):
        assert run("train", "--preset", "huge", "--out", tmp_path) == 2

    def test_missing_config_file(self, tmp_path):
        assert run("train", "--config", tmp_path / "none.json", "--out", tmp_path) == 2

    def test_bad_csv_header(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,2\n")
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"data.csv": str(bad), "data.columns": COLUMNS}))
        assert run("train", "--config", cfg, "--out", tmp_path / "o") == 2

    def test_zero_budget(self, config, tmp_path):
        assert run("tune", "--config", config, "--budget", 0, "--out", tmp_path) == 2

    def test_zero_seeds(self, config, tmp_path):
        assert run("train", "--config", config, "--seeds", 0, "--out", tmp_path) == 2

    def test_bad_alpha(self, tmp_path):
        assert run("synth", "--alphas", "0,1.5", "--out", tmp_path) == 2

    def test_no_partial_outputs_on_error(self, tmp_path):
        run("train", "--set", "model.bogus=1", "--out", tmp_path / "o")
        assert not (tmp_path / "o").exists()


def test_divergence_exits_3(toy_csv, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"data.csv": str(toy_csv), "data.columns": COLUMNS, **TINY_FT,
                               "train.lr": 1e200, "train.max_epochs": 3, "data.preprocessing": "none"}))
    assert run("train", "--config", cfg, "--out", tmp_path / "o") == 3


class TestExplain:
    def test_all_methods(self, trained, tmp_path):
        ckpt = sorted((trained / "checkpoints").glob("*seed0*"))[0]
        assert run("explain", "--checkpoint", ckpt, "--set", "explain.ig_steps=8", "--out", tmp_path) == 0
        am = read_csv(tmp_path / "importances_am.csv")
        ig = read_csv(tmp_path / "importances_ig.csv")
        pt = read_csv(tmp_path / "importances_pt.csv")
        assert [r["feature"] for r in am] == [r["feature"] for r in pt] == ["x1", "x2", "x3", "color"]
        assert [r["feature"] for r in ig] == ["x1", "x2", "x3"]
        assert sum(float(r["score"]) for r in am) == pytest.approx(1.0, abs=1e-9)
        corr = json.loads((tmp_path / "correlations.json").read_text())
        assert {tuple(p["methods"]) for p in corr["pairs"]} == {("am", "ig"), ("am", "pt"), ("ig", "pt")}
        assert json.loads((tmp_path / "manifest.json").read_text())["results"]["test_reads"] == 0

    def test_attention_on_resnet_is_rejected(self, toy_csv, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"data.csv": str(toy_csv), "data.columns": COLUMNS, **FAST}))
        assert run("train", "--config", cfg, "--model", "resnet", "--out", tmp_path / "r") == 0
        ckpt = next((tmp_path / "r" / "checkpoints").glob("*.ckpt"))
        assert run("explain", "--checkpoint", ckpt, "--methods", "am", "--out", tmp_path / "e") == 2
        assert "ft" in capsys.readouterr().err.lower()
        assert run("explain", "--checkpoint", ckpt, "--methods", "pt", "--out", tmp_path / "p") == 0

    def test_test_split_refused(self, trained, tmp_path):
        ckpt = next((trained / "checkpoints").glob("*.ckpt"))
        assert run("explain", "--checkpoint", ckpt, "--set", "explain.split=\"test\"", "--out", tmp_path) == 2


def test_tune_never_reads_test(config, tmp_path):
    assert run("tune", "--config", config, "--budget", 2, "--out", tmp_path) == 0
    trials = [json.loads(line) for line in (tmp_path / "trials.jsonl").read_text().splitlines()]
    best = json.loads((tmp_path / "best.json").read_text())
    assert len(trials) == 2
    assert best["score"] == min(t["score"] for t in trials)
    assert json.loads((tmp_path / "manifest.json").read_text())["results"]["test_reads"] == 0


def test_synth_sweep(tmp_path):
    small = ["--set", "synth.n_train=200", "--set", "synth.n_val=50", "--set", "synth.n_test=50",
             "--set", "train.max_epochs=1"]
    assert run("synth", "--alphas", "0,1", "--seeds", 1, *small, "--out", tmp_path) == 0
    rows = read_csv(tmp_path / "sweep.csv")
    assert [(r["alpha"], r["model"]) for r in rows] == [
        ("0.0", "resnet"), ("0.0", "ft_transformer"), ("1.0", "resnet"), ("1.0", "ft_transformer")]
    assert len(read_csv(tmp_path / "summary.csv")) == 4


def test_module_entry_point():
    import subprocess
    import sys

    out = subprocess.run([sys.executable, "-m", "tabdl", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout
