"""End-to-end CLI behavior: subcommands, artifacts, exit codes, reruns."""

import json
import subprocess

import pytest

from geograph.cli import main
from geograph.sweep import CSV_HEADER


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    """Small synthetic corpus written through the synth subcommand."""
    out = tmp_path_factory.mktemp("corpus")
    code = main([
        "synth", "--out", str(out), "--n-users", "120", "--regions", "2",
        "--vocab-size", "40", "--p-in", "0.08", "--p-out", "0.005", "--seed", "0",
    ])
    assert code == 0
    return out / "users.jsonl", out / "edges.tsv"


def _train_args(corpus, out_dir, **overrides):
    users, edges = corpus
    opts = {
        "--users": str(users), "--edges": str(edges), "--model": "gcn",
        "--hidden": "8", "--layers": "1", "--epochs": "3", "--lr": "0.02",
        "--dropout": "0.0", "--bucket": "15", "--seed": "0", "--out": str(out_dir),
    }
    opts.update(overrides)
    args = ["train"]
    for key, value in opts.items():
        args.extend([key, value] if value is not None else [key])
    return args


def test_train_writes_artifacts(corpus, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(_train_args(corpus, out)) == 0
    for name in ("model.ckpt", "predictions.csv", "report.json",
                 "per_class_dev.csv", "per_class_test.csv"):
        assert (out / name).exists(), name
    report = json.loads((out / "report.json").read_text())
    assert report["model"] == "gcn"
    assert report["config"]["tree_from"] == "labeled"
    assert set(report["metrics"]) == {"dev", "test"}
    assert report["metrics"]["test"]["acc161"] >= 0.0
    assert report["seconds"] > 0.0
    lines = (out / "predictions.csv").read_text().splitlines()
    assert lines[0] == "id,split,class_id,pred_lat,pred_lon"
    assert len(lines) == 121
    printed = capsys.readouterr().out
    assert "dev: acc@161" in printed and "test: acc@161" in printed


def test_train_then_eval_round_trip(corpus, tmp_path, capsys):
    users, edges = corpus
    out = tmp_path / "run"
    assert main(_train_args(corpus, out)) == 0
    train_report = json.loads((out / "report.json").read_text())
    capsys.readouterr()
    code = main(["eval", "--model", str(out / "model.ckpt"),
                 "--users", str(users), "--edges", str(edges)])
    assert code == 0
    scored = json.loads(capsys.readouterr().out)
    assert set(scored) == {"train", "dev", "test"}
    for split in ("dev", "test"):
        assert scored[split]["acc161"] == pytest.approx(
            train_report["metrics"][split]["acc161"]
        )
        assert scored[split]["median_km"] == pytest.approx(
            train_report["metrics"][split]["median_km"]
        )


def test_train_rerun_is_deterministic(corpus, tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(_train_args(corpus, out_a)) == 0
    assert main(_train_args(corpus, out_b)) == 0
    assert (out_a / "model.ckpt").read_bytes() == (out_b / "model.ckpt").read_bytes()
    assert (out_a / "predictions.csv").read_bytes() == (out_b / "predictions.csv").read_bytes()


@pytest.mark.parametrize("model", ["gcn-lp", "mlp", "dcca"])
def test_train_other_models(corpus, tmp_path, model):
    out = tmp_path / model
    assert main(_train_args(corpus, out, **{"--model": model})) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["model"] == model


def test_train_fraction_and_tree_flags(corpus, tmp_path):
    out = tmp_path / "frac"
    args = _train_args(corpus, out, **{"--labeled-fraction": "0.3",
                                       "--tree-from": "all-train"})
    assert main(args) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["tree_from"] == "all-train"
    assert report["config"]["bucket"] == 15  # never scaled in all-train mode
    assert report["labeled_users"] < 120


def test_sweep_subcommand(corpus, tmp_path, capsys):
    users, edges = corpus
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({
        "models": ["gcn", "mlp"],
        "seeds": [0],
        "hidden": 8,
        "epochs": 3,
        "lr": 0.02,
        "dropout": 0.0,
        "bucket": 15,
        "dataset": {"users": str(users), "edges": str(edges)},
    }))
    out = tmp_path / "sweep_out"
    assert main(["sweep", "--spec", str(spec), "--out", str(out)]) == 0
    lines = (out / "report.csv").read_text().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 3
    payload = json.loads((out / "report.json").read_text())
    assert {c["model"] for c in payload["cells"]} == {"gcn", "mlp"}
    assert "cells (0 failed)" in capsys.readouterr().out


def test_sweep_with_synthetic_dataset(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({
        "models": ["gcn"],
        "seeds": [0],
        "hidden": 8,
        "epochs": 2,
        "dropout": 0.0,
        "bucket": 15,
        "dataset": {"synthetic": {"n_users": 60, "n_regions": 2, "vocab_size": 30,
                                  "p_in": 0.1, "p_out": 0.01, "seed": 1}},
        "out": str(tmp_path / "from_spec"),
    }))
    assert main(["sweep", "--spec", str(spec)]) == 0
    assert (tmp_path / "from_spec" / "report.csv").exists()


def test_exit_code_user_error(tmp_path, capsys):
    users = tmp_path / "users.jsonl"
    edges = tmp_path / "edges.tsv"
    users.write_text('{"id": "a", "lat": 1.0}\n')  # missing fields
    edges.write_text("")
    assert main(["train", "--users", str(users), "--edges", str(edges),
                 "--out", str(tmp_path / "o")]) == 1
    assert "error" in capsys.readouterr().err.lower()


def test_exit_code_bad_flag(capsys):
    assert main(["train", "--users", "/nonexistent", "--edges", "/nonexistent",
                 "--out", "/tmp/x"]) == 1
    assert main(["no-such-command"]) == 1
    capsys.readouterr()


def test_exit_code_runtime_failure(tmp_path, capsys):
    # users with no mention edges at lambda 0: zero-degree rows are a runtime error
    users = tmp_path / "users.jsonl"
    edges = tmp_path / "edges.tsv"
    rows = [json.dumps({"id": f"u{i}", "lat": 1.0 * i, "lon": 2.0, "text": "hi there",
                        "split": "train" if i < 3 else "test"}) for i in range(5)]
    users.write_text("\n".join(rows) + "\n")
    edges.write_text("")
    code = main(["train", "--users", str(users), "--edges", str(edges),
                 "--lambda", "0.0", "--out", str(tmp_path / "o")])
    assert code == 2
    assert "runtime failure" in capsys.readouterr().err


def test_console_script_entry_point():
    proc = subprocess.run(["geograph", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for name in ("train", "sweep", "synth", "eval"):
        assert name in proc.stdout
