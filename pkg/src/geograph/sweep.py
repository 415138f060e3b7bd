"""Supervision-fraction and depth sweeps with deterministic report emission.

A sweep trains every (model, fraction, depth, seed) cell on one dataset and
records dev and test metrics per cell plus mean/std aggregates over seeds.
Model names select architecture and gating: ``gcn``, ``gcn-nohighway``,
``gcn-lp``, ``mlp``, ``dcca``; the depth axis applies to the graph-convolution
models and collapses to a single cell for the others.

Reports are a JSON summary and a long-format CSV. The CSV is byte-stable
across identical invocations: by default its seconds column is written as
0.000 (wall-clock lives in the JSON), because real timings would make two
otherwise identical runs differ.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import DatasetBundle, subsample_labels
from .errors import ArgumentError
from .geo import EvalReport, RegionTree, evaluate
from .models import (
    DccaConfig,
    GcnConfig,
    Partition,
    TrainConfig,
    TrainedModel,
    train_dcca,
    train_gcn,
    train_gcn_lp,
    train_mlp,
    predict_classes,
)
from .sparse import SparseMatrix
from .views import ViewMatrices, build_mention_graph, build_text_view, normalize_adjacency

MODEL_NAMES = ("gcn", "gcn-nohighway", "gcn-lp", "mlp", "dcca")
DEPTH_AWARE = ("gcn", "gcn-nohighway", "gcn-lp")

CSV_HEADER = "model,fraction,depth,seed,acc161,mean_km,median_km,seconds"


@dataclass(frozen=True)
class SweepSpec:
    fractions: tuple[float, ...] = (1.0,)
    models: tuple[str, ...] = ("gcn",)
    seeds: tuple[int, ...] = (0,)
    depths: tuple[int, ...] = (1,)
    hidden: int = 100
    epochs: int = 150
    lr: float = 1e-2
    dropout: float = 0.5
    bucket: int = 50
    bucket_scale: bool = True
    tree_from: str = "labeled"  # or "all-train": reuse the full train split
    lam: float = 1.0
    min_df: int = 2
    max_df_ratio: float = 0.5
    max_comention_degree: int = 1000
    dcca: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "fractions", tuple(float(f) for f in self.fractions))
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "depths", tuple(int(d) for d in self.depths))
        if not self.seeds:
            raise ArgumentError("need at least one seed")
        if any(not 0.0 < f <= 1.0 for f in self.fractions):
            raise ArgumentError("fractions must lie in (0, 1]")
        unknown = sorted(set(self.models) - set(MODEL_NAMES))
        if unknown:
            raise ArgumentError(f"unknown models {unknown}; valid: {list(MODEL_NAMES)}")
        if any(d < 1 for d in self.depths):
            raise ArgumentError("depths must be >= 1")
        if self.tree_from not in ("labeled", "all-train"):
            raise ArgumentError("tree_from must be 'labeled' or 'all-train'")

def load_sweep_file(path) -> tuple[SweepSpec, dict | None, str | None]:
    """Parse a sweep file: SweepSpec fields plus optional ``dataset`` source
    ({"users": ..., "edges": ...} or {"synthetic": {...generator config...}})
    and optional ``out`` directory."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ArgumentError(f"{path}: sweep spec must be a JSON object")
    dataset = raw.pop("dataset", None)
    out = raw.pop("out", None)
    unknown = sorted(set(raw) - set(SweepSpec.__dataclass_fields__))
    if unknown:
        raise ArgumentError(f"{path}: unknown sweep spec keys {unknown}")
    return SweepSpec(**raw), dataset, out


@dataclass
class Metrics:
    acc161: float
    mean_km: float
    median_km: float

    @classmethod
    def from_report(cls, report: EvalReport) -> "Metrics":
        return cls(report.acc161, report.mean_km, report.median_km)


@dataclass
class CellResult:
    model: str
    fraction: float
    depth: int
    seed: int
    dev: Metrics | None = None
    test: Metrics | None = None
    seconds: float = 0.0
    config: dict = field(default_factory=dict)
    failed: bool = False
    reason: str | None = None


@dataclass
class RunReport:
    provenance: str
    spec: SweepSpec
    cells: list[CellResult] = field(default_factory=list)


# --------------------------------------------------------------------------
# shared preparation


def prepare_views(
    bundle: DatasetBundle,
    min_df: int = 2,
    max_df_ratio: float = 0.5,
    max_comention_degree: int = 1000,
) -> ViewMatrices:
    text, vocab = build_text_view(bundle.texts, min_df=min_df, max_df_ratio=max_df_ratio)
    adjacency = build_mention_graph(bundle.ids, bundle.mention_pairs, max_comention_degree)
    return ViewMatrices(text=text, adjacency=adjacency, vocabulary=vocab)


def scaled_bucket(bucket: int, fraction: float, scale: bool) -> int:
    """Shrink the leaf-size target with the labeled fraction, floored at 1.

    With few labeled points a full-size bucket collapses the tree to a single
    class, so by default the bucket scales as round(bucket * fraction).
    """
    return max(1, int(round(bucket * fraction))) if scale else bucket


def build_region_tree(
    bundle: DatasetBundle,
    partition: Partition,
    bucket: int,
    fraction: float,
    bucket_scale: bool = True,
    tree_from: str = "labeled",
) -> RegionTree:
    """Discretize coordinates into classes, from the labeled users by default.

    ``tree_from="all-train"`` reuses the whole train split's coordinates (the
    tree then ignores the labeled fraction, and the bucket is never scaled).
    Dev and test coordinates are excluded either way.
    """
    if tree_from == "labeled":
        idx = partition.train_idx
        size = scaled_bucket(bucket, fraction, bucket_scale)
    elif tree_from == "all-train":
        idx = bundle.split_indices("train")
        size = bucket
    else:
        raise ArgumentError("tree_from must be 'labeled' or 'all-train'")
    return RegionTree.build([bundle.points[i] for i in idx], size)


def labels_for_training(
    bundle: DatasetBundle, tree: RegionTree, labeled_idx: np.ndarray
) -> np.ndarray:
    """Class ids for labeled users only; every other entry is -1.

    Held-out coordinates are never looked at here, which is what keeps
    training a pure function of the labeled rows.
    """
    labels = np.full(len(bundle), -1, dtype=np.intp)
    labels[labeled_idx] = tree.assign_many([bundle.points[i] for i in labeled_idx])
    return labels


def fit_model(
    model_name: str,
    depth: int,
    views: ViewMatrices,
    a_hat: SparseMatrix,
    labels: np.ndarray,
    num_classes: int,
    partition: Partition,
    hidden: int,
    train_cfg: TrainConfig,
    dcca_overrides: dict | None = None,
    dev_score=None,
    highway: bool = True,
):
    """Dispatch one training run by model name; returns (model, history)."""
    if model_name == "gcn-nohighway":
        model_name, highway = "gcn", False
    if model_name == "gcn":
        cfg = GcnConfig(hidden=hidden, layers=depth, highway=highway)
        return train_gcn(
            a_hat, views.text, labels, num_classes, partition, cfg, train_cfg, dev_score
        )
    if model_name == "gcn-lp":
        cfg = GcnConfig(hidden=hidden, layers=depth, highway=highway)
        return train_gcn_lp(
            a_hat, views.adjacency, labels, num_classes, partition, cfg, train_cfg, dev_score
        )
    if model_name == "mlp":
        return train_mlp(
            a_hat, views.text, labels, num_classes, partition, hidden, train_cfg, dev_score
        )
    if model_name == "dcca":
        kwargs = dict(dcca_overrides or {})
        kwargs.setdefault("clf_hidden", hidden)
        n = a_hat.shape[0]
        # The default projection width exceeds small corpora; cap to keep the
        # correlation well-defined (needs more samples than projected dims).
        cfg = DccaConfig(**kwargs)
        if cfg.proj_out >= n - 1:
            cfg = DccaConfig(**{**kwargs, "proj_out": max(1, (n - 1) // 2)})
        return train_dcca(
            a_hat, views.text, labels, num_classes, partition, cfg, train_cfg, dev_score
        )
    raise ArgumentError(f"unknown model {model_name!r}; valid: {list(MODEL_NAMES)}")


def evaluate_model(
    model: TrainedModel,
    views: ViewMatrices,
    a_hat: SparseMatrix,
    tree: RegionTree,
    bundle: DatasetBundle,
    partition: Partition,
) -> dict[str, EvalReport]:
    preds = predict_classes(model, a_hat, views.text, views.adjacency)
    out = {}
    for name, idx in (("dev", partition.dev_idx), ("test", partition.test_idx)):
        if idx.size:
            out[name] = evaluate(preds[idx], [bundle.points[i] for i in idx], tree)
    return out


# --------------------------------------------------------------------------
# the sweep itself


def run_sweep(bundle: DatasetBundle, spec: SweepSpec) -> RunReport:
    views = prepare_views(bundle, spec.min_df, spec.max_df_ratio, spec.max_comention_degree)
    a_hat = normalize_adjacency(views.adjacency, spec.lam)
    report = RunReport(provenance=bundle.provenance, spec=spec)

    for model_name in spec.models:
        depths = spec.depths if model_name in DEPTH_AWARE else (1,)
        for fraction in spec.fractions:
            for depth in depths:
                for seed in spec.seeds:
                    cell = CellResult(model_name, fraction, depth, seed)
                    cell.config = {
                        "hidden": spec.hidden,
                        "epochs": spec.epochs,
                        "lr": spec.lr,
                        "dropout": spec.dropout,
                        "bucket": spec.bucket if spec.tree_from == "all-train"
                        else scaled_bucket(spec.bucket, fraction, spec.bucket_scale),
                        "tree_from": spec.tree_from,
                        "lam": spec.lam,
                    }
                    start = time.perf_counter()
                    try:
                        partition = subsample_labels(bundle, fraction, seed)
                        tree = build_region_tree(
                            bundle, partition, spec.bucket, fraction,
                            spec.bucket_scale, spec.tree_from,
                        )
                        labels = labels_for_training(bundle, tree, partition.train_idx)
                        train_cfg = TrainConfig(
                            lr=spec.lr, epochs=spec.epochs, dropout=spec.dropout, seed=seed
                        )
                        model, _ = fit_model(
                            model_name, depth, views, a_hat, labels, tree.num_classes,
                            partition, spec.hidden, train_cfg, spec.dcca,
                        )
                        scores = evaluate_model(model, views, a_hat, tree, bundle, partition)
                        cell.dev = Metrics.from_report(scores["dev"]) if "dev" in scores else None
                        cell.test = Metrics.from_report(scores["test"]) if "test" in scores else None
                    except Exception as exc:  # cell failures must not kill the sweep
                        cell.failed = True
                        cell.reason = f"{type(exc).__name__}: {exc}"
                    cell.seconds = time.perf_counter() - start
                    report.cells.append(cell)
    return report


def _aggregate(cells: list[CellResult]) -> list[dict]:
    groups: dict[tuple, list[CellResult]] = {}
    for cell in cells:
        if not cell.failed:
            groups.setdefault((cell.model, cell.fraction, cell.depth), []).append(cell)
    out = []
    for (model, fraction, depth), members in sorted(groups.items()):
        entry = {"model": model, "fraction": fraction, "depth": depth, "seeds": len(members)}
        for split in ("dev", "test"):
            metrics = [getattr(c, split) for c in members if getattr(c, split) is not None]
            if not metrics:
                continue
            for name in ("acc161", "mean_km", "median_km"):
                values = np.array([getattr(m, name) for m in metrics])
                entry[f"{split}_{name}_mean"] = float(values.mean())
                entry[f"{split}_{name}_std"] = float(values.std())
        out.append(entry)
    return out


def emit_report(report: RunReport, out_dir, csv_timing: str = "zero") -> tuple[Path, Path]:
    """Write report.json and report.csv under out_dir.

    ``csv_timing="wall"`` puts real wall-clock in the CSV seconds column,
    trading away byte-identical reruns; the default writes 0.000 there and
    keeps true timings in the JSON.
    """
    if csv_timing not in ("zero", "wall"):
        raise ArgumentError(f"csv_timing must be 'zero' or 'wall', got {csv_timing!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "report.json"
    csv_path = out_dir / "report.csv"

    payload = {
        "provenance": report.provenance,
        "spec": asdict(report.spec),
        "cells": [asdict(cell) for cell in report.cells],
        "aggregates": _aggregate(report.cells),
    }
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")

    lines = [CSV_HEADER]
    for cell in report.cells:
        metrics = cell.test if cell.test is not None else cell.dev
        if cell.failed or metrics is None:
            acc, mean, median = "nan", "nan", "nan"
        else:
            acc = f"{metrics.acc161:.4f}"
            mean = f"{metrics.mean_km:.3f}"
            median = f"{metrics.median_km:.3f}"
        seconds = f"{cell.seconds:.3f}" if csv_timing == "wall" else "0.000"
        lines.append(
            f"{cell.model},{cell.fraction:g},{cell.depth},{cell.seed},{acc},{mean},{median},{seconds}"
        )
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return json_path, csv_path
