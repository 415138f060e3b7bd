"""Command-line entry points: train, sweep, synth, eval.

Exit codes: 0 on success, 1 when the invocation or input data is invalid,
2 when a run fails at runtime. All randomness is derived from --seed, and the
CSV artifacts are byte-identical across repeated identical invocations.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import checkpoint as ckpt
from .data import DatasetBundle, SyntheticConfig, generate_synthetic, load_dataset, save_dataset, subsample_labels
from .errors import ArgumentError, DataFormatError, GeographError
from .geo import RegionTree, evaluate, export_per_class_csv
from .models import TrainConfig, predict_classes
from .sweep import (
    build_region_tree,
    evaluate_model,
    fit_model,
    labels_for_training,
    load_sweep_file,
    prepare_views,
    run_sweep,
    emit_report,
    scaled_bucket,
)
from .views import ViewMatrices, Vocabulary, build_mention_graph, build_text_view, normalize_adjacency

CLI_MODELS = ("gcn", "gcn-lp", "mlp", "dcca")


@click.group()
def cli():
    """Semi-supervised user geolocation over text and @-mention graphs."""


@cli.command()
@click.option("--users", "users_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--edges", "edges_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--model", "model_name", type=click.Choice(CLI_MODELS), default="gcn", show_default=True)
@click.option("--hidden", default=300, show_default=True, help="Hidden layer width.")
@click.option("--layers", default=1, show_default=True,
              help="Hidden graph-conv layers; the softmax layer adds one more hop.")
@click.option("--no-highway", is_flag=True, help="Disable the gated skip connections.")
@click.option("--bucket", default=50, show_default=True, help="Region tree leaf size target.")
@click.option("--no-bucket-scale", is_flag=True,
              help="Keep --bucket fixed instead of scaling it by the labeled fraction.")
@click.option("--tree-from", type=click.Choice(["labeled", "all-train"]), default="labeled",
              show_default=True,
              help="Coordinates the region tree is built from; 'all-train' uses the whole "
                   "train split even when only a fraction of it is labeled.")
@click.option("--labeled-fraction", default=1.0, show_default=True,
              help="Fraction of the train split whose labels are visible.")
@click.option("--lambda", "lam", default=1.0, show_default=True,
              help="Self-loop weight added before adjacency normalization.")
@click.option("--dropout", default=0.5, show_default=True)
@click.option("--lr", default=1e-3, show_default=True)
@click.option("--epochs", default=200, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--early-stop", is_flag=True,
              help="Keep the epoch with the best dev median error (patience 10). "
                   "Trained weights then depend on dev coordinates.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def train(users_path, edges_path, model_name, hidden, layers, no_highway, bucket,
          no_bucket_scale, tree_from, labeled_fraction, lam, dropout, lr, epochs,
          seed, early_stop, out_dir):
    """Train one model and write checkpoint, report, and predictions."""
    start = time.perf_counter()
    bundle = load_dataset(users_path, edges_path)
    views = prepare_views(bundle)
    a_hat = normalize_adjacency(views.adjacency, lam)
    partition = subsample_labels(bundle, labeled_fraction, seed)
    bucket_eff = (bucket if tree_from == "all-train"
                  else scaled_bucket(bucket, labeled_fraction, not no_bucket_scale))
    tree = build_region_tree(
        bundle, partition, bucket, labeled_fraction, not no_bucket_scale, tree_from
    )
    labels = labels_for_training(bundle, tree, partition.train_idx)
    train_cfg = TrainConfig(lr=lr, epochs=epochs, dropout=dropout, seed=seed,
                            early_stop=early_stop)

    dev_score = None
    if early_stop and partition.dev_idx.size:
        dev_points = [bundle.points[i] for i in partition.dev_idx]

        def dev_score(preds: np.ndarray) -> float:
            return evaluate(preds[partition.dev_idx], dev_points, tree).median_km

    model, history = fit_model(
        model_name, layers, views, a_hat, labels, tree.num_classes, partition,
        hidden, train_cfg, dev_score=dev_score, highway=not no_highway,
    )
    scores = evaluate_model(model, views, a_hat, tree, bundle, partition)
    seconds = time.perf_counter() - start

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    context = {
        "vocabulary": views.vocabulary.to_dict(),
        "tree": tree.to_dict(),
        "lam": lam,
        "max_comention_degree": 1000,
        "dataset": {"users": str(users_path), "edges": str(edges_path)},
    }
    ckpt.save_checkpoint(out / "model.ckpt", model, context)
    _write_predictions(out / "predictions.csv", bundle, model, views, a_hat, tree)

    report = {
        "model": model_name,
        "config": {
            "hidden": hidden, "layers": layers, "highway": not no_highway,
            "bucket": bucket_eff, "tree_from": tree_from,
            "labeled_fraction": labeled_fraction,
            "lambda": lam, "dropout": dropout, "lr": lr, "epochs": epochs,
            "seed": seed, "early_stop": early_stop,
        },
        "num_classes": tree.num_classes,
        "labeled_users": int(partition.train_idx.size),
        "epochs_run": len(history),
        "final_train_loss": history[-1].loss,
        "metrics": {k: dataclasses.asdict(_strip_per_class(v)) for k, v in scores.items()},
        "seconds": seconds,
    }
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for split, rep in scores.items():
        export_per_class_csv(rep, tree, out / f"per_class_{split}.csv")

    for split in ("dev", "test"):
        if split in scores:
            rep = scores[split]
            click.echo(
                f"{split}: acc@161 {rep.acc161:.4f}  mean {rep.mean_km:.1f} km  "
                f"median {rep.median_km:.1f} km"
            )
    click.echo(f"wrote {out / 'model.ckpt'}")


def _strip_per_class(report):
    return dataclasses.replace(report, per_class=[])


def _write_predictions(path, bundle: DatasetBundle, model, views, a_hat, tree) -> None:
    preds = predict_classes(model, a_hat, views.text, views.adjacency)
    reps = tree.representatives
    lines = ["id,split,class_id,pred_lat,pred_lon"]
    for i, uid in enumerate(bundle.ids):
        rep = reps[preds[i]]
        lines.append(f"{uid},{bundle.splits[i]},{preds[i]},{rep.lat!r},{rep.lon!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@cli.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_override", default=None, type=click.Path(file_okay=False),
              help="Report directory; overrides the spec's own 'out'.")
@click.option("--csv-timing", type=click.Choice(["zero", "wall"]), default="zero",
              show_default=True,
              help="'wall' records real seconds in the CSV at the cost of byte-stable reruns.")
def sweep(spec_path, out_override, csv_timing):
    """Run the (model, fraction, depth, seed) grid described by a JSON spec."""
    spec, dataset_cfg, out_dir = load_sweep_file(spec_path)
    out_dir = out_override or out_dir
    if out_dir is None:
        raise ArgumentError("no output directory: pass --out or set 'out' in the spec")
    if dataset_cfg is None:
        raise ArgumentError("sweep spec needs a 'dataset' entry")
    if "synthetic" in dataset_cfg:
        synth = dict(dataset_cfg["synthetic"])
        seed = synth.pop("seed", 0)
        bundle = generate_synthetic(SyntheticConfig(**synth), seed=seed)
    elif "users" in dataset_cfg and "edges" in dataset_cfg:
        bundle = load_dataset(dataset_cfg["users"], dataset_cfg["edges"])
    else:
        raise ArgumentError("dataset entry must give 'users'+'edges' or 'synthetic'")
    report = run_sweep(bundle, spec)
    json_path, csv_path = emit_report(report, out_dir, csv_timing)
    failed = [c for c in report.cells if c.failed]
    click.echo(f"{len(report.cells)} cells ({len(failed)} failed) -> {csv_path}")
    for cell in failed:
        click.echo(
            f"  failed: {cell.model} fraction={cell.fraction:g} depth={cell.depth} "
            f"seed={cell.seed}: {cell.reason}",
            err=True,
        )


_SYNTH_DEFAULTS = SyntheticConfig()


@cli.command()
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--n-users", default=_SYNTH_DEFAULTS.n_users, show_default=True)
@click.option("--regions", default=_SYNTH_DEFAULTS.n_regions, show_default=True)
@click.option("--vocab-size", default=_SYNTH_DEFAULTS.vocab_size, show_default=True)
@click.option("--p-in", default=_SYNTH_DEFAULTS.p_in, show_default=True,
              help="Same-region edge probability.")
@click.option("--p-out", default=_SYNTH_DEFAULTS.p_out, show_default=True,
              help="Cross-region edge probability.")
@click.option("--words-per-user", default=_SYNTH_DEFAULTS.words_per_user, show_default=True)
@click.option("--region-word-weight", default=_SYNTH_DEFAULTS.region_word_weight,
              show_default=True,
              help="Chance each token comes from the region's own term set.")
@click.option("--seed", default=0, show_default=True)
def synth(out_dir, n_users, regions, vocab_size, p_in, p_out, words_per_user,
          region_word_weight, seed):
    """Generate a homophilous synthetic corpus as users.jsonl + edges.tsv."""
    cfg = SyntheticConfig(
        n_users=n_users, n_regions=regions, vocab_size=vocab_size,
        p_in=p_in, p_out=p_out, words_per_user=words_per_user,
        region_word_weight=region_word_weight,
    )
    bundle = generate_synthetic(cfg, seed=seed)
    users_path, edges_path = save_dataset(bundle, out_dir)
    click.echo(f"wrote {users_path} and {edges_path} ({len(bundle)} users, "
               f"{len(bundle.mention_pairs)} mention pairs)")


@cli.command("eval")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--users", "users_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--edges", "edges_path", required=True, type=click.Path(exists=True, dir_okay=False))
def eval_cmd(model_path, users_path, edges_path):
    """Score a checkpoint on a dataset; prints JSON metrics per split.

    Models whose input width depends on the user count (mlp, gcn-lp, dcca)
    can only be scored on the graph they were trained with.
    """
    model, context = ckpt.load_checkpoint(model_path)
    bundle = load_dataset(users_path, edges_path)
    vocab = Vocabulary.from_dict(context["vocabulary"])
    tree = RegionTree.from_dict(context["tree"])
    text, _ = build_text_view(bundle.texts, vocab=vocab)
    adjacency = build_mention_graph(
        bundle.ids, bundle.mention_pairs, context.get("max_comention_degree", 1000)
    )
    views = ViewMatrices(text=text, adjacency=adjacency, vocabulary=vocab)
    a_hat = normalize_adjacency(adjacency, context.get("lam", 1.0))
    preds = predict_classes(model, a_hat, views.text, views.adjacency)

    out = {}
    for split in ("train", "dev", "test"):
        idx = bundle.split_indices(split)
        if idx.size == 0:
            continue
        rep = evaluate(preds[idx], [bundle.points[i] for i in idx], tree)
        out[split] = {"n": int(idx.size), "acc161": rep.acc161,
                      "mean_km": rep.mean_km, "median_km": rep.median_km}
    click.echo(json.dumps(out, indent=2, sort_keys=True))


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        return 1
    except click.exceptions.ClickException as exc:
        exc.show()
        return 1
    except (ArgumentError, DataFormatError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except GeographError as exc:
        click.echo(f"runtime failure: {exc}", err=True)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        click.echo(f"runtime failure: {type(exc).__name__}: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
