"""Transductive geolocation models over the text and graph views.

Four classifiers share one training scaffold (full-batch Adam on the
cross-entropy of the labeled rows):

* ``gcn``: stacked graph convolutions ``H' = relu(A_hat @ H @ W + b)`` with
  highway gates on the dimension-preserving layers, closed by one more graph
  convolution into class logits.
* ``gcn-lp``: the same stack fed with ``[adjacency | label block]`` rows. The
  label block carries one-hot labels for labeled users and, once training
  accuracy first reaches a trigger threshold, the model's own softmax
  distributions for everyone else, refreshed every epoch.
* ``mlp``: one hidden relu layer over ``[tf-idf | A_hat]`` rows, no
  propagation between users at the hidden layer.
* ``dcca``: two projection nets (one per view) trained to maximize the sum of
  canonical correlations between their outputs, then frozen; a small softmax
  classifier is trained on the concatenated projections.

Every model predicts one of the region-tree classes per user. Training never
reads labels or coordinates outside the labeled index set; held-out users
participate only through their features and graph edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ArgumentError, ShapeError, StateError
from .optim import ParamSet, glorot_uniform
from .sparse import SparseMatrix, hstack as sparse_hstack


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class Partition:
    """Index sets for labeled, development, and test users (disjoint)."""

    train_idx: np.ndarray
    dev_idx: np.ndarray
    test_idx: np.ndarray

    def __post_init__(self):
        for name in ("train_idx", "dev_idx", "test_idx"):
            arr = np.asarray(getattr(self, name), dtype=np.intp)
            object.__setattr__(self, name, arr)
        if self.train_idx.size == 0:
            raise ArgumentError("partition has no labeled users")
        pools = [set(self.train_idx), set(self.dev_idx), set(self.test_idx)]
        total = len(pools[0]) + len(pools[1]) + len(pools[2])
        if len(pools[0] | pools[1] | pools[2]) != total:
            raise ArgumentError("partition index sets overlap")


@dataclass(frozen=True)
class GcnConfig:
    """Depth is the number of hidden graph-convolution layers; the softmax
    layer adds one more, so information reaches depth+1 hops."""

    hidden: int = 300
    layers: int = 1
    highway: bool = True
    gate_bias: float = -1.0

    def __post_init__(self):
        if self.hidden < 1 or self.layers < 1:
            raise ArgumentError("hidden and layers must be >= 1")


@dataclass(frozen=True)
class DccaConfig:
    proj_hidden: int = 1000  # 0 drops the sigmoid layer, leaving a linear map
    proj_out: int = 500
    reg: float = 1e-4
    stage1_lr: float = 1e-3
    stage1_epochs: int = 100
    clf_hidden: int = 300

    def __post_init__(self):
        if self.proj_hidden < 0:
            raise ArgumentError("proj_hidden must be >= 0")
        if self.proj_out < 1 or self.clf_hidden < 1:
            raise ArgumentError("proj_out and clf_hidden must be >= 1")
        if self.reg <= 0.0:
            raise ArgumentError("reg must be > 0")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 200
    dropout: float = 0.5
    seed: int = 0
    # Optional early stopping on a caller-supplied dev score (lower = better).
    # Off by default: the fixed-epoch path guarantees training is a pure
    # function of features, edges, and labeled rows.
    early_stop: bool = False
    patience: int = 10

    def __post_init__(self):
        if not 0.0 <= self.dropout < 1.0:
            raise ArgumentError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.epochs < 1:
            raise ArgumentError("epochs must be >= 1")


LP_TRIGGER_ACCURACY = 0.2


@dataclass
class TrainedModel:
    """Everything needed to reproduce predictions: weights plus wiring info."""

    kind: str  # "gcn" | "gcn-lp" | "mlp" | "dcca"
    params: ParamSet
    meta: dict
    state: dict = field(default_factory=dict)  # extra arrays, e.g. label block


@dataclass
class EpochLog:
    epoch: int
    loss: float
    train_acc: float
    dev_score: float | None = None


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.intp)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ArgumentError("label id outside [0, num_classes)")
    out = np.zeros((labels.size, num_classes), dtype=np.float64)
    out[np.arange(labels.size), labels] = 1.0
    return out


# --------------------------------------------------------------------------
# forward passes


def highway_combine(h_new: Tensor, h_in: Tensor, gate: Tensor) -> Tensor:
    """gate * h_new + (1 - gate) * h_in, elementwise."""
    carry = ad.add_const(ad.mul_const(gate, -1.0), 1.0)
    return ad.add(ad.mul(h_new, gate), ad.mul(h_in, carry))


def init_gcn_params(
    rng: np.random.Generator, in_dim: int, num_classes: int, cfg: GcnConfig
) -> ParamSet:
    params = ParamSet()
    dims = [in_dim] + [cfg.hidden] * cfg.layers
    for l in range(cfg.layers):
        params.add(f"conv{l}/W", glorot_uniform(rng, dims[l], dims[l + 1]))
        params.add(f"conv{l}/b", np.zeros(dims[l + 1]))
        # The first layer changes width, so only later layers carry a gate.
        if cfg.highway and l > 0:
            params.add(f"gate{l}/W", glorot_uniform(rng, cfg.hidden, cfg.hidden))
            params.add(f"gate{l}/b", np.full(cfg.hidden, float(cfg.gate_bias)))
    params.add("out/W", glorot_uniform(rng, cfg.hidden, num_classes))
    params.add("out/b", np.zeros(num_classes))
    return params


def gcn_forward(
    a_hat: SparseMatrix,
    propagated_input: SparseMatrix,
    params: ParamSet,
    cfg: GcnConfig,
    dropout_masks: list[np.ndarray] | None = None,
) -> Tensor:
    """Class logits for every node.

    ``propagated_input`` must already be ``a_hat @ X``: the input features are
    constants, so their propagation is hoisted out of the differentiated
    graph. Hidden activations are propagated on the tape. ``dropout_masks``
    holds one mask per hidden layer output (applied before the next
    convolution); gates and carry paths read the undropped activation so a
    closed gate passes the input through exactly.
    """
    if dropout_masks is not None and len(dropout_masks) != cfg.layers:
        raise ShapeError(f"expected {cfg.layers} dropout masks, got {len(dropout_masks)}")
    h = ad.relu(ad.sparse_affine(propagated_input, params["conv0/W"], params["conv0/b"]))
    for l in range(1, cfg.layers):
        h_in = h
        mixed = h_in
        if dropout_masks is not None:
            mixed = ad.dropout(mixed, dropout_masks[l - 1])
        h_new = ad.relu(
            ad.affine(ad.spmm(a_hat, mixed), params[f"conv{l}/W"], params[f"conv{l}/b"])
        )
        if cfg.highway:
            gate = ad.sigmoid(ad.affine(h_in, params[f"gate{l}/W"], params[f"gate{l}/b"]))
            h = highway_combine(h_new, h_in, gate)
        else:
            h = h_new
    if dropout_masks is not None:
        h = ad.dropout(h, dropout_masks[cfg.layers - 1])
    return ad.affine(ad.spmm(a_hat, h), params["out/W"], params["out/b"])


def init_mlp_params(
    rng: np.random.Generator, in_dim: int, hidden: int, num_classes: int
) -> ParamSet:
    params = ParamSet()
    params.add("hid/W", glorot_uniform(rng, in_dim, hidden))
    params.add("hid/b", np.zeros(hidden))
    params.add("out/W", glorot_uniform(rng, hidden, num_classes))
    params.add("out/b", np.zeros(num_classes))
    return params


def mlp_forward(
    x: SparseMatrix, params: ParamSet, dropout_mask: np.ndarray | None = None
) -> Tensor:
    h = ad.relu(ad.sparse_affine(x, params["hid/W"], params["hid/b"]))
    if dropout_mask is not None:
        h = ad.dropout(h, dropout_mask)
    return ad.affine(h, params["out/W"], params["out/b"])


def init_projection_params(
    rng: np.random.Generator, prefix: str, in_dim: int, cfg: DccaConfig, params: ParamSet
) -> None:
    if cfg.proj_hidden > 0:
        params.add(f"{prefix}/hid/W", glorot_uniform(rng, in_dim, cfg.proj_hidden))
        params.add(f"{prefix}/hid/b", np.zeros(cfg.proj_hidden))
        params.add(f"{prefix}/out/W", glorot_uniform(rng, cfg.proj_hidden, cfg.proj_out))
    else:
        params.add(f"{prefix}/out/W", glorot_uniform(rng, in_dim, cfg.proj_out))
    params.add(f"{prefix}/out/b", np.zeros(cfg.proj_out))


def projection_forward(
    x: SparseMatrix, params: ParamSet, prefix: str, cfg: DccaConfig
) -> Tensor:
    if cfg.proj_hidden > 0:
        h = ad.sigmoid(ad.sparse_affine(x, params[f"{prefix}/hid/W"], params[f"{prefix}/hid/b"]))
        return ad.affine(h, params[f"{prefix}/out/W"], params[f"{prefix}/out/b"])
    return ad.sparse_affine(x, params[f"{prefix}/out/W"], params[f"{prefix}/out/b"])


def cca_loss(h1: Tensor, h2: Tensor, reg: float) -> Tensor:
    """Negative sum of canonical correlations (minimization objective)."""
    return ad.mul_const(ad.cca_correlation(h1, h2, reg), -1.0)


def lp_input(adjacency: SparseMatrix, label_block: np.ndarray) -> SparseMatrix:
    """Rows ``[binary adjacency | per-class label weights]`` for gcn-lp."""
    n = adjacency.shape[0]
    if label_block.shape[0] != n:
        raise ShapeError(f"label block has {label_block.shape[0]} rows for {n} nodes")
    return sparse_hstack([adjacency, SparseMatrix.from_dense(label_block)])


# --------------------------------------------------------------------------
# training scaffold

DevScoreFn = Callable[[np.ndarray], float]


def _masks(rng: np.random.Generator, count: int, shape: tuple, p: float):
    if p == 0.0:
        return None
    return [ad.make_dropout_mask(rng, shape, p) for _ in range(count)]


class _EarlyStopper:
    """Keeps the best-scoring parameter snapshot; signals when patience runs out."""

    def __init__(self, params: ParamSet, patience: int):
        self.params = params
        self.patience = patience
        self.best_score = math.inf
        self.best_values = params.copy_values()
        self.stale = 0

    def update(self, score: float) -> bool:
        if score < self.best_score:
            self.best_score = score
            self.best_values = self.params.copy_values()
            self.stale = 0
        else:
            self.stale += 1
        return self.stale >= self.patience

    def restore(self) -> None:
        self.params.load_values(self.best_values)


def _train_classifier(
    params: ParamSet,
    forward: Callable[[list[np.ndarray] | None], Tensor],
    labels: np.ndarray,
    num_classes: int,
    train_idx: np.ndarray,
    cfg: TrainConfig,
    dropout_rng: np.random.Generator,
    mask_count: int,
    mask_shape: tuple,
    dev_score: DevScoreFn | None = None,
    after_epoch: Callable[[np.ndarray, float, int], None] | None = None,
) -> list[EpochLog]:
    """Shared full-batch loop: forward, cross-entropy on train rows, Adam.

    ``forward(masks)`` must produce logits for all users; ``after_epoch``
    (used by gcn-lp) receives eval-mode probabilities, training accuracy, and
    the epoch index after each update.
    """
    train_idx = np.asarray(train_idx, dtype=np.intp)
    targets = one_hot(labels[train_idx], num_classes)
    history: list[EpochLog] = []
    stopper = _EarlyStopper(params, cfg.patience) if (cfg.early_stop and dev_score) else None

    for epoch in range(cfg.epochs):
        masks = _masks(dropout_rng, mask_count, mask_shape, cfg.dropout)
        logits = forward(masks)
        loss = ad.softmax_cross_entropy(logits, targets, train_idx)
        params.zero_grads()
        ad.backward(loss)
        params.adam_step(cfg.lr)

        need_eval = (after_epoch is not None) or (dev_score is not None)
        train_acc = float("nan")
        score = None
        if need_eval:
            eval_logits = forward(None)
            probs = _softmax_rows(eval_logits.data)
            preds = probs.argmax(axis=1)
            train_acc = float(np.mean(preds[train_idx] == labels[train_idx]))
            if after_epoch is not None:
                after_epoch(probs, train_acc, epoch)
            if dev_score is not None:
                score = dev_score(preds)
        history.append(EpochLog(epoch, float(loss.data), train_acc, score))
        if stopper is not None and stopper.update(score):
            break
    if stopper is not None:
        stopper.restore()
    return history


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _split_rng(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    init_seq, drop_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_seq), np.random.default_rng(drop_seq)


# --------------------------------------------------------------------------
# model-specific training


def train_gcn(
    a_hat: SparseMatrix,
    x: SparseMatrix,
    labels: np.ndarray,
    num_classes: int,
    partition: Partition,
    gcn_cfg: GcnConfig,
    train_cfg: TrainConfig,
    dev_score: DevScoreFn | None = None,
) -> tuple[TrainedModel, list[EpochLog]]:
    n = a_hat.shape[0]
    if x.shape[0] != n:
        raise ShapeError(f"features have {x.shape[0]} rows for {n} nodes")
    init_rng, drop_rng = _split_rng(train_cfg.seed)
    params = init_gcn_params(init_rng, x.shape[1], num_classes, gcn_cfg)
    propagated = SparseMatrix(a_hat.csr @ x.csr)

    def forward(masks):
        return gcn_forward(a_hat, propagated, params, gcn_cfg, masks)

    history = _train_classifier(
        params, forward, labels, num_classes, partition.train_idx, train_cfg,
        drop_rng, gcn_cfg.layers, (n, gcn_cfg.hidden), dev_score,
    )
    meta = {
        "in_dim": x.shape[1],
        "num_classes": num_classes,
        "hidden": gcn_cfg.hidden,
        "layers": gcn_cfg.layers,
        "highway": gcn_cfg.highway,
        "gate_bias": gcn_cfg.gate_bias,
    }
    return TrainedModel("gcn", params, meta), history


def train_gcn_lp(
    a_hat: SparseMatrix,
    adjacency: SparseMatrix,
    labels: np.ndarray,
    num_classes: int,
    partition: Partition,
    gcn_cfg: GcnConfig,
    train_cfg: TrainConfig,
    dev_score: DevScoreFn | None = None,
    trigger_accuracy: float = LP_TRIGGER_ACCURACY,
    include_adjacency_block: bool = True,
) -> tuple[TrainedModel, list[EpochLog]]:
    """Label-propagating variant: the input carries a mutable label block.

    Labeled rows always hold their one-hot label. Held-out rows start at zero
    and stay there until training accuracy first reaches ``trigger_accuracy``
    (checked once per epoch, then latched); afterwards they hold the model's
    current softmax distribution, recomputed without dropout after every
    update. ``include_adjacency_block=False`` drops the adjacency columns and
    feeds the label block alone.
    """
    n = a_hat.shape[0]
    init_rng, drop_rng = _split_rng(train_cfg.seed)
    in_dim = (n if include_adjacency_block else 0) + num_classes
    params = init_gcn_params(init_rng, in_dim, num_classes, gcn_cfg)

    label_block = np.zeros((n, num_classes), dtype=np.float64)
    train_idx = partition.train_idx
    label_block[train_idx] = one_hot(labels[train_idx], num_classes)
    held_out = np.setdiff1d(np.arange(n), train_idx)
    latched = False

    def build_input() -> SparseMatrix:
        if include_adjacency_block:
            x = lp_input(adjacency, label_block)
        else:
            x = SparseMatrix.from_dense(label_block)
        return SparseMatrix(a_hat.csr @ x.csr)

    propagated = build_input()

    def forward(masks):
        return gcn_forward(a_hat, propagated, params, gcn_cfg, masks)

    def after_epoch(probs: np.ndarray, train_acc: float, epoch: int) -> None:
        nonlocal latched, propagated
        if not latched and train_acc >= trigger_accuracy:
            latched = True
        if latched:
            label_block[held_out] = probs[held_out]
            propagated = build_input()

    history = _train_classifier(
        params, forward, labels, num_classes, train_idx, train_cfg,
        drop_rng, gcn_cfg.layers, (n, gcn_cfg.hidden), dev_score,
        after_epoch=after_epoch,
    )
    meta = {
        "in_dim": in_dim,
        "num_classes": num_classes,
        "hidden": gcn_cfg.hidden,
        "layers": gcn_cfg.layers,
        "highway": gcn_cfg.highway,
        "gate_bias": gcn_cfg.gate_bias,
        "include_adjacency_block": include_adjacency_block,
        "trigger_accuracy": trigger_accuracy,
    }
    state = {"label_block": label_block.copy()}
    return TrainedModel("gcn-lp", params, meta, state), history


def train_mlp(
    a_hat: SparseMatrix,
    x: SparseMatrix,
    labels: np.ndarray,
    num_classes: int,
    partition: Partition,
    hidden: int,
    train_cfg: TrainConfig,
    dev_score: DevScoreFn | None = None,
) -> tuple[TrainedModel, list[EpochLog]]:
    """One hidden layer over the concatenated text and normalized-graph rows."""
    n = a_hat.shape[0]
    if x.shape[0] != n:
        raise ShapeError(f"features have {x.shape[0]} rows for {n} nodes")
    init_rng, drop_rng = _split_rng(train_cfg.seed)
    xcat = sparse_hstack([x, a_hat])
    params = init_mlp_params(init_rng, xcat.shape[1], hidden, num_classes)

    def forward(masks):
        return mlp_forward(xcat, params, masks[0] if masks else None)

    history = _train_classifier(
        params, forward, labels, num_classes, partition.train_idx, train_cfg,
        drop_rng, 1, (n, hidden), dev_score,
    )
    meta = {"in_dim": xcat.shape[1], "num_classes": num_classes, "hidden": hidden}
    return TrainedModel("mlp", params, meta), history


def train_dcca(
    a_hat: SparseMatrix,
    x: SparseMatrix,
    labels: np.ndarray,
    num_classes: int,
    partition: Partition,
    dcca_cfg: DccaConfig,
    train_cfg: TrainConfig,
    dev_score: DevScoreFn | None = None,
) -> tuple[TrainedModel, list[EpochLog]]:
    """Stage 1 maximizes view correlation on all users (no labels involved);
    stage 2 trains a softmax classifier on the frozen, concatenated
    projections of the labeled users."""
    n = a_hat.shape[0]
    if x.shape[0] != n:
        raise ShapeError(f"features have {x.shape[0]} rows for {n} nodes")
    if n - 1 <= dcca_cfg.proj_out:
        raise ArgumentError("need more than proj_out + 1 users to correlate views")
    init_rng, drop_rng = _split_rng(train_cfg.seed)
    params = ParamSet()
    init_projection_params(init_rng, "f1", x.shape[1], dcca_cfg, params)
    init_projection_params(init_rng, "f2", a_hat.shape[1], dcca_cfg, params)

    for _ in range(dcca_cfg.stage1_epochs):
        h1 = projection_forward(x, params, "f1", dcca_cfg)
        h2 = projection_forward(a_hat, params, "f2", dcca_cfg)
        loss = cca_loss(h1, h2, dcca_cfg.reg)
        params.zero_grads()
        ad.backward(loss)
        params.adam_step(dcca_cfg.stage1_lr)

    z = np.hstack(
        [
            projection_forward(x, params, "f1", dcca_cfg).data,
            projection_forward(a_hat, params, "f2", dcca_cfg).data,
        ]
    )
    # Stage 2 optimizes the classifier only; projection weights are frozen by
    # training a separate parameter set against the fixed matrix z.
    clf = ParamSet()
    clf.add("clf/hid/W", glorot_uniform(init_rng, z.shape[1], dcca_cfg.clf_hidden))
    clf.add("clf/hid/b", np.zeros(dcca_cfg.clf_hidden))
    clf.add("clf/out/W", glorot_uniform(init_rng, dcca_cfg.clf_hidden, num_classes))
    clf.add("clf/out/b", np.zeros(num_classes))
    z_sparse = SparseMatrix.from_dense(z)

    def forward(masks):
        return mlp_forward(
            z_sparse,
            _aliased(clf),
            masks[0] if masks else None,
        )

    history = _train_classifier(
        clf, forward, labels, num_classes, partition.train_idx, train_cfg,
        drop_rng, 1, (n, dcca_cfg.clf_hidden), dev_score,
    )
    for name, tensor in clf.items():
        params.add(name, tensor.data)
    meta = {
        "in_dim": x.shape[1],
        "graph_dim": a_hat.shape[1],
        "num_classes": num_classes,
        "proj_hidden": dcca_cfg.proj_hidden,
        "proj_out": dcca_cfg.proj_out,
        "reg": dcca_cfg.reg,
        "clf_hidden": dcca_cfg.clf_hidden,
    }
    return TrainedModel("dcca", params, meta), history


class _aliased:
    """Adapter letting mlp_forward read clf/* names through hid/* and out/*."""

    def __init__(self, params: ParamSet):
        self._params = params

    def __getitem__(self, name: str) -> Tensor:
        return self._params[f"clf/{name}"]


# --------------------------------------------------------------------------
# prediction


def stage1_correlation(
    a_hat: SparseMatrix, x: SparseMatrix, model: TrainedModel
) -> float:
    """Current sum of canonical correlations between the two projections."""
    cfg = _dcca_cfg(model.meta)
    h1 = projection_forward(x, model.params, "f1", cfg)
    h2 = projection_forward(a_hat, model.params, "f2", cfg)
    return float(ad.cca_correlation(h1, h2, cfg.reg).data)


def _gcn_cfg(meta: dict) -> GcnConfig:
    return GcnConfig(
        hidden=meta["hidden"],
        layers=meta["layers"],
        highway=meta["highway"],
        gate_bias=meta.get("gate_bias", -1.0),
    )


def _dcca_cfg(meta: dict) -> DccaConfig:
    return DccaConfig(
        proj_hidden=meta["proj_hidden"],
        proj_out=meta["proj_out"],
        reg=meta["reg"],
        clf_hidden=meta["clf_hidden"],
    )


def predict_logits(
    model: TrainedModel, a_hat: SparseMatrix, x: SparseMatrix, adjacency: SparseMatrix
) -> np.ndarray:
    """Eval-mode logits for every user, reproducing the training wiring."""
    if model.kind == "gcn":
        propagated = SparseMatrix(a_hat.csr @ x.csr)
        return gcn_forward(a_hat, propagated, model.params, _gcn_cfg(model.meta)).data
    if model.kind == "gcn-lp":
        label_block = model.state.get("label_block")
        if label_block is None:
            raise StateError("gcn-lp model is missing its label block")
        if model.meta.get("include_adjacency_block", True):
            xin = lp_input(adjacency, label_block)
        else:
            xin = SparseMatrix.from_dense(label_block)
        propagated = SparseMatrix(a_hat.csr @ xin.csr)
        return gcn_forward(a_hat, propagated, model.params, _gcn_cfg(model.meta)).data
    if model.kind == "mlp":
        xcat = sparse_hstack([x, a_hat])
        return mlp_forward(xcat, model.params).data
    if model.kind == "dcca":
        cfg = _dcca_cfg(model.meta)
        z = np.hstack(
            [
                projection_forward(x, model.params, "f1", cfg).data,
                projection_forward(a_hat, model.params, "f2", cfg).data,
            ]
        )
        return mlp_forward(SparseMatrix.from_dense(z), _aliased(model.params)).data
    raise ArgumentError(f"unknown model kind {model.kind!r}")


def predict_classes(
    model: TrainedModel, a_hat: SparseMatrix, x: SparseMatrix, adjacency: SparseMatrix
) -> np.ndarray:
    return predict_logits(model, a_hat, x, adjacency).argmax(axis=1)
