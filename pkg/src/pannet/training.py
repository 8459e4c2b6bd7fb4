"""Loss, optimiser, training loop and evaluation."""

from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .data import Dataset
from .errors import BadLabel, DataError, DegenerateLabels
from .graph import Graph
from .metrics import roc_auc
from .model import Model, ModelConfig

log = logging.getLogger(__name__)


def weighted_bce(logits, labels, alpha: float) -> Tensor:
    """Mean of ``-[alpha y log s(z) + (1 - y) log(1 - s(z))]`` over the batch.

    Uses ``-log s(z) = softplus(-z)`` and ``-log(1 - s(z)) = softplus(z)``
    so no logarithm of zero is ever formed.
    """
    z = ad.as_tensor(logits)
    y = np.asarray(labels, dtype=np.float64).reshape(z.shape)
    if not np.all((y == 0) | (y == 1)):
        raise BadLabel(f"labels must be 0 or 1, got {np.unique(y)}")
    if alpha < 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    pos = ad.scale(ad.softplus(ad.scale(z, -1.0)), alpha * y)
    neg = ad.scale(ad.softplus(z), 1.0 - y)
    return ad.mean(ad.add(pos, neg))


class Adam:
    """Adam with bias-corrected moments, updating tensors in place."""

    def __init__(self, params: dict, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = dict(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self, grads: dict) -> None:
        """``grads`` maps each parameter tensor to its gradient array."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1**self.t
        c2 = 1 - b2**self.t
        for k, p in self.params.items():
            g = grads.get(p)
            if g is None:
                g = np.zeros_like(p.data)
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            p.data -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def num_threads() -> int:
    """Worker count from ``PAN_NUM_THREADS``, else the CPU count."""
    value = os.environ.get("PAN_NUM_THREADS")
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            log.warning("ignoring non-integer PAN_NUM_THREADS=%r", value)
    return os.cpu_count() or 1


def predict(model: Model, graphs: Sequence[Graph], workers: int | None = None,
            chunk: int = 64) -> np.ndarray:
    """Evaluation-mode logits; chunks run on a thread pool, order preserved."""
    graphs = list(graphs)
    if not graphs:
        return np.zeros(0)
    chunks = [graphs[i:i + chunk] for i in range(0, len(graphs), chunk)]
    workers = num_threads() if workers is None else workers

    def run(part):
        return model.forward(part, training=False).data

    if workers <= 1 or len(chunks) == 1:
        parts = [run(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
    return np.concatenate(parts)


def evaluate_auc(model: Model, graphs: Sequence[Graph], workers: int | None = None):
    """ROC-AUC on ``graphs``, or ``None`` when it is undefined there."""
    graphs = list(graphs)
    if not graphs:
        return None
    labels = np.array([g.label for g in graphs])
    if labels.size and np.any(labels == None):  # noqa: E711
        raise DataError("graphs without labels cannot be scored")
    try:
        return roc_auc(predict(model, graphs, workers), labels.astype(np.int64))
    except DegenerateLabels:
        return None


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    val_auc: float | None
    test_auc: float | None
    seconds: float
    steps: int = 0
    train_auc: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class TrainResult:
    model: Model
    log: list = field(default_factory=list)
    best_epoch: int | None = None

    @property
    def best(self) -> EpochRecord | None:
        for rec in self.log:
            if rec.epoch == self.best_epoch:
                return rec
        return None


def train_step(model: Model, opt: Adam, graphs: Sequence[Graph], alpha: float) -> float:
    params = model.parameters()
    with Tape() as tape:
        logits = model.forward(graphs, training=True)
        loss = weighted_bce(logits, [g.label for g in graphs], alpha)
    opt.step(tape.backward(loss, wrt=params.values()))
    return float(loss.data)


def train(config: ModelConfig, dataset: Dataset,
          on_epoch: Callable[[EpochRecord], None] | None = None,
          workers: int | None = None) -> TrainResult:
    """Mini-batch Adam training with model selection on validation ROC-AUC.

    When validation AUC is undefined (empty or single-class split) the last
    epoch is kept.
    """
    train_idx = dataset.splits["train"]
    if train_idx.size == 0:
        raise DataError("training split is empty")
    model = Model(config, dataset.node_cardinalities, dataset.edge_cardinalities)
    opt = Adam(model.parameters(), lr=config.learning_rate)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(2)[1])
    valid = dataset.subset("valid")
    test = dataset.subset("test")
    train_graphs = dataset.subset("train")

    result = TrainResult(model)
    best_auc, best_state = -np.inf, None
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(train_idx)
        losses, sizes = [], []
        for start in range(0, order.size, config.batch_size):
            batch = [dataset.graphs[i] for i in order[start:start + config.batch_size]]
            losses.append(train_step(model, opt, batch, config.alpha))
            sizes.append(len(batch))
        mean_loss = float(np.average(losses, weights=sizes))
        val_auc = evaluate_auc(model, valid, workers)
        test_auc = evaluate_auc(model, test, workers)
        train_auc = evaluate_auc(model, train_graphs, workers) if config.eval_train else None
        rec = EpochRecord(epoch, mean_loss, val_auc, test_auc,
                          time.perf_counter() - t0, len(losses), train_auc)
        result.log.append(rec)
        if on_epoch is not None:
            on_epoch(rec)
        if val_auc is not None and val_auc > best_auc:
            best_auc, best_state = val_auc, model.state_dict()
            result.best_epoch = epoch
    if best_state is not None:
        model.load_state_dict(best_state)
    elif result.log:
        result.best_epoch = result.log[-1].epoch
    return result
