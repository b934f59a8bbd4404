"""Mini-batch Adam training with validation-based early stopping."""

from __future__ import annotations

import logging
import math
import time
from collections.abc import Callable
from dataclasses import asdict, dataclass, field

import numpy as np

from ..corpus import Dataset
from ..errors import TrainingError
from ..metrics import evaluate_predictions
from .network import ClassifierNetwork, EncodedBatch

__all__ = ["Adam", "EpochRecord", "TrainConfig", "TrainingLog", "train_network", "validation_rank_metric"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and stopping settings.

    The default learning rate suits small networks trained from scratch;
    pass ``3e-5`` for the setting used with large pretrained encoders.
    """

    learning_rate: float = 1e-3
    batch_size: int = 16
    max_epochs: int = 100
    early_stopping_patience: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 1 or self.early_stopping_patience < 1:
            raise ValueError("training settings must all be positive")

    def to_dict(self) -> dict:
        return asdict(self)


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, skip: frozenset[str] = frozenset()):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.skip = skip
        self.m = {k: np.zeros_like(v) for k, v in params.items() if k not in skip}
        self.v = {k: np.zeros_like(v) for k, v in params.items() if k not in skip}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, m in self.m.items():
            g = grads[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_metric: float
    elapsed: float


@dataclass
class TrainingLog:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_metric: float = -math.inf
    stopped_early: bool = False

    def rows(self, with_time: bool = True) -> list[tuple]:
        if with_time:
            return [(r.epoch, r.train_loss, r.val_metric, r.elapsed) for r in self.epochs]
        return [(r.epoch, r.train_loss, r.val_metric) for r in self.epochs]

    def to_tsv(self) -> str:
        lines = ["epoch\ttrain_loss\tval_rank_metric\telapsed_s"]
        lines += [f"{e}\t{l:.6f}\t{m:.6f}\t{t:.2f}" for e, l, m, t in self.rows()]
        return "\n".join(lines) + "\n"


def validation_rank_metric(network: ClassifierNetwork, val: Dataset) -> float:
    """Ranking metric of the network's inference-time predictions on ``val``."""
    preds = network.predict(val.products)
    return evaluate_predictions(val.products, preds, network.taxonomy).rank_metric


def train_network(
    network: ClassifierNetwork,
    train: Dataset,
    val: Dataset,
    config: TrainConfig = TrainConfig(),
    evaluate: Callable[[ClassifierNetwork, Dataset], float] | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> tuple[ClassifierNetwork, TrainingLog]:
    """Train in place and restore the parameters of the best validation epoch.

    Stops after ``max_epochs`` or once ``early_stopping_patience`` epochs pass
    without a strict improvement of the validation metric.
    """
    if len(train) == 0:
        raise TrainingError("empty training set")
    evaluate = evaluate or validation_rank_metric
    encoded: EncodedBatch = network.encode(train.products)
    rng = np.random.default_rng(config.seed)
    opt = Adam(network.params, lr=config.learning_rate, skip=network.frozen)
    history = TrainingLog()
    best = network.copy_params()
    since_best = 0
    start = time.perf_counter()
    n = len(encoded)
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, config.batch_size):
            rows = order[lo : lo + config.batch_size]
            value, grads = network.loss_and_grads(encoded.take(rows))
            total += value * len(rows)
            opt.step(network.params, grads)
        metric = float(evaluate(network, val))
        if math.isnan(metric):
            raise TrainingError(
                f"validation metric is NaN at epoch {epoch} (train loss {total / n:.6g}, "
                f"{len(val)} validation items)"
            )
        record = EpochRecord(epoch, total / n, metric, time.perf_counter() - start)
        history.epochs.append(record)
        if on_epoch is not None:
            on_epoch(record)
        log.debug("epoch %d loss %.5f val %.5f", epoch, record.train_loss, metric)
        if metric > history.best_metric:
            history.best_metric = metric
            history.best_epoch = epoch
            best = network.copy_params()
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.early_stopping_patience:
                history.stopped_early = True
                break
    network.params.update(best)
    return network, history
