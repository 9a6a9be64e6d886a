"""Minibatch Adam training shared by the quantum and classical models."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DataError, TrainingError
from .optim import Adam

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 25
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def to_dict(self):
        return asdict(self)


def accuracy(model, dataset) -> float:
    if len(dataset) == 0:
        return float("nan")
    return float(np.mean(model.predict(dataset.X) == dataset.labels))


def train(model, dataset, config: TrainConfig, *, test=None, adversary=None):
    """Train ``model`` in place and return the per-epoch history.

    ``adversary(model, X, y) -> X_adv`` enables adversarial training: in each
    batch the last ``batch_size // 2`` examples are replaced by adversarial
    versions computed against the current parameters.
    """
    if len(dataset) == 0:
        raise DataError("empty training set")
    X, y = dataset.X, dataset.labels
    rng = np.random.default_rng(config.seed)
    opt = Adam(model.parameters(), config.lr, config.beta1, config.beta2, config.eps)
    history = []
    for epoch in range(config.epochs):
        perm = rng.permutation(len(y))
        losses = []
        for start in range(0, len(y), config.batch_size):
            idx = perm[start:start + config.batch_size]
            Xb, yb = X[idx], y[idx]
            if adversary is not None:
                half = len(idx) - len(idx) // 2
                Xb = Xb.copy()
                Xb[half:] = adversary(model, Xb[half:], yb[half:])
            loss, grads = model.loss_and_grads(Xb, yb)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise TrainingError(f"non-finite loss/gradient at epoch {epoch}, batch {start // config.batch_size}",
                                    {"epoch": epoch, "batch_start": start, "loss": loss,
                                     "recent_losses": losses[-5:]})
            opt.step(grads)
            losses.append(loss)
        row = {"epoch": epoch, "loss": float(np.mean(losses)), "train_accuracy": accuracy(model, dataset)}
        if test is not None:
            row["test_accuracy"] = accuracy(model, test)
        log.info("%s epoch %d: %s", getattr(model, "name", "model"), epoch, row)
        history.append(row)
    return history


def train_classical(model, dataset, config: TrainConfig, *, test=None):
    history = train(model, dataset, config, test=test)
    return model, history


def train_qvc(model, dataset, config: TrainConfig, *, test=None):
    history = train(model, dataset, config, test=test)
    return model, history
