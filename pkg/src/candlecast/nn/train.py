"""Mini-batch training with SGD or Adam."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import ContractError, TrainingDiverged
from .layers import softmax_cross_entropy
from .network import Network

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 50
    optimizer: str = "adam"  # or "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    shuffle_seed: int = 0
    dropout_seed: int = 0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ContractError(f"learning rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ContractError(f"batch size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ContractError(f"epochs must be >= 0, got {self.epochs}")
        if self.optimizer not in ("adam", "sgd"):
            raise ContractError(f"unknown optimizer {self.optimizer!r}")


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for k, p in params.items():
            p -= p.dtype.type(self.lr) * grads[k]


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = self.lr * np.sqrt(1 - b2**self.t) / (1 - b1**self.t)
        for k, p in params.items():
            g = grads[k]
            if k not in self.m:
                self.m[k] = np.zeros_like(p)
                self.v[k] = np.zeros_like(p)
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= (lr_t * m / (np.sqrt(v) + self.eps)).astype(p.dtype)


@dataclass
class TrainTrace:
    loss: list[float] = field(default_factory=list)
    accuracy: list[float] = field(default_factory=list)  # training-mode, averaged over batches


def train(
    network: Network,
    x: np.ndarray,
    y: np.ndarray,
    config: TrainConfig,
    on_epoch: Callable[[int, TrainTrace], bool] | None = None,
) -> TrainTrace:
    """Fit ``network`` in place on images ``x`` (N, H, W, C) and labels ``y``.

    Deterministic for fixed seeds: the shuffle order comes from
    ``shuffle_seed`` and every dropout mask from ``dropout_seed``.
    Raises TrainingDiverged naming the first layer to produce NaN/Inf.
    ``on_epoch(epoch, trace)`` runs after each epoch; returning True stops early.
    """
    n = len(x)
    if n < 1 or len(y) != n:
        raise ContractError(f"need >= 1 sample with a label each, got {n} images and {len(y)} labels")
    y = np.asarray(y, dtype=np.int64)
    opt = Adam(config.learning_rate, config.beta1, config.beta2, config.eps) if config.optimizer == "adam" else SGD(config.learning_rate)
    rng = np.random.default_rng(config.shuffle_seed)
    network.seed_dropout(config.dropout_seed)
    trace = TrainTrace()
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total_loss = 0.0
        correct = 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            logits = network.forward(x[idx], training=True, check_finite=True)
            loss, grad = softmax_cross_entropy(logits, y[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(network.layers[-1].name, f"loss {loss} at epoch {epoch}")
            network.backward(grad)
            opt.step(network.named_params(), network.named_grads())
            total_loss += float(loss) * len(idx)
            correct += int((logits.argmax(axis=1) == y[idx]).sum())
        trace.loss.append(total_loss / n)
        trace.accuracy.append(correct / n)
        log.debug("epoch %d loss %.4f acc %.3f", epoch + 1, trace.loss[-1], trace.accuracy[-1])
        if on_epoch is not None and on_epoch(epoch + 1, trace):
            break
    return trace
