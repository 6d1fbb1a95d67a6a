"""Deterministic minibatch training loop.

Single-threaded; a given (network seed, data, loss, optimizer, shuffle
seed) tuple reproduces the identical parameter trajectory bit for bit.
Tracks the checkpoint with the highest test accuracy and, optionally, a
per-epoch trace of the last layer's weights.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .analysis import WeightTrace
from .datasets import Dataset
from .losses import LossSpec, loss_on_logits
from .nn import Network


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_accuracy: float
    test_accuracy: Optional[float]


@dataclass
class TrainResult:
    net: Network
    best_net: Network
    best_accuracy: float
    history: List[EpochStats] = field(default_factory=list)
    trace: Optional[WeightTrace] = None
    clamp_count: int = 0


def accuracy(net: Network, ds: Dataset) -> float:
    return float((net.predict(ds.features) == ds.labels).mean())


def mean_loss(net: Network, ds: Dataset, spec: LossSpec) -> float:
    logits, _ = net.forward(ds.features)
    values, _, _ = loss_on_logits(logits, ds.labels, spec)
    return float(values.mean())


def train(net: Network, train_ds: Dataset, spec: LossSpec, optimizer, epochs: int,
          batch_size: int = 128, seed: int = 0, test_ds: Optional[Dataset] = None,
          record_trace: bool = False) -> TrainResult:
    """Minibatch-train `net` in place and return the run's bookkeeping.

    Minimizes the batch-mean loss. The "best" network snapshot maximizes
    test accuracy (train accuracy when no test set is given); ties keep
    the earlier snapshot. With record_trace, the last layer's weights are
    snapshotted at init and after every epoch.
    """
    rng = np.random.default_rng(seed)
    n = train_ds.n
    batch_size = min(batch_size, n)
    trace_snaps = [net.layers[-1].weights.copy()] if record_trace else None

    def eval_selection() -> float:
        return accuracy(net, test_ds if test_ds is not None else train_ds)

    result = TrainResult(net=net, best_net=net.copy(), best_accuracy=eval_selection())
    clamps = 0
    for epoch in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            sel = order[start:start + batch_size]
            batch = train_ds.features[sel]
            logits, cache = net.forward(batch)
            values, dlogits, c = loss_on_logits(logits, train_ds.labels[sel], spec)
            clamps += c
            grads = net.backward(cache, dlogits / sel.size)
            optimizer.step(net, grads)
            epoch_loss += values.sum()
        if trace_snaps is not None:
            trace_snaps.append(net.layers[-1].weights.copy())
        train_acc = accuracy(net, train_ds)
        test_acc = accuracy(net, test_ds) if test_ds is not None else None
        selection_acc = test_acc if test_ds is not None else train_acc
        result.history.append(
            EpochStats(epoch, float(epoch_loss / n), train_acc, test_acc)
        )
        if selection_acc > result.best_accuracy:
            result.best_accuracy = selection_acc
            result.best_net = net.copy()
    result.trace = WeightTrace(trace_snaps) if trace_snaps is not None else None
    result.clamp_count = clamps
    return result
