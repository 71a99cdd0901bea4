"""Training runtime: Adam, the piecewise-constant LR schedule, train/eval loops.

The schedule starts at lr0 and divides by drop_factor at floor(0.375 * epochs)
and floor(0.75 * epochs) (drop applied at the start of those epochs).  Adam is
the standard bias-corrected form.  Runs are deterministic for a fixed seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import tensor as T
from .checkpoint import save_checkpoint
from .data import LabeledImageSet, batches
from .graph import ModelGraph, forward

DATASET_EPOCHS = {"cifar10": 200, "svhn": 60}


class TrainingDiverged(RuntimeError):
    """Raised when the loss goes non-finite; carries the offending epoch/step."""

    def __init__(self, epoch: int, step: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, step {step}")
        self.epoch = epoch
        self.step = step


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    epochs: int = 200
    drop_points: tuple[float, float] = (0.375, 0.75)
    drop_factor: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if not all(0.0 < p < 1.0 for p in self.drop_points):
            raise ValueError(f"drop points must lie strictly inside (0,1), "
                             f"got {self.drop_points}")
        if list(self.drop_points) != sorted(self.drop_points):
            raise ValueError("drop points must be increasing")
        if self.drop_factor <= 1.0:
            raise ValueError(f"drop factor must be > 1, got {self.drop_factor}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


def lr_at(epoch: int, config: TrainConfig) -> float:
    """Learning rate for a 0-based epoch index."""
    if epoch < 0 or epoch >= config.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {config.epochs})")
    lr = config.lr0
    for point in config.drop_points:
        if epoch >= math.floor(point * config.epochs):
            lr /= config.drop_factor
    return lr


@dataclass
class AdamState:
    """Per-parameter first/second moment buffers and the shared step count."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict[str, T.Tensor], state: AdamState, lr: float,
              config: TrainConfig) -> None:
    """One bias-corrected Adam update in place.  Missing gradients count as zero."""
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        g = p.grad if p.grad is not None else 0.0
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + config.eps)


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    lr: float
    train_loss: float
    test_error: Optional[float] = None


def _log_line(m: EpochMetrics) -> str:
    err = f"{m.test_error:.4f}" if m.test_error is not None else "-"
    return f"epoch {m.epoch}\tlr {m.lr:.8g}\ttrain_loss {m.train_loss:.6f}\ttest_error {err}"


def train(graph: ModelGraph, train_set: LabeledImageSet, config: TrainConfig,
          test_set: Optional[LabeledImageSet] = None,
          callbacks: Sequence[Callable[[EpochMetrics], None]] = (),
          mean: Optional[np.ndarray] = None, std: Optional[np.ndarray] = None,
          log_path=None, checkpoint_path=None,
          checkpoint_every: Optional[int] = None) -> list[EpochMetrics]:
    """Run the full training loop and return per-epoch metrics.

    Each epoch shuffles with a seed derived from (config.seed, epoch), so two
    runs with identical inputs produce identical logs.  A non-finite loss
    aborts with TrainingDiverged.  The final weights (and optionally per-epoch
    snapshots) go to `checkpoint_path`; metric lines append to `log_path`.
    """
    params = graph.parameters
    state = AdamState()
    history: list[EpochMetrics] = []
    log_fh = open(log_path, "a") if log_path else None
    try:
        for epoch in range(config.epochs):
            lr = lr_at(epoch, config)
            total_loss, seen = 0.0, 0
            for step, (x, labels) in enumerate(batches(
                    train_set, config.batch_size, shuffle=True,
                    seed=config.seed + epoch, mean=mean, std=std)):
                for p in params.values():
                    p.zero_grad()
                tape = T.Tape()
                logits = forward(graph, x, "train", tape)
                loss = T.softmax_cross_entropy(logits, labels, tape)
                loss_val = float(loss.data)
                if not math.isfinite(loss_val):
                    raise TrainingDiverged(epoch, step, loss_val)
                T.backward(tape, loss)
                for p in params.values():
                    if p.grad is None:
                        p.grad = np.zeros_like(p.data)
                adam_step(params, state, lr, config)
                bsz = x.data.shape[0]
                total_loss += loss_val * bsz
                seen += bsz
            test_error = (evaluate(graph, test_set, config.batch_size, mean, std)
                          if test_set is not None else None)
            metrics = EpochMetrics(epoch, lr, total_loss / seen, test_error)
            history.append(metrics)
            if log_fh:
                log_fh.write(_log_line(metrics) + "\n")
                log_fh.flush()
            for cb in callbacks:
                cb(metrics)
            if checkpoint_path and checkpoint_every and \
                    (epoch + 1) % checkpoint_every == 0:
                save_checkpoint(checkpoint_path, graph.named_states())
        if checkpoint_path:
            save_checkpoint(checkpoint_path, graph.named_states())
    finally:
        if log_fh:
            log_fh.close()
    return history


def evaluate(graph: ModelGraph, dataset: LabeledImageSet, batch_size: int = 64,
             mean: Optional[np.ndarray] = None,
             std: Optional[np.ndarray] = None) -> float:
    """Top-1 error rate in percent over the full dataset, eval-mode batch norm."""
    wrong = 0
    for x, labels in batches(dataset, batch_size, shuffle=False,
                             mean=mean, std=std):
        logits = forward(graph, x, "eval")
        wrong += int((logits.data.argmax(axis=1) != labels).sum())
    return 100.0 * wrong / len(dataset)
