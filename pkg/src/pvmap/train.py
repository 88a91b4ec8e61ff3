"""Mini-batch SGD training for the patch networks."""

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NumericalError, ShapeError, ValidationError
from .models import MAP_OUTPUT, SCALAR_OUTPUT, forward_batch
from .nn.layers import Network
from .nn.ops import softmax2_xent, softmax2_xent_backward
from .nn.optimizer import SGDState, sgd_step

HALVE_EVERY_5 = "halve-every-5"
CONSTANT = "constant"


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 100
    learning_rate: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 0.0001
    epochs: int = 25
    schedule: str = HALVE_EVERY_5
    seed: int = 0


def classifier_train_config(**overrides) -> TrainConfig:
    """Canonical classifier recipe: 25 epochs, lr halved every 5."""
    return replace(TrainConfig(), **overrides)


def segmenter_train_config(**overrides) -> TrainConfig:
    """Canonical segmenter recipe: constant lr, heavier weight decay."""
    return replace(
        TrainConfig(weight_decay=0.0005, epochs=100, schedule=CONSTANT), **overrides
    )


def learning_rate_at(config: TrainConfig, epoch: int) -> float:
    """Learning rate for a 1-based epoch number."""
    if config.schedule == CONSTANT:
        return config.learning_rate
    if config.schedule == HALVE_EVERY_5:
        return config.learning_rate * 2.0 ** (-((epoch - 1) // 5))
    raise ValidationError(f"unknown schedule {config.schedule!r}")


@dataclass
class TrainReport:
    config: TrainConfig
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["epoch", "train_loss", "val_loss", "lr"])
            for i, (tl, vl, lr) in enumerate(zip(self.train_loss, self.val_loss, self.lr)):
                w.writerow([i + 1, repr(tl), repr(vl), repr(lr)])


def _as_input(pixels: np.ndarray, dtype) -> np.ndarray:
    if pixels.dtype == np.uint8:
        return pixels.astype(dtype) / dtype.type(255)
    return pixels.astype(dtype, copy=False)


def _check_labels(net: Network, labels: np.ndarray) -> None:
    kind = net.spec.output_kind
    if kind == SCALAR_OUTPUT and labels.ndim != 1:
        raise ValidationError(f"classifier expects scalar class labels, got {labels.shape}")
    if kind == MAP_OUTPUT and labels.ndim != 3:
        raise ValidationError(f"segmenter expects mask labels, got {labels.shape}")


def train(
    net: Network,
    pixels: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig,
    val_pixels: np.ndarray | None = None,
    val_labels: np.ndarray | None = None,
) -> TrainReport:
    """Train in place with shuffled mini-batches; deterministic per seed.

    ``pixels`` is (N, 41, 41, 3), uint8 or already-scaled floats in [0, 1];
    ``labels`` is (N,) classes for a classifier or (N, 41, 41) masks for a
    segmenter. Every short trailing batch is trained on.
    """
    n = len(pixels)
    if n == 0:
        raise ValidationError("empty training set")
    if len(labels) != n:
        raise ShapeError(f"{n} patches but {len(labels)} labels")
    _check_labels(net, labels)
    rng = np.random.default_rng(config.seed)
    params = net.parameters()
    state = SGDState(config.learning_rate, config.momentum, config.weight_decay)
    state.init_velocities([p.value for p in params])
    decay = [p.decay for p in params]
    report = TrainReport(config)
    for epoch in range(1, config.epochs + 1):
        state.learning_rate = learning_rate_at(config, epoch)
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            x = _as_input(pixels[batch], net.dtype)
            y = labels[batch]
            logits = net.forward(x)
            probs, loss = softmax2_xent(logits, y)
            if not math.isfinite(loss):
                raise NumericalError(
                    f"non-finite loss {loss} at epoch {epoch}, batch {start // config.batch_size}"
                )
            net.backward(softmax2_xent_backward(probs, y))
            sgd_step([p.value for p in params], [p.grad for p in params], state, decay)
            total += loss * len(batch)
        report.train_loss.append(total / n)
        if val_pixels is not None and len(val_pixels):
            report.val_loss.append(evaluate_loss(net, val_pixels, val_labels))
        else:
            report.val_loss.append(float("nan"))
        report.lr.append(state.learning_rate)
    return report


def evaluate_loss(
    net: Network, pixels: np.ndarray, labels: np.ndarray, batch_size: int = 256
) -> float:
    """Mean cross-entropy over a sample set, without touching weights."""
    _check_labels(net, labels)
    n = len(pixels)
    total = 0.0
    for start in range(0, n, batch_size):
        x = _as_input(pixels[start : start + batch_size], net.dtype)
        y = labels[start : start + batch_size]
        _, loss = softmax2_xent(net.forward(x), y)
        total += loss * len(x)
    return total / n


def predict_proba(
    net: Network, pixels: np.ndarray, batch_size: int = 256
) -> np.ndarray:
    """Panel probabilities for many patches, batched for throughput."""
    outs = []
    for start in range(0, len(pixels), batch_size):
        x = _as_input(pixels[start : start + batch_size], net.dtype)
        outs.append(forward_batch(net, x))
    return np.concatenate(outs, axis=0)
