"""Single-sample numerical operations.

These are the atomic forward operations on channel-last arrays. The layer
classes in ``layers`` run the same kernels with a leading batch axis; these
wrappers exist for direct use and for testing against independent oracles.
"""

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..errors import ShapeError


@dataclass
class PoolRecord:
    """Output of a 3x3 stride-2 max-pool plus what the decoder needs to undo it.

    ``indices`` holds, per pooled cell, the flat row*W+col position of the
    window maximum in the pre-pool grid.
    """

    pooled: np.ndarray
    indices: np.ndarray
    pre_pool_shape: tuple[int, int]


def conv2d(x: np.ndarray, kernels_: np.ndarray, biases: np.ndarray) -> np.ndarray:
    """3x3 convolution with zero same-padding on an (H, W, Cin) array."""
    if x.ndim != 3:
        raise ShapeError(f"expected (H, W, C) input, got shape {x.shape}")
    return kernels.conv3x3_forward(x[None], kernels_, biases)[0]


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def maxpool3x3s2(x: np.ndarray) -> PoolRecord:
    """Max over 3x3 windows at stride 2 on an (H, W, C) array, no padding."""
    if x.ndim != 3:
        raise ShapeError(f"expected (H, W, C) input, got shape {x.shape}")
    h, w, _ = x.shape
    if h < 3 or w < 3:
        raise ShapeError(f"input {h}x{w} smaller than the 3x3 pooling window")
    pooled, idx = kernels.pool3x3s2_argmax(x[None])
    return PoolRecord(pooled[0], idx[0], (h, w))


def max_unpool(pooled: np.ndarray, record: PoolRecord) -> np.ndarray:
    """Scatter pooled values back to their argmax cells; zeros elsewhere.

    When two windows recorded the same cell the later row-major window wins.
    """
    if pooled.shape != record.pooled.shape:
        raise ShapeError(
            f"pooled {pooled.shape} does not match record {record.pooled.shape}"
        )
    h, w = record.pre_pool_shape
    return kernels.unpool_scatter(pooled[None], record.indices[None], h, w)[0]


def dense(x: np.ndarray, weights: np.ndarray, biases: np.ndarray) -> np.ndarray:
    """Affine map weights @ x + biases for a length-n vector."""
    if x.ndim != 1 or weights.ndim != 2 or weights.shape[1] != x.shape[0]:
        raise ShapeError(f"weights {weights.shape} incompatible with input {x.shape}")
    return weights @ x + biases


def softmax2(logits: np.ndarray) -> np.ndarray:
    """Stabilized two-way softmax over the last axis (size 2)."""
    if logits.shape[-1] != 2:
        raise ShapeError(f"expected a trailing axis of 2 logits, got {logits.shape}")
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax2_xent(logits: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, float]:
    """Two-way softmax probabilities and mean cross-entropy over all locations.

    ``labels`` holds class indices (0/1) with the same shape as ``logits``
    minus its trailing axis.
    """
    labels = np.asarray(labels)
    if labels.shape != logits.shape[:-1]:
        raise ShapeError(f"labels {labels.shape} do not match logits {logits.shape}")
    with np.errstate(invalid="ignore", over="ignore"):
        z = logits - logits.max(axis=-1, keepdims=True)
        log_norm = np.log(np.exp(z).sum(axis=-1))
        log_p_true = np.take_along_axis(z, labels[..., None].astype(np.int64), axis=-1)[..., 0]
        loss = float(np.mean(log_norm - log_p_true))
        return softmax2(logits), loss


def softmax2_xent_backward(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Gradient of the mean cross-entropy w.r.t. the logits: (p - onehot) / n."""
    labels = np.asarray(labels)
    onehot = np.zeros_like(probs)
    np.put_along_axis(onehot, labels[..., None].astype(np.int64), 1.0, axis=-1)
    n = int(np.prod(labels.shape)) if labels.shape else 1
    return (probs - onehot) / n
