"""Batched layers with cached forward traces for backpropagation.

All activations are (N, H, W, C) or (N, features). Each layer owns its
parameters and writes gradients in ``backward``; pooling layers publish a
PoolRecord that a paired unpooling layer consumes on the decoder side.
"""

import numpy as np

from .. import kernels
from ..errors import ShapeError
from .ops import PoolRecord


class Param:
    """A learnable array, its gradient slot, and whether weight decay applies."""

    def __init__(self, name: str, value: np.ndarray, decay: bool):
        self.name = name
        self.value = value
        self.grad = None
        self.decay = decay


class Layer:
    name = "layer"

    def parameters(self) -> list[Param]:
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def clone(self, pool_map: dict) -> "Layer":
        """Copy with shared parameters but private forward caches."""
        import copy

        c = copy.copy(self)
        for attr in ("_x", "_mask", "_shape", "_indices", "_winners", "_pre_shape", "record"):
            if hasattr(c, attr):
                setattr(c, attr, None)
        return c


def _he_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Conv3x3(Layer):
    """Zero same-padded 3x3 convolution."""

    def __init__(self, name, cin, cout, rng, dtype):
        self.name = name
        self.cin = cin
        self.cout = cout
        self.kernels = Param(
            f"{name}.kernels", _he_uniform(rng, (3, 3, cin, cout), 9 * cin, dtype), True
        )
        self.biases = Param(f"{name}.biases", np.zeros(cout, dtype=dtype), False)
        self._x = None

    def parameters(self):
        return [self.kernels, self.biases]

    def forward(self, x):
        if x.ndim != 4 or x.shape[3] != self.cin:
            raise ShapeError(f"{self.name}: expected (N,H,W,{self.cin}), got {x.shape}")
        self._x = x
        return kernels.conv3x3_forward(x, self.kernels.value, self.biases.value)

    def backward(self, dy):
        dx, dk, db = kernels.conv3x3_backward(self._x, self.kernels.value, dy)
        self.kernels.grad = dk
        self.biases.grad = db
        return dx


class ReLU(Layer):
    name = "relu"

    def __init__(self):
        self._mask = None

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0)

    def backward(self, dy):
        return np.where(self._mask, dy, 0)


class MaxPool3x3s2(Layer):
    """3x3 stride-2 max pooling; records argmax indices for the decoder."""

    name = "maxpool"

    def __init__(self):
        self.record: PoolRecord | None = None

    def forward(self, x):
        n, h, w, c = x.shape
        if h < 3 or w < 3:
            raise ShapeError(f"input {h}x{w} smaller than the 3x3 pooling window")
        pooled, idx = kernels.pool3x3s2_argmax(x)
        self.record = PoolRecord(pooled, idx, (h, w))
        return pooled

    def backward(self, dy):
        h, w = self.record.pre_pool_shape
        return kernels.pool3x3s2_backward(dy, self.record.indices, h, w)

    def clone(self, pool_map):
        c = MaxPool3x3s2()
        pool_map[id(self)] = c
        return c


class MaxUnpool(Layer):
    """Expands a feature map by scattering into the paired pool's argmax cells.

    When the incoming map is wider than the recorded one (the Fig.-5 widths
    leave the last decoder stage at twice its paired encoder width), the
    recorded per-channel indices are reused cyclically: channel c follows
    record channel c mod C_rec. Channel counts must divide evenly.
    """

    name = "unpool"

    def __init__(self, source: MaxPool3x3s2):
        self.source = source
        self._indices = None
        self._winners = None
        self._pre_shape = None

    def forward(self, x):
        rec = self.source.record
        if rec is None:
            raise ShapeError(f"{self.name}: paired pooling layer has not run")
        if x.shape[:3] != rec.pooled.shape[:3]:
            raise ShapeError(f"{self.name}: input {x.shape} != record {rec.pooled.shape}")
        c_in, c_rec = x.shape[3], rec.pooled.shape[3]
        if c_in % c_rec:
            raise ShapeError(
                f"{self.name}: {c_in} channels not a multiple of recorded {c_rec}"
            )
        idx = rec.indices if c_in == c_rec else np.tile(rec.indices, (1, 1, 1, c_in // c_rec))
        self._indices = idx
        self._winners = None
        self._pre_shape = rec.pre_pool_shape
        h, w = rec.pre_pool_shape
        return kernels.unpool_scatter(x, idx, h, w)

    def backward(self, dy):
        # only surviving writers may receive gradient: overwritten windows
        # never reached the output under the last-writer-wins rule
        h, w = self._pre_shape
        if self._winners is None:
            self._winners = kernels.unpool_winners(self._indices, h, w)
        g = kernels.unpool_backward(dy, self._indices)
        return np.where(self._winners, g, 0)

    def clone(self, pool_map):
        c = MaxUnpool(pool_map[id(self.source)])
        return c


class Flatten(Layer):
    """(N, H, W, C) -> (N, H*W*C) in row-major (H, W, C) order."""

    name = "flatten"

    def __init__(self):
        self._shape = None

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


class Dense(Layer):
    """Fully connected affine layer on (N, n_in) batches."""

    def __init__(self, name, n_in, n_out, rng, dtype):
        self.name = name
        self.n_in = n_in
        self.weights = Param(
            f"{name}.weights", _he_uniform(rng, (n_out, n_in), n_in, dtype), True
        )
        self.biases = Param(f"{name}.biases", np.zeros(n_out, dtype=dtype), False)
        self._x = None

    def parameters(self):
        return [self.weights, self.biases]

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeError(f"{self.name}: expected (N,{self.n_in}), got {x.shape}")
        self._x = x
        return x @ self.weights.value.T + self.biases.value

    def backward(self, dy):
        self.weights.grad = dy.T @ self._x
        self.biases.grad = dy.sum(axis=0)
        return dy @ self.weights.value


class Conv1x1(Layer):
    """Per-pixel affine map: the dense classifier applied at every location."""

    def __init__(self, name, cin, cout, rng, dtype):
        self.name = name
        self.cin = cin
        self.weights = Param(
            f"{name}.weights", _he_uniform(rng, (cin, cout), cin, dtype), True
        )
        self.biases = Param(f"{name}.biases", np.zeros(cout, dtype=dtype), False)
        self._x = None

    def parameters(self):
        return [self.weights, self.biases]

    def forward(self, x):
        if x.ndim != 4 or x.shape[3] != self.cin:
            raise ShapeError(f"{self.name}: expected (N,H,W,{self.cin}), got {x.shape}")
        self._x = x
        return x @ self.weights.value + self.biases.value

    def backward(self, dy):
        flat_x = self._x.reshape(-1, self.cin)
        flat_dy = dy.reshape(-1, dy.shape[-1])
        self.weights.grad = flat_x.T @ flat_dy
        self.biases.grad = flat_dy.sum(axis=0)
        return dy @ self.weights.value.T


class Network:
    """An ordered layer stack with a single cached forward trace."""

    def __init__(self, layers: list[Layer], dtype=np.float32):
        self.layers = layers
        self.dtype = np.dtype(dtype)
        self._trace_live = False

    def parameters(self) -> list[Param]:
        out = []
        for layer in self.layers:
            out.extend(layer.parameters())
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=self.dtype)
        for layer in self.layers:
            x = layer.forward(x)
        self._trace_live = True
        return x

    def backward(self, dlogits: np.ndarray) -> None:
        """Fill every parameter's gradient from the cached forward trace."""
        if not self._trace_live:
            raise ShapeError("backward called without a completed forward pass")
        dy = np.ascontiguousarray(dlogits, dtype=self.dtype)
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        self._trace_live = False

    def inference_clone(self) -> "Network":
        """A network sharing this one's parameters but no forward caches,
        so concurrent forward passes stay independent."""
        pool_map: dict = {}
        net = Network([layer.clone(pool_map) for layer in self.layers], self.dtype)
        if hasattr(self, "spec"):
            net.spec = self.spec
        return net
