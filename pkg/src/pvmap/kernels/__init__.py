"""Hot numeric kernels with selectable backend.

The primitives (fused im2col convolution, pooling argmax, index
scatter/gather, component labeling) come in two flavors: numba ``@njit``
loops and a pure-numpy fallback. Selection is via the ``PVMAP_BACKEND``
env variable:

    PVMAP_BACKEND=auto    use numba if importable, else numpy (default)
    PVMAP_BACKEND=numba   require numba, raise if unavailable
    PVMAP_BACKEND=numpy   force the pure-numpy path

Index-based kernels produce bit-identical outputs across backends (same
orderings, same tie rules); convolution agrees to floating-point rounding.
Runs are bit-reproducible within a backend either way.
``benchmarks/bench_kernels.py`` compares the two.
"""

import os
import warnings

import numpy as np

from ..errors import ShapeError
from . import numpy_ops

_requested = os.environ.get("PVMAP_BACKEND", "auto").strip().lower()
if _requested not in ("auto", "numba", "numpy"):
    raise ValueError(f"PVMAP_BACKEND must be auto|numba|numpy, got {_requested!r}")

if _requested == "numpy":
    _impl = numpy_ops
    _backend = "numpy"
else:
    try:
        from . import numba_ops as _impl

        _backend = "numba"
    except ImportError:
        if _requested == "numba":
            raise
        warnings.warn("numba unavailable, falling back to numpy kernels")
        _impl = numpy_ops
        _backend = "numpy"


def backend_name() -> str:
    """Name of the active kernel backend ('numba' or 'numpy')."""
    return _backend


pool3x3s2_argmax = _impl.pool3x3s2_argmax
pool3x3s2_backward = _impl.pool3x3s2_backward
unpool_scatter = _impl.unpool_scatter
unpool_backward = _impl.unpool_backward
unpool_winners = _impl.unpool_winners
label_components = _impl.label_components


def conv3x3_forward(x: np.ndarray, kernels: np.ndarray, biases: np.ndarray) -> np.ndarray:
    """Zero same-padded 3x3 stride-1 convolution.

    x: (N, H, W, Cin), kernels: (3, 3, Cin, Cout), biases: (Cout,).
    Returns (N, H, W, Cout).
    """
    n, h, w, cin = x.shape
    if kernels.shape[:3] != (3, 3, cin):
        raise ShapeError(
            f"kernels {kernels.shape} do not fit input with {cin} channels"
        )
    cout = kernels.shape[3]
    if biases.shape != (cout,):
        raise ShapeError(f"biases {biases.shape} != ({cout},)")
    k2d = np.ascontiguousarray(kernels.reshape(9 * cin, cout))
    return _impl.conv_fwd(np.ascontiguousarray(x), k2d, np.ascontiguousarray(biases))


def conv3x3_backward(
    x: np.ndarray, kernels: np.ndarray, dy: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv3x3_forward: returns (dx, dkernels, dbiases).

    dx is the full correlation of dy with the spatially flipped kernels.
    """
    n, h, w, cin = x.shape
    cout = kernels.shape[3]
    kt = kernels[::-1, ::-1].transpose(0, 1, 3, 2)  # (3, 3, Cout, Cin)
    k2d_back = np.ascontiguousarray(kt).reshape(9 * cout, cin)
    dx, dk2d, db = _impl.conv_bwd(
        np.ascontiguousarray(x), k2d_back, np.ascontiguousarray(dy)
    )
    return dx, dk2d.reshape(3, 3, cin, cout), db
