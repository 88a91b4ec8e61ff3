"""Pure-numpy kernel primitives.

Fallback implementations of the hot inner loops. The numba backend in
``numba_ops`` mirrors these signatures; index-based operations (pooling,
scatter/gather, labeling) agree bit-for-bit, convolution agrees to
floating-point rounding (the GEMM blocking differs).

Array layout is channel-last throughout: activations are (N, H, W, C).
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided


def _im2col3x3(x: np.ndarray) -> np.ndarray:
    """Unfold zero-padded 3x3 stride-1 windows of (N, H, W, C) into
    (N*H*W, 9*C) with columns ordered (ky, kx, c)."""
    n, h, w, c = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    s = xp.strides
    win = as_strided(
        xp,
        shape=(n, h, w, 3, 3, c),
        strides=(s[0], s[1], s[2], s[1], s[2], s[3]),
    )
    return win.reshape(n * h * w, 9 * c)


def conv_fwd(x: np.ndarray, k2d: np.ndarray, bias: np.ndarray) -> np.ndarray:
    n, h, w, c = x.shape
    co = k2d.shape[1]
    y = _im2col3x3(x) @ k2d
    y += bias
    return y.reshape(n, h, w, co)


def conv_bwd(
    x: np.ndarray, k2d_back: np.ndarray, dy: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n, h, w, c = x.shape
    co = dy.shape[3]
    dx = (_im2col3x3(dy) @ k2d_back).reshape(n, h, w, c)
    dy_flat = dy.reshape(n * h * w, co)
    dk2d = _im2col3x3(x).T @ dy_flat
    db = dy_flat.sum(axis=0)
    return dx, dk2d, db


def pool3x3s2_argmax(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Max over 3x3 windows at stride 2, no padding.

    Returns (pooled (N,Ho,Wo,C), idx (N,Ho,Wo,C) int64) where idx is the
    flat row*W+col position of each window maximum in the input grid.
    Ties go to the first cell in the window's row-major scan.
    """
    n, h, w, c = x.shape
    ho = (h - 3) // 2 + 1
    wo = (w - 3) // 2 + 1
    s = x.strides
    win = as_strided(
        x,
        shape=(n, ho, wo, 3, 3, c),
        strides=(s[0], 2 * s[1], 2 * s[2], s[1], s[2], s[3]),
    ).reshape(n, ho, wo, 9, c)
    k = win.argmax(axis=3)
    pooled = np.take_along_axis(win, k[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    rows = 2 * np.arange(ho, dtype=np.int64)[None, :, None, None] + k // 3
    cols = 2 * np.arange(wo, dtype=np.int64)[None, None, :, None] + k % 3
    idx = rows * w + cols
    return np.ascontiguousarray(pooled), idx


def pool3x3s2_backward(dy: np.ndarray, idx: np.ndarray, h: int, w: int) -> np.ndarray:
    """Scatter-add pooled-output gradients back to their argmax cells."""
    n, ho, wo, c = dy.shape
    out = np.zeros(n * h * w * c, dtype=dy.dtype)
    gflat = _global_flat(idx, n, h, w, c)
    np.add.at(out, gflat.ravel(), dy.ravel())
    return out.reshape(n, h, w, c)


def unpool_scatter(pooled: np.ndarray, idx: np.ndarray, h: int, w: int) -> np.ndarray:
    """Write each pooled value at its recorded argmax cell, zeros elsewhere.

    On colliding indices the later row-major window wins (numpy fancy
    assignment applies indices in order, last one sticks).
    """
    n, ho, wo, c = pooled.shape
    out = np.zeros(n * h * w * c, dtype=pooled.dtype)
    gflat = _global_flat(idx, n, h, w, c)
    out[gflat.ravel()] = pooled.ravel()
    return out.reshape(n, h, w, c)


def unpool_backward(dout: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Gather expanded-map gradients at the recorded argmax cells."""
    n, h, w, c = dout.shape
    flat = dout.reshape(n, h * w, c)
    n_i, ho, wo, c_i = idx.shape
    g = np.take_along_axis(flat, idx.reshape(n, ho * wo, c), axis=1)
    return g.reshape(n, ho, wo, c)


def unpool_winners(idx: np.ndarray, h: int, w: int) -> np.ndarray:
    """Which windows' scatter writes survive the last-writer-wins rule.

    Overwritten windows do not influence the expanded map, so their
    gradient contribution must be dropped for the backward gather to be
    the exact adjoint of the scatter.
    """
    n, ho, wo, c = idx.shape
    ordinals = np.broadcast_to(
        (np.arange(ho, dtype=np.int64)[:, None] * wo + np.arange(wo, dtype=np.int64))[
            None, :, :, None
        ],
        idx.shape,
    )
    gflat = _global_flat(idx, n, h, w, c).ravel()
    cell_last = np.full(n * h * w * c, -1, dtype=np.int64)
    cell_last[gflat] = ordinals.ravel()
    return (cell_last[gflat] == ordinals.ravel()).reshape(idx.shape)


def _global_flat(idx: np.ndarray, n: int, h: int, w: int, c: int) -> np.ndarray:
    offs_n = (np.arange(n, dtype=np.int64) * (h * w)).reshape(n, 1, 1, 1)
    offs_c = np.arange(c, dtype=np.int64).reshape(1, 1, 1, c)
    return (idx + offs_n) * c + offs_c


def label_components(mask: np.ndarray) -> tuple[np.ndarray, int]:
    """Label 8-connected components of a binary (H, W) mask.

    Returns (labels int32, count); labels are 1..count in order of each
    component's first pixel in a row-major scan, 0 for background.
    """
    h, w = mask.shape
    labels = np.zeros((h, w), dtype=np.int32)
    count = 0
    for r0 in range(h):
        for c0 in range(w):
            if mask[r0, c0] == 0 or labels[r0, c0] != 0:
                continue
            count += 1
            stack = [(r0, c0)]
            labels[r0, c0] = count
            while stack:
                r, c = stack.pop()
                for rr in range(max(r - 1, 0), min(r + 2, h)):
                    for cc in range(max(c - 1, 0), min(c + 2, w)):
                        if mask[rr, cc] != 0 and labels[rr, cc] == 0:
                            labels[rr, cc] = count
                            stack.append((rr, cc))
    return labels, count
