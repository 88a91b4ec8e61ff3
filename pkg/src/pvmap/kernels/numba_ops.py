"""Numba-accelerated kernel primitives.

Same contracts as ``numpy_ops``. Convolution is an im2col GEMM fused per
sample so the column matrix stays cache-resident; index-based operations
visit cells in the same order as the numpy fallback, so those agree
bit-for-bit (convolution results agree to floating-point rounding).
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _fill_col(xb, col):
    """Unfold zero-padded 3x3 windows of one (H, W, C) sample into
    (H*W, 9C), columns ordered (ky, kx, c)."""
    h, w, c = xb.shape
    for i in range(h):
        for ky in range(3):
            r = i + ky - 1
            base = ky * 3 * c
            if r < 0 or r >= h:
                for j in range(w):
                    row = i * w + j
                    for t in range(3 * c):
                        col[row, base + t] = 0.0
            else:
                for j in range(w):
                    row = i * w + j
                    for kx in range(3):
                        sc = j - 1 + kx
                        dc = base + kx * c
                        if sc < 0 or sc >= w:
                            for t in range(c):
                                col[row, dc + t] = 0.0
                        else:
                            for t in range(c):
                                col[row, dc + t] = xb[r, sc, t]


@njit(cache=True, nogil=True)
def conv_fwd(x, k2d, bias):
    n, h, w, c = x.shape
    co = k2d.shape[1]
    y = np.empty((n, h, w, co), dtype=x.dtype)
    y2 = y.reshape(n, h * w, co)
    col = np.empty((h * w, 9 * c), dtype=x.dtype)
    for b in range(n):
        _fill_col(x[b], col)
        res = np.dot(col, k2d)
        for p in range(h * w):
            for o in range(co):
                y2[b, p, o] = res[p, o] + bias[o]
    return y


@njit(cache=True, nogil=True)
def conv_bwd(x, k2d_back, dy):
    n, h, w, c = x.shape
    co = dy.shape[3]
    dx = np.empty((n, h, w, c), dtype=x.dtype)
    dx2 = dx.reshape(n, h * w, c)
    dy2 = dy.reshape(n, h * w, co)
    col_dy = np.empty((h * w, 9 * co), dtype=x.dtype)
    col_x = np.empty((h * w, 9 * c), dtype=x.dtype)
    dkt = np.zeros((co, 9 * c), dtype=x.dtype)
    db = np.zeros(co, dtype=x.dtype)
    dyt = np.empty((co, h * w), dtype=x.dtype)
    for b in range(n):
        _fill_col(dy[b], col_dy)
        dx2[b] = np.dot(col_dy, k2d_back)
        _fill_col(x[b], col_x)
        for o in range(co):
            acc = x.dtype.type(0)
            for p in range(h * w):
                v = dy2[b, p, o]
                dyt[o, p] = v
                acc += v
            db[o] += acc
        dkt += np.dot(dyt, col_x)
    return dx, np.ascontiguousarray(dkt.T), db


@njit(cache=True, nogil=True)
def pool3x3s2_argmax(x):
    n, h, w, c = x.shape
    ho = (h - 3) // 2 + 1
    wo = (w - 3) // 2 + 1
    pooled = np.empty((n, ho, wo, c), dtype=x.dtype)
    idx = np.empty((n, ho, wo, c), dtype=np.int64)
    for b in range(n):
        for i in range(ho):
            for j in range(wo):
                for ch in range(c):
                    best = x[b, 2 * i, 2 * j, ch]
                    bi = 2 * i
                    bj = 2 * j
                    for ky in range(3):
                        for kx in range(3):
                            v = x[b, 2 * i + ky, 2 * j + kx, ch]
                            if v > best:  # strict: first row-major max wins ties
                                best = v
                                bi = 2 * i + ky
                                bj = 2 * j + kx
                    pooled[b, i, j, ch] = best
                    idx[b, i, j, ch] = bi * w + bj
    return pooled, idx


@njit(cache=True, nogil=True)
def pool3x3s2_backward(dy, idx, h, w):
    n, ho, wo, c = dy.shape
    out = np.zeros((n, h, w, c), dtype=dy.dtype)
    for b in range(n):
        for i in range(ho):
            for j in range(wo):
                for ch in range(c):
                    p = idx[b, i, j, ch]
                    out[b, p // w, p % w, ch] += dy[b, i, j, ch]
    return out


@njit(cache=True, nogil=True)
def unpool_scatter(pooled, idx, h, w):
    n, ho, wo, c = pooled.shape
    out = np.zeros((n, h, w, c), dtype=pooled.dtype)
    for b in range(n):
        for i in range(ho):
            for j in range(wo):
                for ch in range(c):
                    p = idx[b, i, j, ch]
                    out[b, p // w, p % w, ch] = pooled[b, i, j, ch]
    return out


@njit(cache=True, nogil=True)
def unpool_backward(dout, idx):
    n, h, w, c = dout.shape
    ho = idx.shape[1]
    wo = idx.shape[2]
    g = np.empty((n, ho, wo, c), dtype=dout.dtype)
    for b in range(n):
        for i in range(ho):
            for j in range(wo):
                for ch in range(c):
                    p = idx[b, i, j, ch]
                    g[b, i, j, ch] = dout[b, p // w, p % w, ch]
    return g


@njit(cache=True, nogil=True)
def unpool_winners(idx, h, w):
    n, ho, wo, c = idx.shape
    cell_last = np.full((n, h * w, c), -1, dtype=np.int64)
    for b in range(n):
        for i in range(ho):
            for j in range(wo):
                for ch in range(c):
                    cell_last[b, idx[b, i, j, ch], ch] = i * wo + j
    winners = np.empty((n, ho, wo, c), dtype=np.bool_)
    for b in range(n):
        for i in range(ho):
            for j in range(wo):
                for ch in range(c):
                    winners[b, i, j, ch] = cell_last[b, idx[b, i, j, ch], ch] == i * wo + j
    return winners


@njit(cache=True, nogil=True)
def _label_pass(mask, labels, parent):
    h, w = mask.shape
    nxt = 0
    for r in range(h):
        for c in range(w):
            if mask[r, c] == 0:
                continue
            # provisional roots of already-scanned 8-neighbours
            best = -1
            for k in range(4):
                if k == 0:
                    rr, cc = r - 1, c - 1
                elif k == 1:
                    rr, cc = r - 1, c
                elif k == 2:
                    rr, cc = r - 1, c + 1
                else:
                    rr, cc = r, c - 1
                if rr < 0 or cc < 0 or cc >= w:
                    continue
                if mask[rr, cc] == 0:
                    continue
                q = labels[rr, cc]
                while parent[q] != q:
                    q = parent[q]
                if best == -1 or q < best:
                    best = q
            if best == -1:
                labels[r, c] = nxt
                parent[nxt] = nxt
                nxt += 1
            else:
                labels[r, c] = best
                for k in range(4):
                    if k == 0:
                        rr, cc = r - 1, c - 1
                    elif k == 1:
                        rr, cc = r - 1, c
                    elif k == 2:
                        rr, cc = r - 1, c + 1
                    else:
                        rr, cc = r, c - 1
                    if rr < 0 or cc < 0 or cc >= w:
                        continue
                    if mask[rr, cc] == 0:
                        continue
                    q = labels[rr, cc]
                    while parent[q] != q:
                        q = parent[q]
                    if q != best:
                        parent[q] = best
    return nxt


@njit(cache=True, nogil=True)
def label_components(mask):
    h, w = mask.shape
    labels = np.zeros((h, w), dtype=np.int32)
    parent = np.empty(h * w // 2 + 2, dtype=np.int32)
    nxt = _label_pass(mask, labels, parent)
    # renumber roots 1..count by first row-major appearance
    remap = np.zeros(nxt, dtype=np.int32)
    count = 0
    for r in range(h):
        for c in range(w):
            if mask[r, c] == 0:
                labels[r, c] = 0
                continue
            q = labels[r, c]
            while parent[q] != q:
                q = parent[q]
            if remap[q] == 0:
                count += 1
                remap[q] = count
            labels[r, c] = remap[q]
    return labels, count
