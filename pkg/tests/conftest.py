import numpy as np
import pytest


def rel_errors(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-4)
    return np.abs(analytic - numeric) / denom


def fd_layer_check(layer, x: np.ndarray, seed: int = 0, step: float = 1e-5):
    """Max relative error between a layer's analytic gradients and central
    finite differences of the projected output sum(y * proj).

    Checks the input gradient and every parameter gradient. Inputs are
    float64; the caller picks seeds away from max-pool ties.
    """
    rng = np.random.default_rng(seed)
    y = layer.forward(x)
    proj = rng.standard_normal(y.shape)
    dx = layer.backward(np.ascontiguousarray(proj))

    def numeric_grad(arr, run):
        out = np.zeros_like(arr)
        flat = arr.reshape(-1)
        nf = out.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lp = float((run() * proj).sum())
            flat[i] = orig - step
            lm = float((run() * proj).sum())
            flat[i] = orig
            nf[i] = (lp - lm) / (2 * step)
        return out

    worst = rel_errors(dx, numeric_grad(x, lambda: layer.forward(x))).max()
    for p in layer.parameters():
        num = numeric_grad(p.value, lambda: layer.forward(x))
        worst = max(worst, rel_errors(p.grad, num).max())
    return float(worst)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
