"""Compiled inner loops for online back-propagation.

The kernel handles the input-hidden-output topology used by the classifier;
deeper nets go through the NumPy path in :mod:`facexpr.mlp`.  Both paths
share :func:`permute` so the per-epoch sample order is identical.
"""
import numpy as np
from numba import njit

_MULT = np.uint64(2685821657736338717)


@njit(cache=True)
def xorshift_next(state):
    """One xorshift64* step; returns (new_state, output)."""
    x = state
    x ^= x >> np.uint64(12)
    x ^= x << np.uint64(25)
    x ^= x >> np.uint64(27)
    return x, x * _MULT


@njit(cache=True)
def permute(order, state):
    """In-place Fisher-Yates shuffle driven by xorshift64*."""
    for i in range(order.shape[0] - 1, 0, -1):
        state, r = xorshift_next(state)
        j = np.int64(r % np.uint64(i + 1))
        tmp = order[i]
        order[i] = order[j]
        order[j] = tmp
    return state


@njit(cache=True)
def _sigmoid(t):
    if t >= 0.0:
        return 1.0 / (1.0 + np.exp(-t))
    e = np.exp(t)
    return e / (1.0 + e)


@njit(cache=True)
def train_two_layer(w1, b1, w2, b2, x, targets, rate, max_epochs, target_error, state, history):
    """Online gradient descent on squared error, updating weights in place.

    Returns (epochs_run, final_state).  ``history[e]`` receives the mean
    squared error of epoch ``e`` accumulated from pre-update outputs.
    """
    n, n_in = x.shape
    n_hidden = w1.shape[0]
    n_out = w2.shape[0]
    order = np.arange(n)
    h = np.empty(n_hidden)
    y = np.empty(n_out)
    d2 = np.empty(n_out)
    d1 = np.empty(n_hidden)
    epochs = 0
    for epoch in range(max_epochs):
        state = permute(order, state)
        sse = 0.0
        for k in range(n):
            s = order[k]
            xs = x[s]
            for i in range(n_hidden):
                acc = b1[i]
                for j in range(n_in):
                    acc += w1[i, j] * xs[j]
                h[i] = _sigmoid(acc)
            for i in range(n_out):
                acc = b2[i]
                for j in range(n_hidden):
                    acc += w2[i, j] * h[j]
                y[i] = _sigmoid(acc)
            for i in range(n_out):
                err = y[i] - targets[s, i]
                sse += err * err
                d2[i] = err * y[i] * (1.0 - y[i])
            for j in range(n_hidden):
                acc = 0.0
                for i in range(n_out):
                    acc += w2[i, j] * d2[i]
                d1[j] = acc * h[j] * (1.0 - h[j])
            for i in range(n_out):
                g = rate * d2[i]
                for j in range(n_hidden):
                    w2[i, j] -= g * h[j]
                b2[i] -= g
            for i in range(n_hidden):
                g = rate * d1[i]
                for j in range(n_in):
                    w1[i, j] -= g * xs[j]
                b1[i] -= g
        mse = sse / (n * n_out)
        history[epoch] = mse
        epochs = epoch + 1
        if mse <= target_error:
            break
    return epochs, state
