"""Independent numerical oracles used across the test suite.

These stay deliberately dumb (loops, quadrature, brute force) so they share no
code with the implementations they check.
"""
from __future__ import annotations

import numpy as np

from plas.nets import Mlp


def finite_diff_param_grads(loss_fn, params: Mlp, h: float = 1e-5):
    """Central finite differences of a scalar loss over every Mlp entry.

    loss_fn takes an Mlp and returns a float. Returns (weight_grads,
    bias_grads) as lists of arrays congruent with params.
    """
    gw = [np.zeros_like(w) for w in params.weights]
    gb = [np.zeros_like(b) for b in params.biases]
    for k, w in enumerate(params.weights):
        it = np.nditer(w, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = w[idx]
            w[idx] = orig + h
            up = loss_fn(params)
            w[idx] = orig - h
            down = loss_fn(params)
            w[idx] = orig
            gw[k][idx] = (up - down) / (2.0 * h)
    for k, b in enumerate(params.biases):
        for i in range(b.shape[0]):
            orig = b[i]
            b[i] = orig + h
            up = loss_fn(params)
            b[i] = orig - h
            down = loss_fn(params)
            b[i] = orig
            gb[k][i] = (up - down) / (2.0 * h)
    return gw, gb


def finite_diff_input_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar f w.r.t. a flat input vector."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        g.flat[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def max_rel_err(got, want, floor: float = 1e-8) -> float:
    """Max elementwise relative error with an absolute floor for tiny values."""
    got = np.asarray(got, dtype=np.float64).ravel()
    want = np.asarray(want, dtype=np.float64).ravel()
    denom = np.maximum(np.abs(want), floor)
    return float(np.max(np.abs(got - want) / denom)) if got.size else 0.0


def naive_mlp_forward(params: Mlp, x: np.ndarray) -> np.ndarray:
    """Loop-based forward pass (no shared code with plas.nets)."""
    h = np.asarray(x, dtype=np.float64)
    for w, b, act in zip(params.weights, params.biases, params.activations):
        out = np.zeros(w.shape[0])
        for i in range(w.shape[0]):
            s = b[i]
            for j in range(w.shape[1]):
                s += w[i, j] * h[j]
            out[i] = s
        if act == "relu":
            h = np.array([v if v > 0 else 0.0 for v in out])
        elif act == "tanh":
            h = np.tanh(out)
        else:
            h = out
    return h
