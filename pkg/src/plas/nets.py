"""Minimal MLP toolkit: forward/backward passes with hand-written reverse-mode
gradients, Adam, Polyak averaging, and bit-exact JSON checkpoints.

Everything in this repo trains through these routines, so they are kept small
enough to verify against finite differences. All math is float64. Weight
matrices are stored (out, in); inputs may be single vectors ``(n,)`` or
batches ``(B, n)``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ACTIVATIONS = ("relu", "tanh", "identity")

CHECKPOINT_VERSION = 1


class ShapeError(ValueError):
    """Raised when array dimensions do not line up."""


class NonFiniteError(FloatingPointError):
    """Raised when an update would introduce NaN/inf parameters."""


def _act(name: str, x: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(x, 0.0)
    if name == "tanh":
        return np.tanh(x)
    if name == "identity":
        return x
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name: str, pre: np.ndarray, post: np.ndarray) -> np.ndarray:
    # Derivative w.r.t. the pre-activation, using whichever of (pre, post)
    # gives the cheaper formula.
    if name == "relu":
        return (pre > 0.0).astype(np.float64)
    if name == "tanh":
        return 1.0 - post * post
    if name == "identity":
        return np.ones_like(pre)
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class Mlp:
    """Dense feedforward network parameters.

    weights[k] has shape (out_k, in_k) with in_k == out_{k-1}; biases[k] has
    shape (out_k,); activations[k] is applied after layer k.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ShapeError("weights, biases, activations must have equal length")
        if not self.weights:
            raise ShapeError("empty network")
        for k, (w, b, a) in enumerate(zip(self.weights, self.biases, self.activations)):
            w = np.asarray(w, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ShapeError(f"layer {k}: weight {w.shape} / bias {b.shape} mismatch")
            if k > 0 and w.shape[1] != self.weights[k - 1].shape[0]:
                raise ShapeError(
                    f"layer {k}: in dim {w.shape[1]} != previous out dim "
                    f"{self.weights[k - 1].shape[0]}"
                )
            if a not in ACTIVATIONS:
                raise ValueError(f"layer {k}: unknown activation {a!r}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NonFiniteError(f"layer {k}: non-finite parameters")
            self.weights[k] = w
            self.biases[k] = b

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "Mlp":
        return Mlp(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            list(self.activations),
        )


@dataclass
class Gradients:
    """Per-parameter gradients, shape-congruent with an Mlp."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(g)) for g in self.weights + self.biases)


def _layer_activations(
    layer_sizes, hidden_activation: str, output_activation: str
) -> list[str]:
    n_layers = len(layer_sizes) - 1
    return [hidden_activation] * (n_layers - 1) + [output_activation]


def mlp_init(
    layer_sizes,
    rng: np.random.Generator,
    hidden_activation: str = "relu",
    output_activation: str = "identity",
) -> Mlp:
    """Fan-in scaled uniform init: weights ~ U(-1/sqrt(in), 1/sqrt(in)), zero biases."""
    if len(layer_sizes) < 2 or any(int(n) <= 0 for n in layer_sizes):
        raise ShapeError(f"bad layer sizes {layer_sizes}")
    weights, biases = [], []
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = 1.0 / np.sqrt(n_in)
        weights.append(rng.uniform(-bound, bound, size=(n_out, n_in)))
        biases.append(np.zeros(n_out))
    acts = _layer_activations(layer_sizes, hidden_activation, output_activation)
    return Mlp(weights, biases, acts)


def mlp_zeros(
    layer_sizes,
    hidden_activation: str = "relu",
    output_activation: str = "identity",
) -> Mlp:
    """All-zero network (useful for tests and target bootstraps)."""
    weights = [
        np.zeros((n_out, n_in))
        for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:])
    ]
    biases = [np.zeros(n_out) for n_out in layer_sizes[1:]]
    acts = _layer_activations(layer_sizes, hidden_activation, output_activation)
    return Mlp(weights, biases, acts)


def _as_batch(x: np.ndarray, dim: int, what: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
        single = True
    elif x.ndim == 2:
        single = False
    else:
        raise ShapeError(f"{what}: expected 1-D or 2-D array, got ndim={x.ndim}")
    if x.shape[1] != dim:
        raise ShapeError(f"{what}: expected width {dim}, got {x.shape[1]}")
    return x, single


def _forward_cached(params: Mlp, x: np.ndarray):
    """Returns (output, inputs-per-layer, pre-activations, post-activations)."""
    h = x
    inputs, pres, posts = [], [], []
    for w, b, a in zip(params.weights, params.biases, params.activations):
        inputs.append(h)
        pre = h @ w.T + b
        h = _act(a, pre)
        pres.append(pre)
        posts.append(h)
    return h, inputs, pres, posts


def mlp_forward(params: Mlp, x: np.ndarray) -> np.ndarray:
    """Pure forward pass. Accepts (n,) or (B, n); output shape matches."""
    xb, single = _as_batch(x, params.in_dim, "input")
    y, _, _, _ = _forward_cached(params, xb)
    return y[0] if single else y


def mlp_backward(
    params: Mlp, x: np.ndarray, output_grad: np.ndarray
) -> tuple[Gradients, np.ndarray]:
    """Reverse-mode gradients of the scalar L = <output_grad, f(x)>.

    For batched inputs, L sums over the batch, so parameter gradients
    accumulate across rows (callers fold any 1/B factors into output_grad).
    Returns (parameter gradients, dL/dx with the same shape as x).
    """
    xb, single = _as_batch(x, params.in_dim, "input")
    gb, gsingle = _as_batch(output_grad, params.out_dim, "output_grad")
    if single != gsingle or xb.shape[0] != gb.shape[0]:
        raise ShapeError("input and output_grad batch shapes differ")
    _, inputs, pres, posts = _forward_cached(params, xb)

    grad_w = [np.empty(0)] * len(params.weights)
    grad_b = [np.empty(0)] * len(params.weights)
    g = gb
    for k in range(len(params.weights) - 1, -1, -1):
        d_pre = g * _act_grad(params.activations[k], pres[k], posts[k])
        grad_w[k] = d_pre.T @ inputs[k]
        grad_b[k] = d_pre.sum(axis=0)
        g = d_pre @ params.weights[k]
    input_grad = g[0] if single else g
    return Gradients(grad_w, grad_b), input_grad


@dataclass
class AdamState:
    """Adam moment accumulators for one Mlp."""

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m_weights: list[np.ndarray] = field(default_factory=list)
    v_weights: list[np.ndarray] = field(default_factory=list)
    m_biases: list[np.ndarray] = field(default_factory=list)
    v_biases: list[np.ndarray] = field(default_factory=list)


def adam_init(params: Mlp, learning_rate: float, beta1: float = 0.9,
              beta2: float = 0.999, epsilon: float = 1e-8) -> AdamState:
    if learning_rate <= 0.0:
        raise ValueError("learning_rate must be positive")
    return AdamState(
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
        step=0,
        m_weights=[np.zeros_like(w) for w in params.weights],
        v_weights=[np.zeros_like(w) for w in params.weights],
        m_biases=[np.zeros_like(b) for b in params.biases],
        v_biases=[np.zeros_like(b) for b in params.biases],
    )


def adam_step(params: Mlp, grads: Gradients, state: AdamState) -> tuple[Mlp, AdamState]:
    """One bias-corrected Adam update, in place. Rejects non-finite gradients
    before touching any parameter."""
    if len(grads.weights) != len(params.weights):
        raise ShapeError("gradient/parameter layer count mismatch")
    for gw, w in zip(grads.weights, params.weights):
        if gw.shape != w.shape:
            raise ShapeError("gradient/parameter shape mismatch")
    if not grads.all_finite():
        raise NonFiniteError("non-finite gradient; update rejected")

    state.step += 1
    t = state.step
    b1, b2, lr, eps = state.beta1, state.beta2, state.learning_rate, state.epsilon
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    pairs = [
        (params.weights, grads.weights, state.m_weights, state.v_weights),
        (params.biases, grads.biases, state.m_biases, state.v_biases),
    ]
    for ps, gs, ms, vs in pairs:
        for p, g, m, v in zip(ps, gs, ms, vs):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


def polyak_update(target: Mlp, online: Mlp, tau: float) -> Mlp:
    """Soft target update: returns tau*online + (1-tau)*target, elementwise."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    _check_congruent(target, online)
    weights = [tau * o + (1.0 - tau) * t for t, o in zip(target.weights, online.weights)]
    biases = [tau * o + (1.0 - tau) * t for t, o in zip(target.biases, online.biases)]
    return Mlp(weights, biases, list(target.activations))


def _check_congruent(a: Mlp, b: Mlp) -> None:
    if len(a.weights) != len(b.weights):
        raise ShapeError("layer count mismatch")
    for wa, wb in zip(a.weights, b.weights):
        if wa.shape != wb.shape:
            raise ShapeError(f"weight shape mismatch {wa.shape} vs {wb.shape}")


# ---------------------------------------------------------------------------
# Checkpoints. Versioned JSON containers; parameter arrays are stored row-major
# (C order). Python's json round-trips float64 exactly via repr, so save/load
# is bit-exact.

def mlp_to_dict(params: Mlp) -> dict:
    return {
        "layer_sizes": params.layer_sizes,
        "activations": list(params.activations),
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
    }


def mlp_from_dict(d: dict) -> Mlp:
    net = Mlp(
        [np.array(w, dtype=np.float64) for w in d["weights"]],
        [np.array(b, dtype=np.float64) for b in d["biases"]],
        list(d["activations"]),
    )
    if net.layer_sizes != list(d["layer_sizes"]):
        raise ShapeError("checkpoint layer_sizes inconsistent with arrays")
    return net


def save_checkpoint(path, kind: str, payload: dict) -> None:
    doc = {"format": kind, "version": CHECKPOINT_VERSION}
    doc.update(payload)
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_checkpoint(path, kind: str) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != kind:
        raise ValueError(f"expected checkpoint format {kind!r}, got {doc.get('format')!r}")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
    return doc


def params_hash(*nets: Mlp) -> str:
    """SHA-256 over the canonical JSON of one or more networks."""
    blob = json.dumps([mlp_to_dict(n) for n in nets], sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()
