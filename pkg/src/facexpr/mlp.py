"""Multi-layer perceptron with logistic units trained by online
back-propagation of the squared error.

Every non-input layer, the output layer included, applies the logistic
function.  Weights for layer ``L`` form a ``(size_L, size_{L-1})`` matrix
plus a bias vector.
"""
from __future__ import annotations

import copy
import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels

__all__ = [
    "Expression",
    "XorShift64Star",
    "MlpModel",
    "TrainConfig",
    "sigmoid",
    "init_weights",
    "forward",
    "gradients",
    "backprop_step",
    "train",
    "classify",
]


class Expression(enum.IntEnum):
    """Output node ``Y1..Y7`` assignment."""

    ANGER = 1
    FEAR = 2
    SURPRISE = 3
    SADNESS = 4
    HAPPINESS = 5
    DISGUST = 6
    NEUTRAL = 7

    @property
    def label(self) -> str:
        return self.name.title()

    @classmethod
    def parse(cls, text) -> "Expression":
        if isinstance(text, cls):
            return text
        key = str(text).strip().upper()
        aliases = {"SAD": "SADNESS", "HAPPY": "HAPPINESS", "JOY": "HAPPINESS"}
        key = aliases.get(key, key)
        try:
            return cls[key]
        except KeyError:
            raise ValueError(f"unknown expression label {text!r}") from None


_MASK = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


class XorShift64Star:
    """Portable xorshift64* generator.

    The 64-bit state is seeded with one splitmix64 step of
    ``seed XOR (stream * 0xD1B54A32D192ED03)`` (zero state is replaced by 1).
    Each step applies ``x ^= x >> 12; x ^= x << 25; x ^= x >> 27`` and outputs
    ``x * 2685821657736338717 mod 2**64``.  Floats in [0, 1) take the top 53
    output bits.
    """

    def __init__(self, seed: int, stream: int = 0):
        s = _splitmix64((int(seed) ^ (int(stream) * 0xD1B54A32D192ED03)) & _MASK)
        self.state = s or 1

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & _MASK
        x ^= x >> 27
        self.state = x
        return (x * 2685821657736338717) & _MASK

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))


def sigmoid(t):
    """Logistic function, evaluated without overflow for any finite input."""
    t = np.asarray(t, dtype=np.float64)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out if out.ndim else float(out)


@dataclass
class MlpModel:
    weights: list  # per layer, (size_L, size_{L-1})
    biases: list  # per layer, (size_L,)

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias vector per weight matrix and at least one layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {i + 1}: weight {w.shape} and bias {b.shape} disagree")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i + 1} expects {w.shape[1]} inputs, previous layer has {self.weights[i - 1].shape[0]}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i + 1} has non-finite weights")

    @property
    def topology(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n_outputs(self) -> int:
        return self.weights[-1].shape[0]

    def copy(self) -> "MlpModel":
        return copy.deepcopy(self)

    def to_dict(self) -> dict:
        return {
            "topology": self.topology,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpModel":
        weights = [np.asarray(w, dtype=np.float64) for w in d["weights"]]
        biases = [np.asarray(b, dtype=np.float64) for b in d["biases"]]
        model = cls(weights, biases)
        if "topology" in d and list(d["topology"]) != model.topology:
            raise ValueError(f"stored topology {d['topology']} does not match weights {model.topology}")
        return model


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.3
    max_epochs: int = 200000
    target_error: float = 1e-7
    seed: int = 0

    def __post_init__(self):
        if not (self.learning_rate >= 0 and math.isfinite(self.learning_rate)):
            raise ValueError(f"learning rate must be a finite non-negative number, got {self.learning_rate}")
        if self.learning_rate > 1:
            warnings.warn(f"learning rate {self.learning_rate} is above 1", stacklevel=2)
        if int(self.max_epochs) < 1:
            raise ValueError("max_epochs must be at least 1")
        if self.target_error < 0:
            raise ValueError("target_error must be non-negative")


def init_weights(topology, seed: int = 0) -> MlpModel:
    """Weights and biases drawn uniformly from [-0.5, 0.5).

    Values come from :class:`XorShift64Star` (stream 0), layer by layer:
    the weight matrix row-major, then the bias vector.
    """
    topology = [int(n) for n in topology]
    if len(topology) < 2 or min(topology) < 1:
        raise ValueError(f"invalid topology {topology}")
    rng = XorShift64Star(seed)
    weights, biases = [], []
    for n_prev, n_cur in zip(topology[:-1], topology[1:]):
        w = np.array([rng.random() - 0.5 for _ in range(n_cur * n_prev)]).reshape(n_cur, n_prev)
        b = np.array([rng.random() - 0.5 for _ in range(n_cur)])
        weights.append(w)
        biases.append(b)
    return MlpModel(weights, biases)


def _check_input(model: MlpModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.n_inputs,):
        raise ValueError(f"expected an input vector of length {model.n_inputs}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")
    return x


def forward(model: MlpModel, x) -> list[np.ndarray]:
    """Activations of every layer, input first; ``[-1]`` is the output."""
    y = _check_input(model, x)
    acts = [y]
    for w, b in zip(model.weights, model.biases):
        y = sigmoid(w @ y + b)
        acts.append(y)
    return acts


def gradients(model: MlpModel, x, target) -> tuple[list, list, float]:
    """Gradients of ``E = 0.5 * sum((y - t)**2)`` for one sample.

    Returns (weight grads, bias grads, E).
    """
    target = np.asarray(target, dtype=np.float64)
    if target.shape != (model.n_outputs,):
        raise ValueError(f"expected a target of length {model.n_outputs}, got shape {target.shape}")
    acts = forward(model, x)
    err = acts[-1] - target
    delta = err * acts[-1] * (1.0 - acts[-1])
    gw = [None] * len(model.weights)
    gb = [None] * len(model.weights)
    for layer in range(len(model.weights) - 1, -1, -1):
        gw[layer] = np.outer(delta, acts[layer])
        gb[layer] = delta
        if layer:
            a = acts[layer]
            delta = (model.weights[layer].T @ delta) * a * (1.0 - a)
    return gw, gb, 0.5 * float(err @ err)


def backprop_step(model: MlpModel, x, target, rate: float) -> float:
    """One gradient-descent update, in place; returns the pre-update error."""
    gw, gb, e = gradients(model, x, target)
    for w, b, dw, db in zip(model.weights, model.biases, gw, gb):
        w -= rate * dw
        b -= rate * db
    return e


def train(model: MlpModel, inputs, targets, cfg: TrainConfig = TrainConfig()) -> tuple[MlpModel, np.ndarray]:
    """Online training in a reshuffled order each epoch.

    Stops after the first epoch whose mean squared error (over samples and
    outputs, measured before each sample's update) is ``<= cfg.target_error``
    or after ``cfg.max_epochs`` epochs.  The input model is left untouched.

    Returns the trained model and the per-epoch MSE history.
    """
    x = np.ascontiguousarray(inputs, dtype=np.float64)
    t = np.ascontiguousarray(targets, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("training set is empty")
    if x.shape[1] != model.n_inputs or t.shape != (x.shape[0], model.n_outputs):
        raise ValueError(
            f"training data shapes {x.shape}/{t.shape} do not fit topology {model.topology}"
        )
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(t))):
        raise ValueError("training data contains non-finite values")
    trained = model.copy()
    max_epochs = int(cfg.max_epochs)
    history = np.zeros(max_epochs)
    state = np.uint64(XorShift64Star(cfg.seed, stream=1).state)

    if len(trained.weights) == 2:
        (w1, w2), (b1, b2) = trained.weights, trained.biases
        epochs, _ = _kernels.train_two_layer(
            w1, b1, w2, b2, x, t, float(cfg.learning_rate), max_epochs, float(cfg.target_error), state, history
        )
    else:
        order = np.arange(x.shape[0])
        epochs = 0
        for epoch in range(max_epochs):
            state = np.uint64(_kernels.permute(order, state))
            sse = sum(2.0 * backprop_step(trained, x[s], t[s], cfg.learning_rate) for s in order)
            history[epoch] = sse / t.size
            epochs = epoch + 1
            if history[epoch] <= cfg.target_error:
                break
    return trained, history[:epochs].copy()


def classify(model: MlpModel, x) -> tuple[Expression, np.ndarray]:
    """Arg-max label over the seven outputs; ties go to the lowest index."""
    if model.n_outputs != len(Expression):
        raise ValueError(f"classifier needs {len(Expression)} outputs, model has {model.n_outputs}")
    out = forward(model, x)[-1]
    return Expression(int(np.argmax(out)) + 1), out
