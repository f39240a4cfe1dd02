"""Small fully connected networks with hand-written backpropagation.

Networks map a batch of shape ``(n, in_dim)`` to ``(n, out_dim)``. Hidden
layers use tanh; the output layer is either softplus (strictly positive
outputs) or identity. Everything is float64.

Weights are stored as ``(fan_in, fan_out)`` matrices so that a layer computes
``a @ W + b``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

HIDDEN_ACTIVATIONS = ("tanh",)
OUTPUT_ACTIVATIONS = ("softplus", "identity")
DIRECTIONS = ("descent", "ascent")

FORMAT_VERSION = 1


def softplus(x):
    # log(1 + e^x) without overflow for large |x|
    return np.logaddexp(0.0, x)


@dataclass
class ForwardCache:
    """Activations recorded by :meth:`Mlp.forward` for one batch.

    ``activations[0]`` is the input batch and ``activations[-1]`` the network
    output; ``pre_activations[i]`` is the affine output of layer ``i``.
    """

    activations: list
    pre_activations: list
    version: int
    net_id: int


@dataclass
class GradientSet:
    """Batch-mean gradients, one array per weight matrix and bias vector."""

    weights: list
    biases: list

    def norm(self):
        sq = sum(float(np.sum(w * w)) for w in self.weights)
        sq += sum(float(np.sum(b * b)) for b in self.biases)
        return float(np.sqrt(sq))

    def is_finite(self):
        return all(np.all(np.isfinite(a)) for a in self.weights + self.biases)

    def flat(self):
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])


@dataclass(eq=False)
class Mlp:
    """Fully connected network ``layer_dims[0] -> ... -> layer_dims[-1]``."""

    layer_dims: list
    weights: list
    biases: list
    hidden_activation: str = "tanh"
    output_activation: str = "softplus"
    _version: int = field(default=0, repr=False, compare=False)

    def __post_init__(self):
        _check_dims(self.layer_dims)
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")
        self.layer_dims = [int(d) for d in self.layer_dims]
        self.weights = [np.array(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.array(b, dtype=np.float64).reshape(-1) for b in self.biases]
        if len(self.weights) != self.num_layers or len(self.biases) != self.num_layers:
            raise ValueError("number of parameter arrays does not match layer_dims")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_dims[i], self.layer_dims[i + 1])
            if w.shape != shape or b.shape != (shape[1],):
                raise ValueError(
                    f"layer {i}: weight {w.shape} / bias {b.shape} inconsistent with {shape}"
                )

    @property
    def num_layers(self):
        return len(self.layer_dims) - 1

    @property
    def num_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self):
        return Mlp(
            list(self.layer_dims),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.hidden_activation,
            self.output_activation,
        )

    def forward(self, inputs):
        """Evaluate the network on a batch.

        Parameters
        ----------
        inputs : array_like, shape (n, layer_dims[0])
            A 1-d array is treated as a batch of scalars when the input
            dimension is 1.

        Returns
        -------
        outputs : ndarray, shape (n, layer_dims[-1])
        cache : ForwardCache
            Needed by :meth:`backward`.
        """
        a = np.asarray(inputs, dtype=np.float64)
        if a.ndim == 1 and self.layer_dims[0] == 1:
            a = a[:, None]
        if a.ndim != 2 or a.shape[1] != self.layer_dims[0]:
            raise ValueError(f"expected input of shape (n, {self.layer_dims[0]}), got {a.shape}")
        acts = [a]
        pres = []
        last = self.num_layers - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            pres.append(z)
            if i < last:
                a = np.tanh(z)
            elif self.output_activation == "softplus":
                a = softplus(z)
            else:
                a = z
            acts.append(a)
        return a, ForwardCache(acts, pres, self._version, id(self))

    def predict(self, inputs):
        return self.forward(inputs)[0]

    def backward(self, cache, output_grad):
        """Gradient of ``mean_n sum_k output_grad[n, k] * output[n, k]``.

        Parameters
        ----------
        cache : ForwardCache
            From a :meth:`forward` call on this network, with no parameter
            update in between.
        output_grad : array_like, shape (n, layer_dims[-1])
        """
        if cache.net_id != id(self) or cache.version != self._version:
            raise ValueError("stale or foreign forward cache")
        acts, pres = cache.activations, cache.pre_activations
        n = acts[0].shape[0]
        delta = np.asarray(output_grad, dtype=np.float64)
        if delta.ndim == 1 and self.layer_dims[-1] == 1:
            delta = delta[:, None]
        if delta.shape != acts[-1].shape:
            raise ValueError(f"output_grad shape {delta.shape} != output shape {acts[-1].shape}")

        if self.output_activation == "softplus":
            delta = delta * expit(pres[-1])
        delta = delta / n

        gw = [None] * self.num_layers
        gb = [None] * self.num_layers
        for i in range(self.num_layers - 1, -1, -1):
            gw[i] = acts[i].T @ delta
            gb[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (1.0 - acts[i] * acts[i])
        return GradientSet(gw, gb)

    def apply_update(self, grads, rate, direction="descent"):
        """In-place ``params -= rate * grads`` (descent) or ``+=`` (ascent)."""
        if not rate > 0:
            raise ValueError(f"rate must be positive, got {rate}")
        if direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        if len(grads.weights) != self.num_layers:
            raise ValueError("gradient set does not match network")
        for w, gw, b, gb in zip(self.weights, grads.weights, self.biases, grads.biases):
            if gw.shape != w.shape or gb.shape != b.shape:
                raise ValueError("gradient set does not match network")
        if not grads.is_finite():
            raise FloatingPointError("non-finite gradient; update rejected")
        step = -rate if direction == "descent" else rate
        for w, gw, b, gb in zip(self.weights, grads.weights, self.biases, grads.biases):
            w += step * gw
            b += step * gb
        self._version += 1

    def params_equal(self, other):
        return (
            self.layer_dims == other.layer_dims
            and self.output_activation == other.output_activation
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
        )

    def to_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "layer_dims": list(self.layer_dims),
            "hidden_activation": self.hidden_activation,
            "output_activation": self.output_activation,
            # row-major: weights[i][r] is row r (one input unit) of layer i
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, data):
        if data.get("format_version", FORMAT_VERSION) != FORMAT_VERSION:
            raise ValueError(f"unsupported network format {data['format_version']}")
        dims = data["layer_dims"]
        weights = [np.array(w, dtype=np.float64).reshape(dims[i], dims[i + 1])
                   for i, w in enumerate(data["weights"])]
        return cls(dims, weights, data["biases"],
                   data.get("hidden_activation", "tanh"), data["output_activation"])


def _check_dims(layer_dims):
    if len(layer_dims) < 2:
        raise ValueError("layer_dims needs at least an input and an output size")
    for d in layer_dims:
        if int(d) != d or d < 1:
            raise ValueError(f"layer sizes must be positive integers, got {layer_dims}")


def mlp_new(layer_dims, output_activation="softplus", seed=0):
    """Create a network with ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))`` weights and zero biases."""
    _check_dims(layer_dims)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        bound = np.sqrt(3.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(list(layer_dims), weights, biases, "tanh", output_activation)


def save_mlp(net, path):
    Path(path).write_text(json.dumps(net.to_dict(), indent=1))


def load_mlp(path):
    return Mlp.from_dict(json.loads(Path(path).read_text()))
