from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..errors import ConfigurationError, InputError
from . import autodiff as ad
from .autodiff import Var


@dataclass
class MlpModel:
    """Dense feed-forward classifier producing logits.

    ``weights[i]`` has shape (out, in) and ``biases[i]`` shape (out,). Hidden
    layers use a rectifier, the output layer is linear. With a single layer the
    model is the multinomial logistic regression ``logits = W x + b`` and
    ``weights[0][k, d]`` is the coefficient on feature ``d`` for class ``k``.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if not self.weights or len(self.weights) != len(self.biases):
            raise ConfigurationError("need one bias per weight matrix and at least one layer")
        self.weights = [np.array(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.array(b, dtype=np.float64) for b in self.biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ConfigurationError(f"layer {i}: weight {w.shape} and bias {b.shape} do not fit")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ConfigurationError(
                    f"layer {i} expects {w.shape[1]} inputs, previous layer gives {self.weights[i - 1].shape[0]}"
                )
        if self.n_classes < 2:
            raise ConfigurationError("a classifier needs at least two classes")

    @classmethod
    def init(cls, input_dim: int, n_classes: int, hidden: Sequence[int] = (32,), seed=0) -> "MlpModel":
        """Glorot-uniform weights and zero biases."""
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        sizes = [input_dim, *hidden, n_classes]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n_classes(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def depth(self) -> int:
        """Number of hidden layers."""
        return len(self.weights) - 1

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def with_params(self, params: Sequence[np.ndarray]) -> "MlpModel":
        if len(params) != 2 * len(self.weights):
            raise ConfigurationError(f"expected {2 * len(self.weights)} parameter arrays, got {len(params)}")
        for new, old in zip(params, self.params()):
            if np.shape(new) != old.shape:
                raise ConfigurationError(f"parameter shape {np.shape(new)} does not match {old.shape}")
        return MlpModel(list(params[0::2]), list(params[1::2]))

    def copy(self) -> "MlpModel":
        return self.with_params([p.copy() for p in self.params()])

    def __call__(self, x, params: Sequence[Var] | None = None) -> Var:
        """Logits as a graph node for a batch ``x`` of shape (n, D)."""
        h = ad.as_var(x)
        if h.ndim != 2 or h.shape[1] != self.input_dim:
            raise ConfigurationError(f"model expects inputs with {self.input_dim} features, got shape {h.shape}")
        layers = self.params() if params is None else params
        n_layers = len(self.weights)
        for i in range(n_layers):
            h = ad.linear(h, layers[2 * i], layers[2 * i + 1])
            if i < n_layers - 1:
                h = ad.relu(h)
        return h


Net = Callable[[np.ndarray], Var]


def _as_batch(model: MlpModel, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.ndim != 2 or batch.shape[1] != model.input_dim:
        raise ConfigurationError(f"model expects {model.input_dim} features, got shape {x.shape}")
    return batch, single


def forward(model: MlpModel, x) -> np.ndarray:
    batch, single = _as_batch(model, x)
    logits = model(batch).value
    return logits[0] if single else logits


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def predict(model: MlpModel, X) -> np.ndarray:
    return np.argmax(forward(model, X), axis=-1)


def _check_classes(target, n_classes: int) -> np.ndarray:
    t = np.asarray(target)
    if not np.issubdtype(t.dtype, np.integer):
        if not np.all(np.equal(np.mod(t, 1), 0)):
            raise InputError(f"class indices must be integers, got {target!r}")
        t = t.astype(np.intp)
    if np.any(t < 0) or np.any(t >= n_classes):
        raise InputError(f"class index {target!r} outside [0, {n_classes})")
    return t.astype(np.intp)


def crossentropy_logits(logits, target) -> float | np.ndarray:
    """``-log softmax(logits)[target]``, row-wise for 2-D logits."""
    z = np.asarray(logits, dtype=np.float64)
    t = _check_classes(target, z.shape[-1])
    shift = z.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z - shift).sum(axis=-1)) + shift[..., 0]
    if z.ndim == 1:
        return float(lse - z[t])
    return lse - z[np.arange(z.shape[0]), t]


def cross_entropy(logits: Var, targets) -> Var:
    """Per-row logit cross-entropy as a graph node."""
    targets = _check_classes(targets, logits.shape[-1])
    return ad.logsumexp(logits) - ad.pick(logits, targets)


def class_energy(logits: Var, classes) -> Var:
    """Per-row energy ``-logit[class]`` as a graph node."""
    classes = _check_classes(classes, logits.shape[-1])
    return -ad.pick(logits, classes)


def energy(model: MlpModel, x, y) -> float | np.ndarray:
    logits = forward(model, x)
    y = _check_classes(y, model.n_classes)
    if logits.ndim == 1:
        return float(-logits[y])
    return -logits[np.arange(logits.shape[0]), y]


def grad_input(model: MlpModel, x, loss: Callable[[Var, Var], Var]) -> np.ndarray:
    """Gradient of ``loss(logits, x)`` with respect to the input ``x``.

    ``loss`` receives the logits and the input as graph nodes (batched, even
    for a single input) and must return a scalar node.
    """
    batch, single = _as_batch(model, x)
    xv = ad.variable(batch)
    out = loss(model(xv), xv)
    (g,) = ad.gradient(out, [xv])
    return g[0] if single else g


def grad_params(model: MlpModel, loss: Callable[[Net], Var]) -> tuple[float, list[np.ndarray]]:
    """Value and parameter gradients of ``loss(net)``.

    ``net`` maps an input batch to logits with the parameters being traced.
    Inputs handed to ``net`` are plain arrays, so nothing flows back into them.
    """
    params = [ad.variable(p) for p in model.params()]

    def net(x) -> Var:
        return model(x, params)

    out = loss(net)
    return float(out), ad.gradient(out, params)
