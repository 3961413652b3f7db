"""Dense layers, softmax classifier networks, losses and optimizers.

Tensors are plain ``numpy.ndarray`` objects of dtype float64.  A network is
an ordered stack of :class:`Dense`, :class:`ReLU` and :class:`Softmax`
layers; every Dense layer carries a binary mask that multiplies its weight
on the forward pass, so pruned weights behave exactly like literal zeros.
"""
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, NumericError, StateError

PROB_CLAMP = 1e-12


class Dense:
    kind = "dense"

    def __init__(self, W, b, mask=None):
        W = np.asarray(W, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if W.ndim != 2 or b.shape != (W.shape[0],):
            raise DimensionError(f"dense layer needs W (out, in) and b (out,), got {W.shape} and {b.shape}")
        self.W = W.copy()
        self.b = b.copy()
        if mask is None:
            mask = np.ones_like(self.W)
        mask = np.asarray(mask, dtype=np.float64)
        if mask.shape != self.W.shape:
            raise DimensionError(f"mask shape {mask.shape} does not match weight shape {self.W.shape}")
        if not np.all((mask == 0.0) | (mask == 1.0)):
            raise ValueError("mask entries must be 0 or 1")
        self.mask = mask.copy()
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        self._x = None

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]

    def effective_weight(self) -> np.ndarray:
        return np.where(self.mask != 0.0, self.W, 0.0)

    def zero_masked(self):
        # assignment rather than multiplication so pruned entries are +0.0
        np.copyto(self.W, 0.0, where=self.mask == 0.0)

    def forward(self, x):
        self._x = x
        return x @ self.effective_weight().T + self.b

    def backward(self, dout):
        if self._x is None:
            raise StateError("dense backward called before forward")
        self.dW = dout.T @ self._x
        self.db = dout.sum(axis=0)
        return dout @ self.effective_weight()

    def __repr__(self):
        return f"Dense({self.in_dim}->{self.out_dim})"


class ReLU:
    kind = "relu"

    def __init__(self):
        self._active = None

    def forward(self, x):
        self._active = x > 0
        return np.where(self._active, x, 0.0)

    def backward(self, dout):
        if self._active is None:
            raise StateError("relu backward called before forward")
        return np.where(self._active, dout, 0.0)

    def __repr__(self):
        return "ReLU()"


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class Softmax:
    kind = "softmax"

    def __init__(self):
        self._p = None

    def forward(self, x):
        self._p = softmax(x)
        return self._p

    def backward(self, dout):
        # vector-Jacobian product of the row-wise softmax
        if self._p is None:
            raise StateError("softmax backward called before forward")
        p = self._p
        return p * (dout - np.sum(dout * p, axis=1, keepdims=True))

    def __repr__(self):
        return "Softmax()"


class Network:
    """An ordered layer stack with a forward cache for backpropagation."""

    def __init__(self, layers: Sequence):
        self.layers = list(layers)
        dense = self.dense_layers()
        if not dense:
            raise ConfigError("network needs at least one dense layer")
        for a, b in zip(dense, dense[1:]):
            if a.out_dim != b.in_dim:
                raise DimensionError(f"incompatible dense layers {a!r} then {b!r}")
        self.input_dim = dense[0].in_dim
        self.output_dim = dense[-1].out_dim
        self._cache_x = None
        self._out = None

    def dense_layers(self) -> List[Dense]:
        return [layer for layer in self.layers if layer.kind == "dense"]

    def params(self) -> List[np.ndarray]:
        out = []
        for layer in self.dense_layers():
            out.extend((layer.W, layer.b))
        return out

    def grads(self) -> List[np.ndarray]:
        out = []
        for layer in self.dense_layers():
            out.extend((layer.dW, layer.db))
        return out

    def apply_masks(self):
        for layer in self.dense_layers():
            layer.zero_masked()

    def copy(self) -> "Network":
        layers = []
        for layer in self.layers:
            if layer.kind == "dense":
                layers.append(Dense(layer.W, layer.b, layer.mask))
            else:
                layers.append(type(layer)())
        return Network(layers)

    def describe(self) -> list:
        desc = []
        for layer in self.layers:
            if layer.kind == "dense":
                desc.append({"type": "dense", "in": layer.in_dim, "out": layer.out_dim})
            else:
                desc.append({"type": layer.kind})
        return desc

    @property
    def is_classifier(self) -> bool:
        return self.layers[-1].kind == "softmax"

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise DimensionError(f"expected batch of shape (B, {self.input_dim}), got {x.shape}")
        self._cache_x = x
        h = x
        for layer in self.layers:
            h = layer.forward(h)
        self._out = h
        return h

    __call__ = forward

    def backward_output(self, dout):
        """Backpropagate an arbitrary gradient w.r.t. the network output."""
        if self._out is None:
            raise StateError("backward requires a cached forward pass")
        g = dout
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def backward(self, labels, extra_output_grad=None):
        """Gradients of mean cross-entropy (+ <extra_output_grad, f(x)>).

        ``extra_output_grad`` is the gradient of any additional scalar term
        with respect to the output probabilities, already batch-averaged.
        """
        if self._out is None:
            raise StateError("backward requires a cached forward pass")
        if not self.is_classifier:
            raise StateError("cross-entropy backward needs a softmax output layer")
        p = self._out
        B, k = p.shape
        if B == 0:
            raise DimensionError("cannot backpropagate an empty batch")
        labels = _check_labels(labels, B, k)
        dlogits = p.copy()
        dlogits[np.arange(B), labels] -= 1.0
        dlogits /= B
        if extra_output_grad is not None:
            g = np.asarray(extra_output_grad, dtype=np.float64)
            if g.shape != p.shape:
                raise DimensionError(f"extra_output_grad shape {g.shape} does not match output {p.shape}")
            dlogits = dlogits + p * (g - np.sum(g * p, axis=1, keepdims=True))
        g = dlogits
        for layer in reversed(self.layers[:-1]):
            g = layer.backward(g)
        return self.grads()

    def __repr__(self):
        return "Network(" + ", ".join(repr(layer) for layer in self.layers) + ")"


def mlp(dims: Sequence[int], rng: np.random.Generator, classifier: bool = True,
        init: str = "he_uniform", std: float = 0.01) -> Network:
    """Build ``Dense -> ReLU -> ... -> Dense [-> Softmax]`` over ``dims``.

    ``init="he_uniform"`` draws U(-sqrt(6/fan_in), sqrt(6/fan_in)) weights;
    ``init="normal"`` draws N(0, std^2).  Biases start at zero.
    """
    dims = [int(d) for d in dims]
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ConfigError(f"bad layer dims {dims}")
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        if init == "he_uniform":
            bound = np.sqrt(6.0 / fan_in)
            W = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        elif init == "normal":
            W = rng.normal(0.0, std, size=(fan_out, fan_in))
        else:
            raise ConfigError(f"unknown init {init!r}")
        layers.append(Dense(W, np.zeros(fan_out)))
        if i < len(dims) - 2:
            layers.append(ReLU())
    if classifier:
        layers.append(Softmax())
    return Network(layers)


def network_from_description(desc: list) -> Network:
    layers = []
    for entry in desc:
        kind = entry["type"]
        if kind == "dense":
            layers.append(Dense(np.zeros((entry["out"], entry["in"])), np.zeros(entry["out"])))
        elif kind == "relu":
            layers.append(ReLU())
        elif kind == "softmax":
            layers.append(Softmax())
        else:
            raise ConfigError(f"unknown layer type {kind!r}")
    return Network(layers)


def forward(net: Network, x) -> np.ndarray:
    return net.forward(x)


def backward(net: Network, x, labels, extra_output_grad=None) -> List[np.ndarray]:
    """Backpropagate through the cached forward pass on ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2 and x.shape[0] == 0:
        raise DimensionError("cannot backpropagate an empty batch")
    cached = net._cache_x
    if cached is None or net._out is None:
        raise StateError("backward requires a cached forward pass")
    if cached is not x and (cached.shape != x.shape or not np.array_equal(cached, x)):
        raise StateError("cached forward pass was computed on a different batch")
    return net.backward(labels, extra_output_grad)


def _check_labels(labels, B, k):
    labels = np.asarray(labels)
    if labels.shape != (B,):
        raise DimensionError(f"expected {B} labels, got shape {labels.shape}")
    labels = labels.astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise IndexError(f"labels must lie in [0, {k})")
    return labels


def cross_entropy(probs, labels) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] == 0:
        raise DimensionError(f"expected non-empty (B, k) probabilities, got {probs.shape}")
    labels = _check_labels(labels, *probs.shape)
    picked = probs[np.arange(probs.shape[0]), labels]
    return float(-np.mean(np.log(np.clip(picked, PROB_CLAMP, 1.0))))


def accuracy(net: Network, x, labels) -> float:
    labels = np.asarray(labels)
    if labels.size == 0:
        return float("nan")
    return float(np.mean(np.argmax(net.forward(x), axis=1) == labels))


@dataclass
class OptimizerState:
    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)
    step: int = 0

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.kind!r}")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")


def optimizer_step(opt: OptimizerState, params: List[np.ndarray], grads: List[np.ndarray]) -> List[np.ndarray]:
    """Update ``params`` in place and return them."""
    if len(params) != len(grads):
        raise DimensionError("params and grads differ in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise DimensionError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient")
    lr = opt.learning_rate
    if opt.kind == "sgd":
        for p, g in zip(params, grads):
            p -= lr * g
        opt.step += 1
        return params
    if not opt.m:
        opt.m = [np.zeros_like(p) for p in params]
        opt.v = [np.zeros_like(p) for p in params]
    opt.step += 1
    t = opt.step
    c1 = 1.0 - opt.beta1 ** t
    c2 = 1.0 - opt.beta2 ** t
    for p, g, m, v in zip(params, grads, opt.m, opt.v):
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + opt.eps)
    return params


def train_step(net: Network, opt: OptimizerState, x, labels, extra_output_grad=None, extra_param_grads=None) -> float:
    """One masked optimizer step on mean cross-entropy; returns the batch loss."""
    probs = net.forward(x)
    loss = cross_entropy(probs, labels)
    grads = net.backward(labels, extra_output_grad)
    if extra_param_grads is not None:
        grads = [g + e if e is not None else g for g, e in zip(grads, extra_param_grads)]
    optimizer_step(opt, net.params(), grads)
    net.apply_masks()
    return loss
