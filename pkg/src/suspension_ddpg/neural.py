"""Small dense networks with exact backpropagation and Adam.

Inputs may be a single vector ``(in,)`` or a batch ``(batch, in)``; batched
gradients are summed over rows, i.e. they are the gradient of
``sum(upstream * output)``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from ._io import write_json
from .errors import ShapeMismatch, SpecError


class Activation(str, enum.Enum):
    RELU = "relu"
    TANH = "tanh"
    LINEAR = "linear"


def _activate_inplace(kind, z):
    if kind is Activation.RELU:
        np.maximum(z, 0.0, out=z)
    elif kind is Activation.TANH:
        np.tanh(z, out=z)
    return z


def _backprop_activation(kind, g, out):
    if kind is Activation.RELU:
        return g * (out > 0.0)  # subgradient 0 at the kink
    if kind is Activation.TANH:
        return g * (1.0 - out * out)
    return g


@dataclass
class Layer:
    w: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)
    activation: Activation


@dataclass
class Mlp:
    layers: List[Layer]

    def __post_init__(self):
        if not self.layers:
            raise SpecError("an Mlp needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.w.shape[1] != prev.w.shape[0]:
                raise ShapeMismatch(f"layer dims do not chain: {prev.w.shape} -> {nxt.w.shape}")
        for layer in self.layers:
            if layer.b.shape != (layer.w.shape[0],):
                raise ShapeMismatch(f"bias shape {layer.b.shape} does not match weight {layer.w.shape}")

    @property
    def input_dim(self):
        return self.layers[0].w.shape[1]

    @property
    def output_dim(self):
        return self.layers[-1].w.shape[0]

    @property
    def layer_sizes(self):
        return [self.input_dim] + [layer.w.shape[0] for layer in self.layers]

    @property
    def activations(self):
        return [layer.activation for layer in self.layers]

    def parameters(self):
        """Parameter arrays in a fixed order: w0, b0, w1, b1, ..."""
        out = []
        for layer in self.layers:
            out.extend((layer.w, layer.b))
        return out

    def copy(self):
        return Mlp([Layer(l.w.copy(), l.b.copy(), l.activation) for l in self.layers])

    def __call__(self, x):
        return forward(self, x)[0]


@dataclass
class Gradients:
    w: List[np.ndarray]
    b: List[np.ndarray]
    input_gradient: np.ndarray

    def parameters(self):
        out = []
        for gw, gb in zip(self.w, self.b):
            out.extend((gw, gb))
        return out


def init_mlp(layer_sizes: Sequence[int], activations: Sequence, seed) -> Mlp:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    if len(layer_sizes) < 2:
        raise SpecError("need at least an input and an output size")
    if any(int(n) < 1 for n in layer_sizes):
        raise SpecError(f"zero dimension in layer sizes {list(layer_sizes)}")
    if len(activations) != len(layer_sizes) - 1:
        raise SpecError("one activation per layer required")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out, act in zip(layer_sizes[:-1], layer_sizes[1:], activations):
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(int(fan_out), int(fan_in)))
        layers.append(Layer(w, np.zeros(int(fan_out)), Activation(act)))
    return Mlp(layers)


def forward(net: Mlp, x):
    """Return ``(output, cache)``; the cache holds each layer's input and output."""
    h = np.asarray(x, dtype=np.float64)
    cache = []
    for layer in net.layers:
        # contiguous transpose: BLAS is markedly slower on strided operands
        z = h @ np.ascontiguousarray(layer.w.T)
        z += layer.b
        out = _activate_inplace(layer.activation, z)
        cache.append((h, out))
        h = out
    return h, cache


def backward(net: Mlp, cache, upstream, input_gradient=True) -> Gradients:
    """Reverse-mode gradients of ``sum(upstream * output)``.

    With ``input_gradient=False`` the (unused) input gradient is left as None.
    """
    g = np.asarray(upstream, dtype=np.float64)
    n = len(net.layers)
    gw = [None] * n
    gb = [None] * n
    for idx in range(n - 1, -1, -1):
        layer = net.layers[idx]
        h, out = cache[idx]
        dz = _backprop_activation(layer.activation, g, out)
        if dz.ndim == 1:
            gw[idx] = np.outer(dz, h)
            gb[idx] = dz
        else:
            gw[idx] = dz.T @ h
            gb[idx] = dz.sum(axis=0)
        g = dz @ layer.w if (idx or input_gradient) else None
    return Gradients(gw, gb, g)


@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0

    @classmethod
    def for_network(cls, net: Mlp, lr=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        params = net.parameters()
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params],
                   lr, beta1, beta2, epsilon)


def adam_step(net: Mlp, grads: Gradients, opt: AdamState) -> Mlp:
    """One bias-corrected Adam descent step, applied in place."""
    params = net.parameters()
    gs = grads.parameters()
    if len(params) != len(gs) or len(params) != len(opt.m):
        raise ShapeMismatch("gradient / optimizer state does not match network")
    opt.step_count += 1
    t = opt.step_count
    b1, b2 = opt.beta1, opt.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    for p, g, m, v in zip(params, gs, opt.m, opt.v):
        if g.shape != p.shape:
            raise ShapeMismatch(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= opt.lr * (m / corr1) / (np.sqrt(v / corr2) + opt.epsilon)
    return net


def soft_update(target: Mlp, main: Mlp, tau: float) -> Mlp:
    """``target <- tau * target + (1 - tau) * main`` for every parameter, in place.

    Large ``tau`` means slow tracking (tau=0.99 keeps 99% of the target).
    """
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    tp, mp = target.parameters(), main.parameters()
    if len(tp) != len(mp) or any(a.shape != b.shape for a, b in zip(tp, mp)):
        raise ShapeMismatch("soft_update needs identical architectures")
    for a, b in zip(tp, mp):
        if tau == 0.0:
            a[...] = b
        elif tau != 1.0:
            a *= tau
            a += (1.0 - tau) * b
    return target


def mlp_to_dict(net: Mlp):
    return {
        "architecture": {
            "layer_sizes": net.layer_sizes,
            "activations": [a.value for a in net.activations],
        },
        "layers": [{"w": layer.w.ravel().tolist(), "b": layer.b.tolist()} for layer in net.layers],
    }


def mlp_from_dict(doc) -> Mlp:
    """Rebuild a network, validating every array against the declared architecture."""
    try:
        arch = doc["architecture"]
        sizes = [int(n) for n in arch["layer_sizes"]]
        acts = [Activation(a) for a in arch["activations"]]
        entries = doc["layers"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ShapeMismatch(f"malformed network document: {exc}") from None
    if len(acts) != len(sizes) - 1 or len(entries) != len(acts):
        raise ShapeMismatch("layer count does not match architecture")
    layers = []
    for i, (entry, act) in enumerate(zip(entries, acts)):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        w = np.asarray(entry.get("w", []), dtype=np.float64)
        b = np.asarray(entry.get("b", []), dtype=np.float64)
        if w.size != fan_in * fan_out or b.shape != (fan_out,):
            raise ShapeMismatch(f"layer {i}: expected w {fan_out}x{fan_in} and b {fan_out}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ShapeMismatch(f"layer {i}: non-finite parameters")
        layers.append(Layer(w.reshape(fan_out, fan_in), b, act))
    return Mlp(layers)


def save_mlp(net: Mlp, path):
    write_json(path, mlp_to_dict(net))


def load_mlp(path) -> Mlp:
    with open(path) as fh:
        return mlp_from_dict(json.load(fh))
