"""Small dense networks: tanh MLPs with linear output, and sigmoid gates."""

from dataclasses import dataclass
from typing import Any, List

import numpy as np

from . import autodiff as ad
from .errors import DimMismatch
from .rng import stream_rng


@dataclass
class LayerParams:
    weights: Any  # (out, in)
    bias: Any  # (out,)


@dataclass
class MLPParams:
    """Affine layers with tanh between them; no activation on the output."""

    layers: List[LayerParams]

    @property
    def in_dim(self):
        return _shape(self.layers[0].weights)[1]

    @property
    def out_dim(self):
        return _shape(self.layers[-1].weights)[0]


@dataclass
class GateParams:
    """Single affine layer squashed by a sigmoid; outputs live in (0, 1)."""

    weights: Any
    bias: Any


def _shape(x):
    return (x.value if isinstance(x, ad.Var) else np.asarray(x)).shape


def mlp_forward(net, x):
    """Apply the MLP to a single input (in,) or a batch (B, in)."""
    if _shape(x)[-1] != net.in_dim:
        raise DimMismatch(f"input dim {_shape(x)} does not match net in_dim {net.in_dim}")
    h = x
    last = len(net.layers) - 1
    for i, layer in enumerate(net.layers):
        if len(_shape(h)) == 1:
            h = layer.weights @ h + layer.bias
        else:
            h = h @ ad.transpose(layer.weights) + layer.bias
        if i != last:
            h = ad.tanh(h)
    return h


def gate_forward(gate, x):
    return ad.sigmoid(gate.weights @ x + gate.bias)


def xavier_init(shape, rng):
    """Uniform on +-sqrt(6 / (fan_in + fan_out)) for a (out, in) weight matrix."""
    if isinstance(rng, (int, np.integer)):
        rng = stream_rng(rng)
    fan_out, fan_in = shape
    if fan_in < 1 or fan_out < 1:
        raise DimMismatch("fan_in and fan_out must be at least 1")
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def init_mlp(dims, rng):
    """Xavier weights, N(0, 0.01^2) biases, for consecutive layer sizes ``dims``."""
    if isinstance(rng, (int, np.integer)):
        rng = stream_rng(rng)
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w = xavier_init((fan_out, fan_in), rng)
        b = rng.normal(0.0, 0.01, size=fan_out)
        layers.append(LayerParams(w, b))
    return MLPParams(layers)


def init_gate(in_dim, out_dim, rng, bias=2.0):
    """Forget-gate init: a positive bias starts the gate mostly open toward
    the carried-over parameters, the usual guard against early state collapse
    in recurrent training."""
    if isinstance(rng, (int, np.integer)):
        rng = stream_rng(rng)
    return GateParams(xavier_init((out_dim, in_dim), rng), bias + rng.normal(0.0, 0.01, size=out_dim))
