"""Flat parameter vectors, constraint transforms, and first-order optimizers.

Covariance blocks are optimized through a log-Cholesky map: the packed
lower-triangle entries are free, the diagonal passes through exp, and the
matrix is rebuilt as L L'. Positive definiteness therefore holds for every
point of the unconstrained space.
"""

import json
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from . import autodiff as ad
from . import linalg
from .errors import DimMismatch, NonFiniteValue


@dataclass
class ParamVector:
    """Flat array plus a named layout of (offset, shape) slices."""

    values: np.ndarray
    layout: Dict[str, Tuple[int, Tuple[int, ...]]]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        covered = sum(int(np.prod(shape)) for _, shape in self.layout.values())
        if covered != self.values.shape[0]:
            raise DimMismatch(f"layout covers {covered} entries, vector has {self.values.shape[0]}")

    def get(self, name):
        off, shape = self.layout[name]
        return self.values[off : off + int(np.prod(shape))].reshape(shape)

    def replace(self, values):
        return ParamVector(values, self.layout)


class LayoutBuilder:
    """Accumulates named slices; ``pack`` produces the ParamVector."""

    def __init__(self):
        self._names = []
        self._arrays = []

    def add(self, name, array):
        self._names.append(name)
        self._arrays.append(np.asarray(array, dtype=float))
        return self

    def pack(self):
        layout = {}
        off = 0
        flat = []
        for name, arr in zip(self._names, self._arrays):
            layout[name] = (off, arr.shape)
            flat.append(arr.ravel())
            off += arr.size
        return ParamVector(np.concatenate(flat) if flat else np.zeros(0), layout)


def slice_of(vec_var, pv, name):
    """Take the named block out of a tape Var holding the flat vector."""
    off, shape = pv.layout[name]
    size = int(np.prod(shape))
    piece = ad.take(vec_var, slice(off, off + size))
    return ad.reshape(piece, shape) if shape else piece


# ---------------------------------------------------------------------------
# SPD constraint (log-Cholesky)
# ---------------------------------------------------------------------------

def tril_indices_packed(d):
    """Row-major packed order of the lower triangle: (0,0),(1,0),(1,1),..."""
    rows, cols = [], []
    for i in range(d):
        for j in range(i + 1):
            rows.append(i)
            cols.append(j)
    return np.array(rows), np.array(cols)


def constrain_spd(packed, d):
    """Packed lower-triangle entries -> SPD matrix L L' with exp on the diag.

    Works on plain arrays and tape Vars; gradients flow through.
    """
    rows, cols = tril_indices_packed(d)
    diag_mask = rows == cols
    flat_pos = rows * d + cols
    diag_sel = np.nonzero(diag_mask)[0]
    off_sel = np.nonzero(~diag_mask)[0]
    lower = ad.scatter(ad.exp(ad.take(packed, diag_sel)), flat_pos[diag_sel], (d, d))
    if off_sel.size:
        lower = lower + ad.scatter(ad.take(packed, off_sel), flat_pos[off_sel], (d, d))
    return lower @ ad.transpose(lower)


def unconstrain_spd(m):
    """Inverse of constrain_spd for plain SPD matrices."""
    lower = linalg.cholesky(np.asarray(m, dtype=float))
    rows, cols = tril_indices_packed(lower.shape[0])
    packed = lower[rows, cols]
    diag = rows == cols
    packed = packed.copy()
    packed[diag] = np.log(packed[diag])
    return packed


def packed_size(d):
    return d * (d + 1) // 2


# ---------------------------------------------------------------------------
# optimizers (ascent convention: parameters move along +gradient)
# ---------------------------------------------------------------------------

@dataclass
class OptimizerState:
    method: str = "adam"
    step: int = 0
    m: np.ndarray = field(default_factory=lambda: np.zeros(0))
    v: np.ndarray = field(default_factory=lambda: np.zeros(0))
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 0.0  # 0 disables clipping
    lr_decay: float = 1.0  # multiplicative per-step decay; 1 keeps lr constant

    @classmethod
    def adam(cls, n_params, learning_rate=1e-2, beta1=0.9, beta2=0.999, eps=1e-8,
             clip_norm=0.0, lr_decay=1.0):
        return cls("adam", 0, np.zeros(n_params), np.zeros(n_params), learning_rate,
                   beta1, beta2, eps, clip_norm, lr_decay)

    @classmethod
    def sgd(cls, n_params, learning_rate=1e-2, clip_norm=0.0, lr_decay=1.0):
        return cls("sgd", 0, np.zeros(n_params), np.zeros(n_params), learning_rate,
                   clip_norm=clip_norm, lr_decay=lr_decay)

    def current_lr(self, step):
        return self.learning_rate * self.lr_decay ** (step - 1)


def _checked(grad):
    grad = np.asarray(grad, dtype=float)
    if not np.all(np.isfinite(grad)):
        raise NonFiniteValue("gradient contains non-finite entries")
    return grad


def clip_global_norm(grad, max_norm):
    norm = float(np.linalg.norm(grad))
    if max_norm > 0.0 and norm > max_norm:
        return grad * (max_norm / norm)
    return grad


def adam_step(state, params, grad):
    """One Adam ascent step with bias correction; returns (state, params)."""
    grad = clip_global_norm(_checked(grad), state.clip_norm)
    if grad.shape != params.values.shape or state.m.shape != grad.shape:
        raise DimMismatch("gradient / moment shapes do not match the parameters")
    step = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** step)
    v_hat = v / (1.0 - state.beta2 ** step)
    delta = state.current_lr(step) * m_hat / (np.sqrt(v_hat) + state.eps)
    new_values = params.values + delta
    if not np.all(np.isfinite(new_values)):
        raise NonFiniteValue("parameters became non-finite")
    new_state = OptimizerState(
        "adam", step, m, v, state.learning_rate, state.beta1, state.beta2, state.eps,
        state.clip_norm, state.lr_decay,
    )
    return new_state, params.replace(new_values)


def sgd_step(state, params, grad):
    grad = clip_global_norm(_checked(grad), state.clip_norm)
    new_values = params.values + state.current_lr(state.step + 1) * grad
    if not np.all(np.isfinite(new_values)):
        raise NonFiniteValue("parameters became non-finite")
    new_state = OptimizerState(
        "sgd", state.step + 1, state.m, state.v, state.learning_rate,
        state.beta1, state.beta2, state.eps, state.clip_norm, state.lr_decay,
    )
    return new_state, params.replace(new_values)


def optimizer_step(state, params, grad):
    if state.method == "adam":
        return adam_step(state, params, grad)
    if state.method == "sgd":
        return sgd_step(state, params, grad)
    raise ValueError(f"unknown optimizer method {state.method!r}")


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, params, state):
    payload = {
        "layout": {name: [off, list(shape)] for name, (off, shape) in params.layout.items()},
        "values": [f"{v:.17g}" for v in params.values],
        "optimizer": {
            "method": state.method,
            "step": state.step,
            "m": [f"{v:.17g}" for v in state.m],
            "v": [f"{v:.17g}" for v in state.v],
            "hyper": {
                "learning_rate": state.learning_rate,
                "beta1": state.beta1,
                "beta2": state.beta2,
                "eps": state.eps,
                "clip_norm": state.clip_norm,
                "lr_decay": state.lr_decay,
            },
        },
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)


def load_checkpoint(path):
    with open(path) as fh:
        payload = json.load(fh)
    layout = {name: (off, tuple(shape)) for name, (off, shape) in payload["layout"].items()}
    params = ParamVector(np.array([float(v) for v in payload["values"]]), layout)
    opt = payload["optimizer"]
    hyper = opt["hyper"]
    state = OptimizerState(
        opt["method"],
        int(opt["step"]),
        np.array([float(v) for v in opt["m"]]),
        np.array([float(v) for v in opt["v"]]),
        float(hyper["learning_rate"]),
        float(hyper["beta1"]),
        float(hyper["beta2"]),
        float(hyper["eps"]),
        float(hyper.get("clip_norm", 0.0)),
        float(hyper.get("lr_decay", 1.0)),
    )
    return params, state
