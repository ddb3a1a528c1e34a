"""Parameter packing and training loops for the two experiment families.

Everything trainable lives in one flat vector: model matrices directly,
covariances through the log-Cholesky map. The builders below reconstruct
typed model objects from a tape Var holding that vector, so one objective
function serves evaluation and differentiation.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from . import autodiff as ad
from .amortized import MODE_GATED, MODE_JOHNSON, amortized_family, mc_elbo_nonlinear, sample_mc_noise
from .models import LatentDynamics, LGParams
from .nets import GateParams, LayerParams, MLPParams
from .optim import (
    LayoutBuilder,
    OptimizerState,
    ParamVector,
    constrain_spd,
    optimizer_step,
    packed_size,
    slice_of,
    unconstrain_spd,
)
from .variational import elbo_closed_form


# ---------------------------------------------------------------------------
# linear-Gaussian surrogate
# ---------------------------------------------------------------------------

def pack_lg(params):
    """LGParams -> flat unconstrained ParamVector."""
    lb = LayoutBuilder()
    lb.add("a0", np.asarray(params.a0, dtype=float))
    lb.add("q0", unconstrain_spd(params.q0))
    lb.add("a", np.asarray(params.a, dtype=float))
    lb.add("q", unconstrain_spd(params.q))
    lb.add("b", np.asarray(params.b, dtype=float))
    lb.add("r", unconstrain_spd(params.r))
    return lb.pack()


def lg_from_vector(vec, pv, d, m):
    """Rebuild LGParams (possibly of tape Vars) from the flat vector."""
    return LGParams(
        a0=slice_of(vec, pv, "a0"),
        q0=constrain_spd(slice_of(vec, pv, "q0"), d),
        a=slice_of(vec, pv, "a"),
        q=constrain_spd(slice_of(vec, pv, "q"), d),
        b=slice_of(vec, pv, "b"),
        r=constrain_spd(slice_of(vec, pv, "r"), m),
    )


def lg_values(pv, d, m):
    """Plain-float LGParams at the current vector values."""
    return lg_from_vector(pv.values, pv, d, m)


@dataclass
class TrainResult:
    params: ParamVector
    history: List[dict]
    checkpoints: Dict[int, ParamVector]


def train_linear_elbo(theta, y, lambda_init, epochs, opt_state, checkpoint_epochs=()):
    """Maximize the closed-form ELBO in lambda by Adam ascent.

    ``y`` is one observation array or a list of them; with several, the
    objective is the summed bound over the batch (full-batch gradient).
    ``lambda_init`` is an LGParams starting point; checkpoints are snapshots
    of the parameter vector after the listed epochs (epoch count starts at 1;
    0 snapshots the initialization).
    """
    d, m = theta.dim_state, theta.dim_obs
    batch = y if isinstance(y, (list, tuple)) else [y]
    pv = pack_lg(lambda_init)
    checkpoint_epochs = set(int(e) for e in checkpoint_epochs)
    checkpoints = {}
    if 0 in checkpoint_epochs or epochs == 0:
        checkpoints[0] = pv
    history = []

    def objective(vec):
        lam = lg_from_vector(vec, pv, d, m)
        total = elbo_closed_form(theta, lam, batch[0])
        for seq in batch[1:]:
            total = total + elbo_closed_form(theta, lam, seq)
        return total

    state = opt_state
    for epoch in range(1, epochs + 1):
        value, grad = ad.value_and_grad(objective, pv.values)
        state, pv = optimizer_step(state, pv, grad)
        history.append({"epoch": epoch, "elbo": value})
        if epoch in checkpoint_epochs:
            checkpoints[epoch] = pv
    return TrainResult(pv, history, checkpoints)


# ---------------------------------------------------------------------------
# amortized nonlinear surrogate
# ---------------------------------------------------------------------------

@dataclass
class ArchSpec:
    """Architecture descriptor for the amortized networks."""

    mode: str  # "johnson" | "gated"
    layer_dims: List[int]
    gate: bool

    def to_json(self):
        return {"layer_dims": list(self.layer_dims), "gate": self.gate, "mode": self.mode}

    @classmethod
    def from_json(cls, payload):
        return cls(payload["mode"], list(payload["layer_dims"]), bool(payload["gate"]))


def default_arch(mode, d=1, m=1, hidden=16):
    if mode == MODE_JOHNSON:
        return ArchSpec(mode, [m, hidden, hidden, 2 * d], gate=False)
    if mode == MODE_GATED:
        return ArchSpec(mode, [2 * d + m, hidden, hidden, 2 * d], gate=True)
    raise ValueError(f"unknown mode {mode!r}")


def pack_amortized(dynamics, net, gate=None):
    """Variational dynamics + update net (+ gate) -> flat ParamVector."""
    lb = LayoutBuilder()
    lb.add("a0", np.asarray(dynamics.a0, dtype=float))
    lb.add("q0", unconstrain_spd(dynamics.q0))
    lb.add("a", np.asarray(dynamics.a, dtype=float))
    lb.add("q", unconstrain_spd(dynamics.q))
    for i, layer in enumerate(net.layers):
        lb.add(f"w{i}", np.asarray(layer.weights, dtype=float))
        lb.add(f"b{i}", np.asarray(layer.bias, dtype=float))
    if gate is not None:
        lb.add("gw", np.asarray(gate.weights, dtype=float))
        lb.add("gb", np.asarray(gate.bias, dtype=float))
    return lb.pack()


def amortized_from_vector(vec, pv, arch, d=1):
    dynamics = LatentDynamics(
        a0=slice_of(vec, pv, "a0"),
        q0=constrain_spd(slice_of(vec, pv, "q0"), d),
        a=slice_of(vec, pv, "a"),
        q=constrain_spd(slice_of(vec, pv, "q"), d),
    )
    layers = []
    for i in range(len(arch.layer_dims) - 1):
        layers.append(LayerParams(slice_of(vec, pv, f"w{i}"), slice_of(vec, pv, f"b{i}")))
    net = MLPParams(layers)
    gate = GateParams(slice_of(vec, pv, "gw"), slice_of(vec, pv, "gb")) if arch.gate else None
    return dynamics, net, gate


def build_family(vec, pv, arch, y, d=1):
    dynamics, net, gate = amortized_from_vector(vec, pv, arch, d)
    if arch.mode == MODE_JOHNSON:
        fam = amortized_family(dynamics, y, MODE_JOHNSON, encoder=net)
    else:
        fam = amortized_family(dynamics, y, MODE_GATED, update_net=net, gate=gate)
    return dynamics, fam


def train_amortized(theta_dynamics, emission, y, arch, init_pv, epochs, opt_state,
                    mc_samples, seed, noise_stream=(), history=None):
    """Maximize the Monte Carlo ELBO; fresh reparameterization noise each epoch."""
    y = np.asarray(y, dtype=float)
    pv = init_pv
    state = opt_state
    history = history if history is not None else []
    start = len(history)
    for epoch in range(start + 1, start + epochs + 1):
        noise = sample_mc_noise(y.shape[0], mc_samples, seed, stream=tuple(noise_stream) + (epoch,))

        def objective(vec):
            _, fam = build_family(vec, pv, arch, y)
            return mc_elbo_nonlinear(theta_dynamics, emission, fam, y, noise)

        value, grad = ad.value_and_grad(objective, pv.values)
        state, pv = optimizer_step(state, pv, grad)
        history.append({"epoch": epoch, "elbo": value})
    return TrainResult(pv, history, {start + epochs: pv})


def train_amortized_with_restarts(theta_dynamics, emission, y, arch, init_fn, epochs,
                                  opt_fn, mc_samples, seed, noise_stream=(),
                                  restarts=1, warmup_epochs=0):
    """Warm up several initializations, keep the best bound, finish training it.

    The nonlinear family has alias optima (the noninjective decoder admits
    mirror solutions with clearly lower bound values); a short warmup race
    followed by best-of selection avoids them deterministically.
    """
    restarts = max(1, int(restarts))
    if restarts == 1 or warmup_epochs <= 0:
        pv = init_fn(0)
        return train_amortized(theta_dynamics, emission, y, arch, pv, epochs,
                               opt_fn(pv), mc_samples, seed, noise_stream=noise_stream)
    candidates = []
    for r in range(restarts):
        pv = init_fn(r)
        result = train_amortized(
            theta_dynamics, emission, y, arch, pv, warmup_epochs, opt_fn(pv),
            mc_samples, seed, noise_stream=tuple(noise_stream) + (r,),
        )
        candidates.append(result)
    best_idx = int(np.argmax([res.history[-1]["elbo"] for res in candidates]))
    best = candidates[best_idx]
    remaining = max(0, epochs - warmup_epochs)
    # moments restart with the surviving parameters; the history keeps growing
    return train_amortized(
        theta_dynamics, emission, y, arch, best.params, remaining,
        opt_fn(best.params), mc_samples, seed,
        noise_stream=tuple(noise_stream) + (best_idx,), history=best.history,
    )


def init_amortized(arch, seed, d=1, a0=0.0, q0=1.0, a=0.8, q=0.2):
    """Fresh networks (Xavier) and mildly generic starting dynamics."""
    from .nets import init_gate, init_mlp
    from .rng import stream_rng

    rng = stream_rng(seed, 901)
    net = init_mlp(arch.layer_dims, rng)
    gate = init_gate(arch.layer_dims[0], arch.layer_dims[-1], rng) if arch.gate else None
    dynamics = LatentDynamics(
        np.full(d, float(a0)),
        np.eye(d) * float(q0),
        np.eye(d) * float(a),
        np.eye(d) * float(q),
    )
    return pack_amortized(dynamics, net, gate)
