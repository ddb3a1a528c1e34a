"""Configuration and run-record plumbing for the experiment runners.

A config is one JSON object; ``kind`` picks the runner and the remaining
sections parameterize it. Defaults below reproduce the desk-scale setups;
every field can be overridden from the file. README documents the schema
field by field.
"""

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from typing import Any, Dict

import numpy as np

from .. import __version__
from ..models import LGParams

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "linear": {
        "seed": 0,
        "out_dir": "runs/linear",
        "threads": 1,
        "model": {"a0": 0.0, "q0": 1.0, "a": 0.9, "q": 0.1, "b": 1.0, "r": 0.5},
        "lambda_init": {"a0": 0.2, "q0": 1.4, "a": 0.55, "q": 0.45, "b": 0.65, "r": 1.1},
        "n_train": 64,
        "n_train_sequences": 8,
        "epochs": 100,
        "stopping_epochs": [60, 80, 100],
        "optimizer": {"method": "adam", "learning_rate": 0.02, "beta1": 0.9,
                      "beta2": 0.999, "eps": 1e-8, "clip_norm": 0.0, "lr_decay": 0.995},
        "eval": {"J": 20, "n_eval": 2000, "eval_ns": [125, 250, 500, 1000, 2000]},
    },
    "nonlinear": {
        "seed": 0,
        "out_dir": "runs/nonlinear",
        "threads": 1,
        "model": {"a0": 0.0, "q0": 1.0, "a": 0.9, "q": 0.1},
        "emission": {"w1": 0.8, "b1": 0.0, "w2": 2.4, "b2": 1.1, "r": 0.03},
        "n": 500,
        "sequences": 5,
        "epochs": 130,
        "restarts": {"johnson": 1, "gated": 3},
        "warmup_epochs": 35,
        "mc_samples": 8,
        "hidden": 16,
        "optimizer": {"method": "adam", "learning_rate": 0.02, "beta1": 0.9,
                      "beta2": 0.999, "eps": 1e-8, "clip_norm": 100.0, "lr_decay": 0.99},
        "ffbsi": {"n_particles": 2000, "n_trajectories": 1000},
        "eval_ns": [125, 250, 500],
    },
    "bound-verify": {
        "seed": 0,
        "out_dir": "runs/bound",
        "threads": 1,
        "instances": 200,
        "state_counts": [2, 3, 4],
        "horizons": [5, 10, 20, 30],
        "kappas": [3.0, 10.0, 50.0],
        "growth": {"s": 3, "kappa": 8.0, "horizons": list(range(10, 201, 10)), "marginal_k": 5},
    },
    "simulate": {
        "seed": 0,
        "out_dir": "runs/simulate",
        "threads": 1,
        "model": {"a0": 0.0, "q0": 1.0, "a": 0.9, "q": 0.1, "b": 1.0, "r": 0.5},
        "n": 100,
        "sequences": 1,
    },
    "ffbsi": {
        "seed": 0,
        "out_dir": "runs/ffbsi",
        "threads": 1,
        "model": {"a0": 0.0, "q0": 1.0, "a": 0.5, "q": 0.4, "b": 1.0, "r": 0.5},
        "n": 100,
        "n_particles": 2000,
        "n_trajectories": 1000,
    },
    "eval-error": {
        "seed": 0,
        "out_dir": "runs/eval",
        "threads": 1,
        "model": {"a0": 0.0, "q0": 1.0, "a": 0.9, "q": 0.1, "b": 1.0, "r": 0.5},
        "checkpoint": "",
        "J": 20,
        "n_eval": 2000,
        "eval_ns": [125, 250, 500, 1000, 2000],
    },
}


@dataclass
class ExperimentConfig:
    kind: str
    data: Dict[str, Any] = field(default_factory=dict)

    def __getitem__(self, key):
        return self.data[key]

    def get(self, key, default=None):
        return self.data.get(key, default)

    @classmethod
    def from_json(cls, path, overrides=None):
        with open(path) as fh:
            payload = json.load(fh)
        return cls.from_dict(payload, overrides)

    @classmethod
    def from_dict(cls, payload, overrides=None):
        kind = payload.get("kind")
        if kind not in DEFAULTS:
            raise ValueError(f"unknown experiment kind {kind!r}; expected one of {sorted(DEFAULTS)}")
        data = _merge(DEFAULTS[kind], payload)
        if overrides:
            data = _merge(data, overrides)
        cfg = cls(kind, data)
        cfg.validate()
        return cfg

    def validate(self):
        for key in ("n", "n_train", "sequences", "epochs", "instances", "J", "n_eval",
                    "n_particles", "n_trajectories", "mc_samples"):
            if key in self.data and int(self.data[key]) < 0:
                raise ValueError(f"config field {key} must be nonnegative")
        ckpt = self.data.get("checkpoint")
        if self.kind == "eval-error" and ckpt and not os.path.exists(ckpt):
            raise FileNotFoundError(f"checkpoint file {ckpt} does not exist")
        return self

    def canonical_json(self):
        payload = dict(self.data)
        payload["kind"] = self.kind
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    def hash(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    def lg_model(self, key="model"):
        return lg_from_config(self.data[key])


def _merge(base, override):
    out = dict(base)
    for key, value in override.items():
        if key == "kind":
            continue
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def lg_from_config(section):
    """Model parameters from scalars (d = 1) or nested lists (general d)."""
    def mat(v):
        arr = np.asarray(v, dtype=float)
        return arr.reshape(1, 1) if arr.ndim == 0 else np.atleast_2d(arr)

    def vec(v):
        arr = np.asarray(v, dtype=float)
        return arr.reshape(1) if arr.ndim == 0 else arr

    return LGParams(
        a0=vec(section["a0"]), q0=mat(section["q0"]), a=mat(section["a"]),
        q=mat(section["q"]), b=mat(section.get("b", 1.0)), r=mat(section.get("r", 1.0)),
    ).validate()


# ---------------------------------------------------------------------------
# run records
# ---------------------------------------------------------------------------

class RunRecord:
    """Manifest of one experiment run; every listed file must exist non-empty."""

    def __init__(self, config, out_dir):
        self.config = config
        self.out_dir = out_dir
        self.started = time.time()
        self.files = []
        self.metrics: Dict[str, Any] = {}

    def path(self, name):
        os.makedirs(self.out_dir, exist_ok=True)
        return os.path.join(self.out_dir, name)

    def register(self, name):
        self.files.append(name)
        return self.path(name)

    def finalize(self):
        for name in self.files:
            full = self.path(name)
            if not os.path.exists(full) or os.path.getsize(full) == 0:
                raise FileNotFoundError(f"manifest lists {name} but it is missing or empty")
        payload = {
            "config_hash": self.config.hash(),
            "version": f"bvsmooth-{__version__}+cfg.{self.config.hash()[:8]}",
            "wall_time_s": round(time.time() - self.started, 3),
            "files": list(self.files),
            "metrics": self.metrics,
        }
        with open(self.path("record.json"), "w") as fh:
            json.dump(payload, fh, indent=1, sort_keys=True)
        return payload
