import csv
import hashlib
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from bvsmooth.experiments.config import DEFAULTS, ExperimentConfig, RunRecord, lg_from_config
from bvsmooth.experiments.linear import run_linear_experiment
from bvsmooth.experiments.verify import run_bound_verify


def run_cli(args):
    return subprocess.run(
        [sys.executable, "-m", "bvsmooth.experiments.cli", *args],
        capture_output=True, text=True,
    )


def digest(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


class TestConfig:
    def test_defaults_merge_and_hash(self):
        cfg = ExperimentConfig.from_dict({"kind": "linear", "epochs": 3})
        assert cfg["epochs"] == 3
        assert cfg["n_train"] == DEFAULTS["linear"]["n_train"]
        assert cfg.hash() == ExperimentConfig.from_dict({"kind": "linear", "epochs": 3}).hash()
        assert cfg.hash() != ExperimentConfig.from_dict({"kind": "linear", "epochs": 4}).hash()

    def test_nested_override(self):
        cfg = ExperimentConfig.from_dict({"kind": "linear", "optimizer": {"learning_rate": 0.5}})
        assert cfg["optimizer"]["learning_rate"] == 0.5
        assert cfg["optimizer"]["beta1"] == 0.9

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            ExperimentConfig.from_dict({"kind": "nope"})

    def test_model_from_scalars_and_arrays(self):
        scalars = lg_from_config({"a0": 0.0, "q0": 1.0, "a": 0.9, "q": 0.1, "b": 1.0, "r": 0.5})
        assert scalars.dim_state == 1
        arrays = lg_from_config({
            "a0": [0.0, 0.0], "q0": [[1.0, 0.0], [0.0, 1.0]],
            "a": [[0.5, 0.0], [0.1, 0.4]], "q": [[0.2, 0.0], [0.0, 0.2]],
            "b": [[1.0, 0.0]], "r": [[0.5]],
        })
        assert arrays.dim_state == 2
        assert arrays.dim_obs == 1

    def test_missing_checkpoint_rejected(self):
        with pytest.raises(FileNotFoundError):
            ExperimentConfig.from_dict({"kind": "eval-error", "checkpoint": "/nonexistent.json"})


class TestRunRecord:
    def test_manifest_integrity(self, tmp_path):
        cfg = ExperimentConfig.from_dict({"kind": "simulate"})
        record = RunRecord(cfg, str(tmp_path))
        with open(record.register("data.csv"), "w") as fh:
            fh.write("k\n0\n")
        payload = record.finalize()
        assert payload["files"] == ["data.csv"]
        assert os.path.exists(tmp_path / "record.json")
        assert payload["config_hash"] == cfg.hash()

    def test_missing_file_detected(self, tmp_path):
        cfg = ExperimentConfig.from_dict({"kind": "simulate"})
        record = RunRecord(cfg, str(tmp_path))
        record.register("ghost.csv")
        with pytest.raises(FileNotFoundError):
            record.finalize()


class TestCLI:
    def test_simulate_bit_identical(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        json.dump({"kind": "simulate", "n": 40, "sequences": 1, "seed": 5}, open(cfg_path, "w"))
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            r = run_cli(["simulate", "--config", str(cfg_path), "--out", str(out)])
            assert r.returncode == 0, r.stderr
            outs.append(digest(out / "trajectory_000.csv"))
        assert outs[0] == outs[1]

    def test_ffbsi_command(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        json.dump({"kind": "ffbsi", "n": 30, "n_particles": 200, "n_trajectories": 50, "seed": 3},
                  open(cfg_path, "w"))
        out = tmp_path / "run"
        r = run_cli(["ffbsi", "--config", str(cfg_path), "--out", str(out)])
        assert r.returncode == 0, r.stderr
        rows = list(csv.DictReader(open(out / "additive.csv")))
        est, se, exact = (float(rows[0][k]) for k in ("estimate", "stderr", "exact"))
        assert abs(est - exact) < 6 * se

    def test_verify_bound_exit_status_and_reruns(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        json.dump({"kind": "bound-verify", "instances": 8, "seed": 11,
                   "growth": {"s": 2, "kappa": 8.0, "horizons": [10, 20], "marginal_k": 3}},
                  open(cfg_path, "w"))
        digests = []
        for name in ("a", "b"):
            out = tmp_path / name
            r = run_cli(["verify-bound", "--config", str(cfg_path), "--out", str(out)])
            assert r.returncode == 0, r.stderr
            digests.append((digest(out / "verifier.csv"), digest(out / "growth.csv")))
        assert digests[0] == digests[1]
        rows = list(csv.DictReader(open(tmp_path / "a" / "verifier.csv")))
        assert len(rows) == 8
        assert all(r["holds"] == "true" for r in rows)

    def test_kind_mismatch_rejected(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        json.dump({"kind": "simulate"}, open(cfg_path, "w"))
        r = run_cli(["verify-bound", "--config", str(cfg_path), "--out", str(tmp_path / "x")])
        assert r.returncode != 0

    def test_train_linear_small_and_eval_roundtrip(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        json.dump({
            "kind": "linear", "seed": 1, "n_train": 16, "n_train_sequences": 2,
            "epochs": 2, "stopping_epochs": [2],
            "eval": {"J": 2, "n_eval": 50, "eval_ns": [25, 50]},
        }, open(cfg_path, "w"))
        out = tmp_path / "run"
        r = run_cli(["train-linear", "--config", str(cfg_path), "--out", str(out)])
        assert r.returncode == 0, r.stderr
        record = json.load(open(out / "record.json"))
        for name in record["files"]:
            assert os.path.getsize(out / name) > 0
        assert os.path.exists(out / "checkpoint_0002.json")

        eval_cfg = tmp_path / "eval.json"
        json.dump({
            "kind": "eval-error", "seed": 1, "checkpoint": str(out / "checkpoint_0002.json"),
            "J": 2, "n_eval": 40, "eval_ns": [40],
        }, open(eval_cfg, "w"))
        r2 = run_cli(["eval-error", "--config", str(eval_cfg), "--out", str(tmp_path / "eval")])
        assert r2.returncode == 0, r2.stderr
        rows = list(csv.DictReader(open(tmp_path / "eval" / "additive_error.csv")))
        assert len(rows) == 2


class TestLinearRunnerInProcess:
    def test_zero_epochs_exact_init_gives_tiny_error(self, tmp_path):
        cfg = ExperimentConfig.from_dict({
            "kind": "linear", "out_dir": str(tmp_path), "epochs": 0,
            "lambda_init": dict(DEFAULTS["linear"]["model"]),
            "stopping_epochs": [0],
            "eval": {"J": 3, "n_eval": 60, "eval_ns": [30, 60]},
        })
        record = RunRecord(cfg, cfg["out_dir"])
        run_linear_experiment(cfg, record)
        payload = record.finalize()
        errors = payload["metrics"]["final_errors_by_epoch"]["0"]
        assert max(errors) < 1e-8

    def test_training_curve_schema(self, tmp_path):
        cfg = ExperimentConfig.from_dict({
            "kind": "linear", "out_dir": str(tmp_path), "epochs": 3,
            "n_train": 12, "n_train_sequences": 1, "stopping_epochs": [3],
            "eval": {"J": 1, "n_eval": 20, "eval_ns": [20]},
        })
        record = RunRecord(cfg, cfg["out_dir"])
        run_linear_experiment(cfg, record)
        record.finalize()
        rows = list(csv.DictReader(open(tmp_path / "training_curve.csv")))
        assert list(rows[0].keys()) == ["epoch", "elbo", "loglik"]
        assert len(rows) == 3
        rows = list(csv.DictReader(open(tmp_path / "additive_error.csv")))
        assert list(rows[0].keys()) == ["checkpoint_epoch", "sequence_id", "n", "abs_error"]


class TestVerifyRunnerInProcess:
    def test_growth_rows_monotone_cap(self, tmp_path):
        cfg = ExperimentConfig.from_dict({
            "kind": "bound-verify", "out_dir": str(tmp_path), "instances": 5,
            "growth": {"s": 3, "kappa": 10.0, "horizons": [10, 30, 60], "marginal_k": 2},
        })
        record = RunRecord(cfg, cfg["out_dir"])
        _, violations = run_bound_verify(cfg, record)
        record.finalize()
        assert violations == 0
        rows = list(csv.DictReader(open(tmp_path / "growth.csv")))
        for row in rows:
            assert float(row["lhs"]) <= float(row["linear_cap"]) + 1e-10
            assert float(row["marginal_lhs"]) <= float(row["marginal_cap"]) + 1e-10
