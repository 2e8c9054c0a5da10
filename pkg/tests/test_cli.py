import csv

import pytest

from latentalign.config import settings
from latentalign.database import load_results
from latentalign.main import main

TINY = {
    "factor_dim": 2,
    "num_classes": 3,
    "dim_v": 8,
    "dim_a": 8,
    "world_hidden": 8,
    "n_frames": 2,
    "train_per_class": 16,
    "heldout_per_class": 4,
    "latent_dim": 4,
    "diffusion_steps": 50,
    "beta_end": 0.05,
    "hidden_width": 16,
    "time_dim": 8,
    "prompt_dim": 4,
    "denoiser_epochs": 2,
    "denoiser_batch_size": 32,
    "binder_epochs": 2,
    "binder_batch_size": 32,
    "inf_steps": 8,
}


@pytest.fixture
def workspace(tmp_path):
    args = []
    for key, value in TINY.items():
        args += ["--set", f"{key}={value}"]
    args += ["--set", f"data_dir={tmp_path / 'data'}", "--set", f"checkpoint_dir={tmp_path / 'ckpt'}", "--out", str(tmp_path / "out")]
    return tmp_path, args


@pytest.fixture
def trained_workspace(workspace):
    tmp_path, args = workspace
    assert main(["gen-data", *args]) == 0
    assert main(["train", *args]) == 0
    return tmp_path, args


def _report_rows(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# ")
    return list(csv.DictReader(lines[1:]))


def test_full_pipeline(trained_workspace, capsys):
    tmp_path, args = trained_workspace
    assert (tmp_path / "data" / "train.shds").exists()
    assert sorted(p.name for p in (tmp_path / "ckpt").iterdir()) == [
        "autoencoder_a.shla",
        "autoencoder_v.shla",
        "binder.shla",
        "denoiser_a.shla",
        "denoiser_v.shla",
    ]

    assert main(["run", *args, "--runs", "4"]) == 0
    echo, runs = load_results(tmp_path / "out" / "results.db")
    assert echo["config"]["runs"] == 4
    assert [(i, r.variant) for i, r in runs] == [(i, v) for i in range(4) for v in ("guided", "vanilla")]

    assert main(["eval", *args]) == 0
    rows = _report_rows(tmp_path / "out" / "report.csv")
    assert len(rows) == 4
    assert all(row["task"] == "v2a" for row in rows)
    assert "GUIDED vs VANILLA" in capsys.readouterr().out


def test_run_is_reproducible(trained_workspace):
    tmp_path, args = trained_workspace
    payloads = []
    for _ in range(2):
        assert main(["run", *args, "--task", "joint", "--runs", "2"]) == 0
        _, runs = load_results(tmp_path / "out" / "results.db")
        payloads.append([r.payload_json() for _, r in runs])
    assert payloads[0] == payloads[1]


def test_worker_pool_matches_in_process_run(trained_workspace):
    tmp_path, args = trained_workspace
    workers_before = settings.workers
    payloads = {}
    for workers in ("1", "2"):
        assert main(["run", *args, "--task", "joint", "--runs", "6", "--workers", workers]) == 0
        _, runs = load_results(tmp_path / "out" / "results.db")
        payloads[workers] = [(i, r.variant, r.payload_json()) for i, r in runs]
    assert len(payloads["2"]) == 12
    assert payloads["1"] == payloads["2"]
    assert settings.workers == workers_before


def test_zero_step_size_reports_no_difference(trained_workspace):
    tmp_path, args = trained_workspace
    assert main(["run", *args, "--task", "a2v", "--lambda1", "0", "--lambda2", "0", "--runs", "3"]) == 0
    assert main(["eval", *args]) == 0
    for row in _report_rows(tmp_path / "out" / "report.csv"):
        assert row["align_vanilla"] == row["align_guided"]
        assert row["triangle_final_vanilla"] == row["triangle_final_guided"]
        assert row["mmd_vanilla"] == row["mmd_guided"]


def test_sweep_writes_one_row_per_cell(trained_workspace):
    tmp_path, args = trained_workspace
    assert main(["sweep", *args, "--runs", "2"]) == 0
    rows = _report_rows(tmp_path / "out" / "sweep.csv")
    assert len(rows) == 6
    assert {(row["lambda1"], row["optim_start"]) for row in rows} == {(lam, s) for lam in ("0", "0.01", "0.1") for s in ("0.0", "0.2")}


def test_errors_exit_nonzero(workspace, capsys):
    _, args = workspace
    assert main(["eval", *args]) == 1
    assert "✗ Error" in capsys.readouterr().out
    assert main(["run", *args, "--set", "lambd1=0.1"]) == 1
    assert "lambd1" in capsys.readouterr().out
    assert main(["run", *args, "--set", "oops"]) == 1
