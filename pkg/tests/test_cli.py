"""End-to-end tests of the command-line surface and its exit codes."""
import json
import os

import numpy as np
import pytest
import yaml

from neuralcf import artifacts as ar
from neuralcf import cli
from neuralcf import evaluation as ev
from neuralcf import relaxation as rx
from neuralcf import training as tr
from neuralcf.errors import ConfigError

TINY = dict(
    scheme="marginal",
    epochs=2,
    steps_per_epoch=2,
    batch_size=32,
    codebook_size=8,
    hidden_units=12,
    seed=5,
    n_test=2000,
)


def write_config(path, **over):
    doc = dict(TINY, **over)
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def artifact_path(capsys):
    out = capsys.readouterr().out
    (line,) = [l for l in out.splitlines() if l.startswith("artifact: ")]
    return line.split(": ", 1)[1]


# ---------------------------------------------------------------- config parsing


def test_run_config_round_trip(tmp_path):
    cfg = write_config(
        tmp_path / "run.yaml",
        **{"lambda": 0.3},
        learning_rate=1e-3,
        lambdas=[1.0, 0.1],
        temperature={"initial": 2.0, "floor": 0.2, "decay": 0.99},
        baselines={"snr_db": [3.0], "rates": [0.0, 1.0], "modulations": ["BPSK"]},
    )
    run = cli.load_run_config(cfg)
    assert run.train.lam == 0.3
    assert run.train.learning_rate == 1e-3
    assert run.train.temperature == rx.TemperatureSchedule(2.0, 0.2, 0.99)
    assert run.lambdas == (1.0, 0.1)
    assert run.n_test == 2000
    assert run.baseline_snrs_db == (3.0,)
    assert run.baseline_rates == (0.0, 1.0)
    assert run.baseline_modulations == ("BPSK",)


def test_run_config_default_schedule_tracks_epochs(tmp_path):
    cfg = write_config(tmp_path / "run.yaml", epochs=100, temperature={"initial": 4.0})
    run = cli.load_run_config(cfg)
    assert run.train.temperature == rx.schedule_for(100, initial=4.0)


def test_run_config_rejects_unknown_key_by_name(tmp_path, capsys):
    cfg = write_config(tmp_path / "run.yaml", learning_rat=0.1)
    with pytest.raises(ConfigError, match="learning_rat"):
        cli.load_run_config(cfg)
    code = cli.main(["train", "--config", cfg])
    assert code == 2
    assert "learning_rat" in capsys.readouterr().err


def test_run_config_rejects_unknown_temperature_key(tmp_path):
    cfg = write_config(tmp_path / "run.yaml", temperature={"start": 1.0})
    with pytest.raises(ConfigError, match="start"):
        cli.load_run_config(cfg)


def test_run_config_rejects_malformed_documents(tmp_path):
    bad_list = tmp_path / "list.yaml"
    bad_list.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError, match="mapping"):
        cli.load_run_config(str(bad_list))
    with pytest.raises(ConfigError, match="lambdas"):
        cli.load_run_config(write_config(tmp_path / "lam.yaml", lambdas=[]))
    with pytest.raises(ConfigError, match="cannot read"):
        cli.load_run_config(str(tmp_path / "missing.yaml"))


# ---------------------------------------------------------------- train


def test_cli_train_writes_reloadable_artifact(tmp_path, capsys):
    cfg = write_config(tmp_path / "run.yaml", **{"lambda": 0.7})
    assert cli.main(["train", "--config", cfg, "--out", str(tmp_path)]) == 0
    path = artifact_path(capsys)
    assert os.path.dirname(path) == str(tmp_path)
    report = ar.load_artifact(path)
    assert report.config.lam == 0.7 and report.config.epochs == 2
    # reload-evaluate equals a second reload exactly: no hidden state
    again = ar.load_artifact(path)
    a = ev.evaluate(report.bundle, n_test=2000, seed=9, lam=0.7)
    b = ev.evaluate(again.bundle, n_test=2000, seed=9, lam=0.7)
    assert a == b


def test_cli_train_epochs_override(tmp_path, capsys):
    cfg = write_config(tmp_path / "run.yaml")
    assert cli.main(["train", "--config", cfg, "--out", str(tmp_path), "--epochs-override", "1"]) == 0
    report = ar.load_artifact(artifact_path(capsys))
    assert report.config.epochs == 1
    assert cli.main(["train", "--config", cfg, "--epochs-override", "0"]) == 2


def test_cli_train_out_root_env(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(cli.OUT_ROOT_ENV, str(tmp_path / "env_root"))
    cfg = write_config(tmp_path / "run.yaml")
    assert cli.main(["train", "--config", cfg]) == 0
    assert artifact_path(capsys).startswith(str(tmp_path / "env_root"))


def test_cli_train_divergence_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path / "run.yaml", **{"lambda": 1e308})
    with np.errstate(over="ignore", invalid="ignore"):
        assert cli.main(["train", "--config", cfg, "--out", str(tmp_path)]) == 3
    assert "diverged" in capsys.readouterr().err


# ---------------------------------------------------------------- sweep


def test_cli_sweep_writes_byte_identical_csv(tmp_path, capsys):
    cfg = write_config(tmp_path / "run.yaml", lambdas=[1.0, 0.3])
    csv_path = tmp_path / "sweep.csv"
    assert cli.main(["sweep", "--config", cfg, "--out", str(csv_path), "--no-artifacts"]) == 0
    first = csv_path.read_bytes()
    csv_path.unlink()
    assert cli.main(["sweep", "--config", cfg, "--out", str(csv_path), "--no-artifacts"]) == 0
    assert csv_path.read_bytes() == first
    capsys.readouterr()

    lines = first.decode().strip().splitlines()
    assert lines[0] == ev.tradeoff_csv_header()
    rows = [line.split(",") for line in lines[1:]]
    assert len(rows) == 2
    assert [float(r[1]) for r in rows] == [0.3, 1.0]  # sorted by lambda
    assert {r[0] for r in rows} == {"marginal"}
    # per-lambda seeds are derived, not shared
    assert len({r[2] for r in rows}) == 2


def test_cli_sweep_artifacts_reload(tmp_path, capsys):
    cfg = write_config(tmp_path / "run.yaml", lambdas=[0.5])
    assert cli.main(["sweep", "--config", cfg, "--out", str(tmp_path / "s.csv")]) == 0
    capsys.readouterr()
    seed = tr.derive_seed(TINY["seed"], 0.5)
    report = ar.load_artifact(str(tmp_path / f"sweep_marginal_lam0.5_seed{seed}.json"))
    assert report.config.lam == 0.5 and report.config.seed == seed


# ---------------------------------------------------------------- baselines


def test_cli_baselines_defaults(tmp_path, capsys):
    path = tmp_path / "baselines.csv"
    assert cli.main(["baselines", "--out", str(path)]) == 0
    capsys.readouterr()
    lines = path.read_text().strip().splitlines()
    header = lines[0].split(",")
    assert lines[0] == ev.baseline_csv_header((0.0, 0.5, 1.0, 2.0, 5.0))
    assert len(lines) == 1 + 4  # {3, 13} dB x {BPSK, PAM4}
    for line in lines[1:]:
        vals = dict(zip(header, line.split(",")))
        assert float(vals["mi_perfect_bits"]) > float(vals["mi_without_bits"])
        assert float(vals["cf_bound_R0"]) <= float(vals["cf_bound_R5"])


# ---------------------------------------------------------------- export-lut


def test_cli_export_lut_round_trip(tmp_path, capsys):
    cfg = write_config(tmp_path / "run.yaml")
    assert cli.main(["train", "--config", cfg, "--out", str(tmp_path)]) == 0
    artifact = artifact_path(capsys)
    out = tmp_path / "table.json"
    assert cli.main(["export-lut", artifact, "--out", str(out)]) == 0
    assert "binning:" in capsys.readouterr().out
    doc = json.loads(out.read_text())
    assert doc["relay_intervals"][0][0] == doc["y_r_range"][0]
    assert doc["relay_intervals"][-1][1] == doc["y_r_range"][1]


def test_cli_export_lut_corrupt_artifact(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    assert cli.main(["export-lut", str(bad)]) == 4
    wrong = tmp_path / "wrong.json"
    wrong.write_text(json.dumps({"kind": "something_else"}))
    assert cli.main(["export-lut", str(wrong)]) == 4
    assert cli.main(["export-lut", str(tmp_path / "missing.json")]) == 4
    assert "artifact" in capsys.readouterr().err


# ---------------------------------------------------------------- selftest


def test_cli_selftest_green_and_negative_control(capsys):
    assert cli.main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "selftest: 0 failures" in out
    # the planted gradient bug must be caught, not absorbed
    assert cli.main(["selftest", "--inject-bug"]) == 1
    captured = capsys.readouterr()
    assert "gradient finite-difference" in captured.err
