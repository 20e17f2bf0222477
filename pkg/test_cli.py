#!/usr/bin/env python3
"""
Tests for the command-line front end: config files, exit codes and outputs
"""

import json

import pandas as pd
import pytest

from cli import MANIFEST_FILE, load_sweep, run, validate_config
from config import settings
from exceptions import ConfigError
from models import BallotProposition


def write(path, text):
    path.write_text(text)
    return str(path)


def common_args(tmp_path):
    return ["--out", str(tmp_path / "out"), "--cache-dir", str(tmp_path / "cache")]


def outputs(tmp_path, pattern):
    return sorted((tmp_path / "out").glob(pattern))


def test_predict_slope(tmp_path, capsys):
    code = run(["predict", "--what", "slope", "--t", "3", "--alpha", "0.5", *common_args(tmp_path)])
    assert code == 0
    value = float(capsys.readouterr().out.strip().splitlines()[-1])
    assert value == pytest.approx(1.1101356, abs=1e-7)


def test_exit_codes(tmp_path):
    assert run(["predict", "--what", "slope", "--no-such-flag", *common_args(tmp_path)]) == 2
    assert run(["predict", "--what", "slope", "--t", "3", "--alpha", "1.5", *common_args(tmp_path)]) == 2
    assert run(["predict", "--what", "slope", "--t", "3", *common_args(tmp_path)]) == 2


def test_manifest_is_appended(tmp_path):
    for _ in range(2):
        assert run(["predict", "--what", "theta", "--t", "3", "--alpha", "0.5", *common_args(tmp_path)]) == 0
    lines = (tmp_path / "out" / MANIFEST_FILE).read_text().splitlines()
    assert len(lines) == 2
    manifest = json.loads(lines[-1])
    assert manifest["subcommand"] == "predict"
    assert manifest["exit_code"] == 0
    assert len(manifest["output_paths"]) == 2


def test_validate_config_names_bad_line(tmp_path):
    path = write(tmp_path / "run.env", "T=2\nALPHA=0.5\nFOO=1\n")
    with pytest.raises(ConfigError, match=r":3: unknown key 'FOO'"):
        validate_config(path)

    path = write(tmp_path / "bad.env", "# comment\nT=2\nALPHA=1.5\n")
    with pytest.raises(ConfigError, match=r":3: key ALPHA"):
        validate_config(path)


def test_validate_config_defaults_and_overrides(tmp_path):
    path = write(tmp_path / "run.env", "T=2\nALPHA=0.5\nMODE=surrogate\nN=500\n")
    config = validate_config(path)
    assert config.seed == settings.default_seed
    assert config.n_samples == 500
    assert validate_config(path, {"t": 3, "seed": None}).t == 3


def test_load_sweep(tmp_path):
    path = write(tmp_path / "sweep.env", "PROPOSITION=log\nT=64\nK_LIST=32\nY=1\n")
    sweep = load_sweep(path)
    assert sweep.proposition == BallotProposition.LOG
    assert sweep.k_list == [32]
    with pytest.raises(ConfigError):
        load_sweep(write(tmp_path / "bad.env", "PROPOSITION=nonsense\n"))


def test_ballot_closed_form(tmp_path):
    sweep = write(tmp_path / "sweep.env", "PROPOSITION=closed-form\nA=0\nB0=1\nDELTA=0.5\nSIGMA2=0.5\n")
    assert run(["ballot", "--sweep", sweep, *common_args(tmp_path)]) == 0
    frame = pd.read_csv(outputs(tmp_path, "*_ballot.csv")[0])
    assert frame["exact"].iloc[0] == pytest.approx(0.5204999, abs=1e-7)
    assert frame["abs_error"].max() < 1e-6


def test_sieve_writes_table_and_summary(tmp_path):
    assert run(["sieve", "--t", "2", "--alpha", "0.5", "--seed", "7", *common_args(tmp_path)]) == 0
    frame = pd.read_csv(outputs(tmp_path, "*_sieve.csv")[0])
    assert frame["band"].tolist() == [1, 2]
    assert frame["prime_count"].iloc[0] == 5
    summary = json.loads(outputs(tmp_path, "*_sieve.json")[0].read_text())
    assert summary["seed"] == 7
    assert summary["estimates"]["sieve_limit"] == 1618
    assert any((tmp_path / "cache").iterdir())


def test_left_tail_run(tmp_path):
    args = ["tail", "--side", "left", "--t", "2", "--alpha", "0.5", "--mode", "surrogate", "--n", "10000",
            "--y-grid=-2,-3", *common_args(tmp_path)]
    assert run(args) == 0
    frame = pd.read_csv(outputs(tmp_path, "*_tail.csv")[0])
    assert frame["y"].tolist() == [-2.0, -3.0]
    assert set(frame["run_id"]) == {outputs(tmp_path, "*_tail.json")[0].name.split("_")[0]}
    summary = json.loads(outputs(tmp_path, "*_tail.json")[0].read_text())
    assert summary["approximate"] is True
    assert summary["n"] == 10000


def test_right_tail_with_too_few_samples_is_a_config_error(tmp_path):
    args = ["tail", "--t", "2", "--alpha", "0.5", "--mode", "surrogate", "--n", "100", *common_args(tmp_path)]
    assert run(args) == 2


if __name__ == "__main__":
    pytest.main([__file__])
