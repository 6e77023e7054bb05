# eulerflow/tests/test_cli.py
import json

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from eulerflow.app import settings
from eulerflow.app.cli import _guarded, cli
from eulerflow.app.errors import DimensionError


@pytest.fixture
def runner():
    return CliRunner()


def _run(runner, *args):
    return runner.invoke(cli, [str(a) for a in args])


# ─────────────────────────────
# verify
# ─────────────────────────────
def test_verify_gerstner_passes(runner, config_path, tmp_path):
    result = _run(runner, "verify", "--config", config_path("gerstner"), "--out", tmp_path)
    assert result.exit_code == 0, result.output
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["pass"] is True
    assert report["family"] == "gerstner"
    assert all(r["excluded_fraction"] <= 0.1 for r in report["reports"])


def test_verify_broken_hyperbolic_fails(runner, config_path, tmp_path):
    result = _run(
        runner, "verify", "--config", config_path("broken_hyperbolic"), "--out", tmp_path
    )
    assert result.exit_code == 1
    assert "time_invariance.h_drift" in result.output
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["pass"] is False


def test_verify_cauchy_riemann_input_fails(runner, config_path, tmp_path):
    result = _run(runner, "verify", "--config", config_path("cr_elliptic"), "--out", tmp_path)
    assert result.exit_code == 1
    report = json.loads((tmp_path / "report.json").read_text())
    assert [r["check"] for r in report["reports"]] == ["anticr"]
    entry = report["reports"][0]["entries"][0]
    assert entry["max_abs"] > 1e-2


def test_verify_malformed_expression(runner, write_config, tmp_path):
    path = write_config({"family": "hyperbolic", "params": {"f1": "2z1"}})
    result = _run(runner, "verify", "--config", path, "--out", tmp_path)
    assert result.exit_code == 2
    assert "position 1" in result.output


def test_verify_invalid_json(runner, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json", encoding="utf-8")
    result = _run(runner, "verify", "--config", path)
    assert result.exit_code == 2


def test_verify_missing_file(runner, tmp_path):
    result = _run(runner, "verify", "--config", tmp_path / "nope.json")
    assert result.exit_code == 2


def test_verify_invalid_parameters(runner, write_config, tmp_path):
    path = write_config({"family": "k2", "params": {"r": "t - 1"}})
    result = _run(runner, "verify", "--config", path, "--out", tmp_path)
    assert result.exit_code == 2


def test_dimension_error_is_a_usage_error(capsys):
    @_guarded
    def command():
        raise DimensionError("constraint systems are defined for k = 4, got k = 3")

    with pytest.raises(SystemExit) as exc:
        command()
    assert exc.value.code == 2
    assert "k = 4" in capsys.readouterr().err


# ─────────────────────────────
# trajectories
# ─────────────────────────────
def test_trajectories_csv(runner, config_path, tmp_path):
    result = _run(runner, "trajectories", "--config", config_path("kirchhoff"), "--out", tmp_path)
    assert result.exit_code == 0, result.output
    df = pd.read_csv(tmp_path / "trajectories.csv")
    assert list(df.columns) == ["particle_id", "t", "z1", "z2", "x1", "x2"]
    assert len(df) == 3 * 101
    # rigid rotation keeps every particle at its initial radius
    radius = np.hypot(df.x1, df.x2)
    assert np.allclose(radius, np.hypot(df.z1, df.z2))


def test_trajectories_single_seed_single_sample(runner, write_config, tmp_path):
    path = write_config(
        {
            "family": "k2",
            "params": {"theta": "t"},
            "trajectories": {"seeds": [[0.5, 0.0]], "t": [0.25, 1.0], "samples": 1},
        }
    )
    result = _run(runner, "trajectories", "--config", path, "--out", tmp_path)
    assert result.exit_code == 0, result.output
    df = pd.read_csv(tmp_path / "trajectories.csv")
    assert len(df) == 1
    assert df.t[0] == 0.25
    assert (df.x1[0], df.x2[0]) == pytest.approx((0.5 * np.cos(0.25), 0.5 * np.sin(0.25)))


def test_output_dir_falls_back_to_settings(runner, config_path, tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "OUTPUT_DIR", str(tmp_path / "default"))
    result = _run(runner, "trajectories", "--config", config_path("kirchhoff"))
    assert result.exit_code == 0, result.output
    assert (tmp_path / "default" / "trajectories.csv").exists()


def test_trajectories_need_block(runner, config_path, tmp_path):
    result = _run(
        runner, "trajectories", "--config", config_path("broken_hyperbolic"), "--out", tmp_path
    )
    assert result.exit_code == 2


# ─────────────────────────────
# field
# ─────────────────────────────
def test_field_of_rigid_rotation(runner, config_path, tmp_path):
    result = _run(runner, "field", "--config", config_path("kirchhoff"), "--out", tmp_path)
    assert result.exit_code == 0, result.output
    df = pd.read_csv(tmp_path / "field.csv")
    assert list(df.columns) == ["x1", "x2", "u1", "u2", "zeta"]
    assert len(df) == 15 * 15
    assert np.allclose(df.u1, -df.x2, atol=1e-10)
    assert np.allclose(df.u2, df.x1, atol=1e-10)
    assert np.allclose(df.zeta, 2.0)


def test_field_static_flow(runner, write_config, tmp_path):
    path = write_config(
        {
            "family": "k2",
            "params": {"theta": "0", "c": 0.0},
            "field": {"x1": [-1, 1], "x2": [-1, 1], "n1": 4, "n2": 4},
        }
    )
    result = _run(runner, "field", "--config", path, "--t", 0.5, "--out", tmp_path)
    assert result.exit_code == 0, result.output
    df = pd.read_csv(tmp_path / "field.csv")
    assert np.allclose(df[["u1", "u2"]].to_numpy(), 0.0)


def test_field_gerstner_vorticity(runner, config_path, tmp_path):
    result = _run(runner, "field", "--config", config_path("gerstner"), "--out", tmp_path)
    assert result.exit_code == 0, result.output
    df = pd.read_csv(tmp_path / "field.csv")
    assert df.zeta.notna().all()
    assert (df.zeta < 0).all()


def test_field_mostly_singular_exits_1(runner, write_config, tmp_path):
    # f1 = f2 = 0 collapses the parabolic image onto the x1 axis
    path = write_config(
        {
            "family": "parabolic",
            "params": {"f1": "0", "f2": "0"},
            "field": {"x1": [-1, 1], "x2": [0.5, 1], "n1": 4, "n2": 4},
        }
    )
    result = _run(runner, "field", "--config", path, "--out", tmp_path)
    assert result.exit_code == 1
    df = pd.read_csv(tmp_path / "field.csv")
    assert df.zeta.isna().mean() > 0.1


# ─────────────────────────────
# figure
# ─────────────────────────────
def test_figure_number_is_validated(runner, tmp_path):
    result = _run(runner, "figure", "--figure", 7, "--out", tmp_path)
    assert result.exit_code == 2


def test_figure_writes_report_and_data(runner, tmp_path):
    result = _run(runner, "figure", "--figure", 4, "--out", tmp_path)
    assert result.exit_code == 0, result.output
    assert json.loads((tmp_path / "figure4_report.json").read_text())["pass"] is True
    df = pd.read_csv(tmp_path / "figure4_trajectories.csv")
    assert len(df) == 25 * 201
