# eulerflow/tests/test_models.py
import numpy as np
import pytest
from pydantic import ValidationError

from eulerflow.app.expr import Expr
from eulerflow.app.models import (
    Config,
    GridSpec,
    HyperbolicParams,
    K3Params,
    PdeConfig,
    ResidualEntry,
    ResidualReport,
    TrajectoryConfig,
)


def test_expression_fields_parse_strings():
    p = K3Params(theta="sin(t)", f="z2^2/2")
    assert isinstance(p.theta, Expr)
    assert p.model_dump()["f"] == "z2^2 / 2"


def test_malformed_expression_reports_position():
    with pytest.raises(ValidationError) as exc:
        Config(family="hyperbolic", params={"f1": "2z1"})
    assert "position 1" in str(exc.value)


def test_expression_variables_are_restricted():
    with pytest.raises(ValidationError):
        HyperbolicParams(f1="z2")
    with pytest.raises(ValidationError):
        K3Params(theta="z1")


def test_unknown_parameter_is_rejected():
    with pytest.raises(ValidationError):
        Config(family="k2", params={"radius": "1"})


def test_unknown_family_is_rejected():
    with pytest.raises(ValidationError):
        Config(family="spiral")


def test_family_params_are_parsed():
    config = Config(family="hyperbolic", params={"c": 2.0, "f1": "sin(z1)"})
    assert config.family_params.c == 2.0
    assert config.family_params.exponent is None


def test_grid_ranges_are_validated():
    with pytest.raises(ValidationError):
        GridSpec(z1=(1.0, -1.0))
    with pytest.raises(ValidationError):
        GridSpec(n1=2)
    with pytest.raises(ValidationError):
        PdeConfig(z2=(0.0, 0.0))


def test_grid_labels_and_times():
    grid = GridSpec(z1=(0.0, 1.0), z2=(-1.0, 1.0), n1=3, n2=5, t=(0.0, 2.0), nt=3)
    z = grid.labels()
    assert z.shape == (2, 3, 5)
    assert z[0, :, 0].tolist() == [0.0, 0.5, 1.0]
    assert grid.times().tolist() == [0.0, 1.0, 2.0]
    assert grid.t0 == 0.0


def test_pde_window_overrides_grid():
    base = GridSpec(z1=(-1.0, 1.0), z2=(-2.0, -0.2))
    grid = PdeConfig(z2=(-2.0, -1.2)).grid(base)
    assert grid.z2 == (-2.0, -1.2)
    assert grid.z1 == base.z1
    assert PdeConfig().grid(base) is base


def test_trajectory_seeds():
    assert TrajectoryConfig(seeds=[(0.1, 0.2)]).seed_points().shape == (1, 2)
    lattice = TrajectoryConfig(z1=(0.0, 1.0), z2=(0.0, 1.0), lattice=4)
    assert lattice.seed_points().shape == (16, 2)
    with pytest.raises(ValidationError):
        TrajectoryConfig(z1=(0.0, 1.0))


def test_report_fails_on_too_many_excluded_points():
    entry = ResidualEntry(name="x", max_abs=0.0, tol=1.0, passed=True)
    assert ResidualReport(check="c", entries=[entry], excluded_fraction=0.05).passed
    report = ResidualReport(check="c", entries=[entry], excluded_fraction=0.2)
    assert not report.passed
    assert report.failures() == ["excluded_fraction"]


def test_entry_serializes_pass_alias():
    entry = ResidualEntry(name="x", max_abs=np.float64(1e-3), tol=1e-2, passed=True)
    assert entry.model_dump(by_alias=True)["pass"] is True
    assert ResidualEntry.model_validate({"name": "x", "max_abs": 0, "tol": 1, "pass": False})
