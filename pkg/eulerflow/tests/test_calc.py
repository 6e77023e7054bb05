# eulerflow/tests/test_calc.py

import math

import numpy as np
import pytest

from eulerflow.app.calc import (
    FIELD_COLUMNS,
    TRAJECTORY_COLUMNS,
    collinearity_residual,
    field_frame,
    lattice,
    segment_residual,
    trajectories_frame,
    write_csv,
)
from eulerflow.app.expr import parse
from eulerflow.app.families import make_k2
from eulerflow.app.kernel import phi
from eulerflow.app.models import K2Params


@pytest.fixture
def rigid():
    return make_k2(K2Params(r=parse("1"), theta=parse("t"), e=1.0, c=2.0))


def test_lattice_shape_and_order():
    pts = lattice((0.0, 1.0), (-1.0, 1.0), 3)
    assert pts.shape == (9, 2)
    # z1-major: the first three points share z1
    assert np.allclose(pts[:3, 0], 0.0)
    assert np.allclose(pts[:3, 1], [-1.0, 0.0, 1.0])


def test_lattice_of_one_is_centre():
    assert np.allclose(lattice((2.0, 8.0), (-1.0, 1.0), 1), [[5.0, 0.0]])


def test_collinearity_residual():
    pts = np.array([[0.0, 0.0], [1.0, 2.0], [2.0, 4.0], [-1.0, -2.0]])
    assert collinearity_residual(pts) < 1e-12
    assert collinearity_residual(pts, direction=(1.0, 2.0)) < 1e-12
    # perpendicular direction: distances are the projections onto (1, 2)
    assert collinearity_residual(pts, direction=(2.0, -1.0)) > 1.0
    bent = np.vstack([pts, [[0.0, 1.0]]])
    assert collinearity_residual(bent) > 0.1


def test_segment_residual():
    line = np.column_stack([np.linspace(0, 1, 11), np.linspace(0, 2, 11)])
    assert segment_residual(line) < 1e-12
    # overshoot past the end point and back
    back = np.vstack([line, [[1.5, 3.0], [1.0, 2.0]]])
    assert segment_residual(back) == pytest.approx(math.hypot(0.5, 1.0))


def test_trajectories_frame(rigid):
    seeds = np.array([[0.5, 0.0], [0.0, 0.25]])
    times = np.linspace(0.0, math.pi, 5)
    df = trajectories_frame(rigid, seeds, times)
    assert list(df.columns) == TRAJECTORY_COLUMNS
    assert len(df) == 10
    assert df["particle_id"].tolist() == [0] * 5 + [1] * 5
    last = df.iloc[4]
    assert (last.x1, last.x2) == pytest.approx((-0.5, 0.0), abs=1e-12)


def test_single_seed_single_sample(rigid):
    seeds = np.array([[0.3, 0.4]])
    df = trajectories_frame(rigid, seeds, np.array([0.7]))
    assert len(df) == 1
    x = phi(rigid, seeds[0], 0.7)
    assert (df.x1[0], df.x2[0]) == pytest.approx(tuple(x))


def test_write_csv_is_deterministic(tmp_path, rigid):
    df = trajectories_frame(rigid, np.array([[0.1, 0.2]]), np.linspace(0, 1, 3))
    a = write_csv(df, tmp_path / "a" / "t.csv")
    b = write_csv(df, tmp_path / "b" / "t.csv")
    assert a.read_bytes() == b.read_bytes()
    text = a.read_text()
    assert text.splitlines()[0] == ",".join(TRAJECTORY_COLUMNS)
    assert "\r\n" not in text


def test_field_csv_leaves_excluded_cells_empty(tmp_path):
    X = np.zeros((2, 2, 1))
    U = np.array([[[1.0], [np.nan]], [[2.0], [np.nan]]])
    zeta = np.array([[0.5], [np.nan]])
    path = write_csv(field_frame(X, U, zeta), tmp_path / "field.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(FIELD_COLUMNS)
    assert lines[1] == "0,0,1,2,0.5"
    assert lines[2] == "0,0,,,"
