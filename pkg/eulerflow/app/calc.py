# eulerflow/app/calc.py

from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .kernel import Solution, phi

TRAJECTORY_COLUMNS = ["particle_id", "t", "z1", "z2", "x1", "x2"]
FIELD_COLUMNS = ["x1", "x2", "u1", "u2", "zeta"]


def lattice(z1: Tuple[float, float], z2: Tuple[float, float], n: int) -> np.ndarray:
    """
    n x n label points over a window, shape (n*n, 2), z1-major.
    A 1 x 1 lattice is the window centre.
    """
    if n == 1:
        return np.array([[(z1[0] + z1[1]) / 2, (z2[0] + z2[1]) / 2]])
    a, b = np.meshgrid(np.linspace(*z1, n), np.linspace(*z2, n), indexing="ij")
    return np.column_stack([a.ravel(), b.ravel()])


def collinearity_residual(points: np.ndarray, direction: Optional[Sequence[float]] = None) -> float:
    """
    Largest distance of the points (shape (n, 2)) from a line through their centroid.

    The line follows ``direction`` when given, otherwise the best-fit direction.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) < 3 and direction is None:
        return 0.0
    centred = pts - pts.mean(axis=0)
    if direction is None:
        _, _, vt = np.linalg.svd(centred, full_matrices=False)
        d = vt[0]
    else:
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
    normal = np.array([-d[1], d[0]])
    return float(np.max(np.abs(centred @ normal)))


def segment_residual(points: np.ndarray) -> float:
    """
    How far an ordered trajectory strays from the segment between its end points:
    distance off the line, plus any overshoot past either end.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) < 3:
        return 0.0
    start, end = pts[0], pts[-1]
    span = end - start
    length = float(np.linalg.norm(span))
    if length == 0.0:
        return float(np.max(np.linalg.norm(pts - start, axis=1)))
    d = span / length
    rel = pts - start
    off = np.abs(rel @ np.array([-d[1], d[0]]))
    along = rel @ d
    overshoot = np.maximum(0.0, np.maximum(-along, along - length))
    return float(np.max(off + overshoot))


# ──────────────────────────
# Tabular outputs
# ──────────────────────────
def trajectories_frame(sol: Solution, seeds: np.ndarray, times: np.ndarray) -> pd.DataFrame:
    """One row per (seed, time sample); (x1, x2) = phi(z, t)."""
    seeds = np.asarray(seeds, dtype=float)
    times = np.asarray(times, dtype=float)
    xs = np.stack([phi(sol, seeds.T, t) for t in times], axis=-1)  # (2, n_seeds, n_times)
    n, nt = len(seeds), len(times)
    return pd.DataFrame(
        {
            "particle_id": np.repeat(np.arange(n), nt),
            "t": np.tile(times, n),
            "z1": np.repeat(seeds[:, 0], nt),
            "z2": np.repeat(seeds[:, 1], nt),
            "x1": xs[0].ravel(),
            "x2": xs[1].ravel(),
        },
        columns=TRAJECTORY_COLUMNS,
    )


def field_frame(X: np.ndarray, U: np.ndarray, zeta: np.ndarray) -> pd.DataFrame:
    """Eulerian samples; nan velocity/vorticity marks an excluded point."""
    return pd.DataFrame(
        {
            "x1": X[0].ravel(),
            "x2": X[1].ravel(),
            "u1": U[0].ravel(),
            "u2": U[1].ravel(),
            "zeta": np.asarray(zeta).ravel(),
        },
        columns=FIELD_COLUMNS,
    )


def write_csv(df: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Deterministic CSV: 17 significant digits, LF endings, empty cells for nan."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format="%.17g", lineterminator="\n", na_rep="")
    return path
