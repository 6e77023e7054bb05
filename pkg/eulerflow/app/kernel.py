# eulerflow/app/kernel.py
"""
Core linear algebra and flow evaluation for separated solutions

    phi(z, t) = M(theta0 * t) A(t) v(z)

All point arguments are arrays of shape (2, ...) (a single point is shape (2,));
results keep the trailing shape. Time is always a scalar.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from itertools import combinations
from typing import Any, Callable, Dict, NamedTuple, Optional, Protocol, Sequence, Tuple

import numpy as np

from . import settings
from .errors import DimensionError, NearSingularError, NoConvergenceError
from .expr import Expr, as_expr, differentiate, evaluate, evaluate_on

logger = logging.getLogger(__name__)

Minors = Dict[Tuple[int, int], Any]

# per-object caches keyed by t keep at most this many entries
CACHE_SIZE = 1024


def remember(cache: Dict[Any, Any], key: Any, value: Any) -> Any:
    """Store value under key, evicting the oldest entry once the cache is full."""
    if len(cache) >= CACHE_SIZE:
        cache.pop(next(iter(cache)))
    cache[key] = value
    return value


# ──────────────────────────
# Rotations
# ──────────────────────────
def rotation(theta: float) -> np.ndarray:
    """M(theta) = [[cos, -sin], [sin, cos]]."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def reflection(theta: float) -> np.ndarray:
    """M^(theta) = [[cos, sin], [sin, -cos]]."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [s, -c]])


def det2(m: np.ndarray) -> Any:
    """Determinant of a 2x2 matrix, or of a stack shaped (2, 2, ...)."""
    return m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]


# ──────────────────────────
# Time functions
# ──────────────────────────
@dataclass(frozen=True)
class Jet:
    """A value with its first and second time derivatives."""

    value: float
    d1: float = 0.0
    d2: float = 0.0

    @staticmethod
    def of(x: Any) -> "Jet":
        return x if isinstance(x, Jet) else Jet(float(x))

    def __add__(self, other: Any) -> "Jet":
        o = Jet.of(other)
        return Jet(self.value + o.value, self.d1 + o.d1, self.d2 + o.d2)

    __radd__ = __add__

    def __neg__(self) -> "Jet":
        return Jet(-self.value, -self.d1, -self.d2)

    def __sub__(self, other: Any) -> "Jet":
        return self + (-Jet.of(other))

    def __rsub__(self, other: Any) -> "Jet":
        return Jet.of(other) - self

    def __mul__(self, other: Any) -> "Jet":
        o = Jet.of(other)
        return Jet(
            self.value * o.value,
            self.d1 * o.value + self.value * o.d1,
            self.d2 * o.value + 2.0 * self.d1 * o.d1 + self.value * o.d2,
        )

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet":
        v = self.value
        return Jet(1.0 / v, -self.d1 / v**2, 2.0 * self.d1**2 / v**3 - self.d2 / v**2)

    def __truediv__(self, other: Any) -> "Jet":
        return self * Jet.of(other).reciprocal()

    def __rtruediv__(self, other: Any) -> "Jet":
        return Jet.of(other) * self.reciprocal()


class TimeFunction(Protocol):
    def jet(self, t: float) -> Jet: ...


@dataclass(frozen=True)
class ExprTimeFunction:
    """Entry given by an expression in t; derivatives are symbolic."""

    expr: Expr

    @cached_property
    def first(self) -> Expr:
        return differentiate(self.expr, "t")

    @cached_property
    def second(self) -> Expr:
        return differentiate(self.first, "t")

    def jet(self, t: float) -> Jet:
        env = {"t": t}
        return Jet(
            float(evaluate(self.expr, env)),
            float(evaluate(self.first, env)),
            float(evaluate(self.second, env)),
        )


@dataclass(frozen=True)
class ComposedTimeFunction:
    """Entry computed from other entries with jet arithmetic, e.g. r(t) * a(t)."""

    combine: Callable[..., Jet]
    parts: Tuple[Any, ...]

    def jet(self, t: float) -> Jet:
        return self.combine(*(p.jet(t) for p in self.parts))


def time_function(value: Any) -> Any:
    if hasattr(value, "jet"):
        return value
    return ExprTimeFunction(as_expr(value))


def _premultiply(theta: Jet, a0: np.ndarray, a1: np.ndarray, a2: np.ndarray):
    m = rotation(theta.value)
    m1 = rotation(theta.value + math.pi / 2)
    b0 = m @ a0
    b1 = theta.d1 * (m1 @ a0) + m @ a1
    b2 = theta.d2 * (m1 @ a0) - theta.d1**2 * b0 + 2.0 * theta.d1 * (m1 @ a1) + m @ a2
    return b0, b1, b2


@dataclass(frozen=True)
class TimeMatrix:
    """
    The 2 x k matrix A(t) with analytic A'(t), A''(t).

    ``theta`` optionally premultiplies the entries by M(theta(t)).
    """

    entries: Tuple[Tuple[Any, ...], Tuple[Any, ...]]
    theta: Optional[Any] = None
    _cache: Dict[float, Tuple[np.ndarray, np.ndarray, np.ndarray]] = field(
        default_factory=dict, compare=False, repr=False
    )

    def __post_init__(self):
        if len(self.entries) != 2 or len(self.entries[0]) != len(self.entries[1]):
            raise DimensionError("TimeMatrix needs two rows of equal length")
        if len(self.entries[0]) not in (2, 3, 4):
            raise DimensionError(f"TimeMatrix supports k in (2, 3, 4), got {len(self.entries[0])}")

    @classmethod
    def from_exprs(cls, rows: Sequence[Sequence[Any]], theta: Any = None) -> "TimeMatrix":
        entries = tuple(tuple(time_function(e) for e in row) for row in rows)
        return cls(entries, None if theta is None else time_function(theta))

    @property
    def k(self) -> int:
        return len(self.entries[0])

    def at(self, t: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(A, A', A'') at time t."""
        t = float(t)
        hit = self._cache.get(t)
        if hit is not None:
            return hit
        jets = [[e.jet(t) for e in row] for row in self.entries]
        a0 = np.array([[j.value for j in row] for row in jets])
        a1 = np.array([[j.d1 for j in row] for row in jets])
        a2 = np.array([[j.d2 for j in row] for row in jets])
        if self.theta is not None:
            a0, a1, a2 = _premultiply(self.theta.jet(t), a0, a1, a2)
        return remember(self._cache, t, (a0, a1, a2))


# ──────────────────────────
# Spatial map
# ──────────────────────────
@dataclass(frozen=True)
class SpatialMap:
    """v: D -> R^k as expressions in z1, z2 with cached symbolic partials."""

    components: Tuple[Expr, ...]

    @classmethod
    def from_exprs(cls, *components: Any) -> "SpatialMap":
        return cls(tuple(as_expr(c) for c in components))

    @property
    def k(self) -> int:
        return len(self.components)

    @cached_property
    def gradients(self) -> Tuple[Tuple[Expr, Expr], ...]:
        return tuple((differentiate(c, "z1"), differentiate(c, "z2")) for c in self.components)

    @cached_property
    def hessians(self) -> Tuple[Tuple[Expr, Expr, Expr], ...]:
        return tuple(
            (differentiate(g1, "z1"), differentiate(g1, "z2"), differentiate(g2, "z2"))
            for g1, g2 in self.gradients
        )

    @staticmethod
    def _env(z: np.ndarray) -> Dict[str, Any]:
        return {"z1": z[0], "z2": z[1]}

    def values(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        env, shape = self._env(z), z.shape[1:]
        return np.stack([evaluate_on(c, env, shape) for c in self.components])

    def jacobian(self, z: np.ndarray) -> np.ndarray:
        """Shape (k, 2, ...): row i holds the gradient of v^i."""
        z = np.asarray(z, dtype=float)
        env, shape = self._env(z), z.shape[1:]
        return np.stack(
            [np.stack([evaluate_on(g, env, shape) for g in grad]) for grad in self.gradients]
        )

    def hessian(self, z: np.ndarray) -> np.ndarray:
        """Shape (k, 3, ...): (v_11, v_12, v_22) per component."""
        z = np.asarray(z, dtype=float)
        env, shape = self._env(z), z.shape[1:]
        return np.stack(
            [np.stack([evaluate_on(h, env, shape) for h in hess]) for hess in self.hessians]
        )


# ──────────────────────────
# Solution
# ──────────────────────────
class Family(str, Enum):
    K2 = "k2"
    K3 = "k3"
    ELLIPTIC = "elliptic"
    HYPERBOLIC = "hyperbolic"
    PARABOLIC = "parabolic"


@dataclass(frozen=True)
class Solution:
    family: Family
    A: TimeMatrix
    v: SpatialMap
    det_closed: Expr
    zeta_closed: Expr
    params: Any = None
    theta0: float = 0.0
    # named quadrature-defined gauge functions, e.g. ("a", <QuadratureTimeFunction>)
    gauges: Tuple[Tuple[str, Any], ...] = ()

    def __post_init__(self):
        if self.A.k != self.v.k:
            raise DimensionError(
                f"A has {self.A.k} columns but v has {self.v.k} components"
            )

    @property
    def k(self) -> int:
        return self.A.k


def frame(sol: Solution, t: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(B, B', B'') for B(t) = M(theta0 t) A(t)."""
    a0, a1, a2 = sol.A.at(t)
    if sol.theta0 == 0.0:
        return a0, a1, a2
    return _premultiply(Jet(sol.theta0 * t, sol.theta0, 0.0), a0, a1, a2)


def _apply(b: np.ndarray, vec: np.ndarray) -> np.ndarray:
    return np.einsum("ik,k...->i...", b, vec)


def phi(sol: Solution, z: np.ndarray, t: float) -> np.ndarray:
    b, _, _ = frame(sol, t)
    return _apply(b, sol.v.values(z))


def phi_jacobian(sol: Solution, z: np.ndarray, t: float) -> np.ndarray:
    """Shape (2, 2, ...): d phi / d z."""
    b, _, _ = frame(sol, t)
    return np.einsum("ik,kj...->ij...", b, sol.v.jacobian(z))


def jacobian_rate(sol: Solution, z: np.ndarray, t: float) -> Tuple[np.ndarray, np.ndarray]:
    """(d phi/dz, its exact time derivative)."""
    b, b1, _ = frame(sol, t)
    dv = sol.v.jacobian(z)
    return np.einsum("ik,kj...->ij...", b, dv), np.einsum("ik,kj...->ij...", b1, dv)


def det_jacobian(sol: Solution, z: np.ndarray, t: float) -> Any:
    return det2(phi_jacobian(sol, z, t))


# ──────────────────────────
# Minors
# ──────────────────────────
def _pairs(k: int):
    return combinations(range(k), 2)


def spatial_minors(v: SpatialMap, z: np.ndarray) -> Minors:
    """g_ij = det(grad v^i, grad v^j), keyed by 1-based (i, j) with i < j."""
    dv = v.jacobian(z)
    return {
        (i + 1, j + 1): dv[i, 0] * dv[j, 1] - dv[i, 1] * dv[j, 0] for i, j in _pairs(v.k)
    }


def _p(b: np.ndarray) -> Minors:
    return {(i + 1, j + 1): b[0, i] * b[1, j] - b[0, j] * b[1, i] for i, j in _pairs(b.shape[1])}


def _bilinear(d: np.ndarray, b: np.ndarray) -> Minors:
    return {
        (i + 1, j + 1): float(d[:, i] @ b[:, j] - d[:, j] @ b[:, i])
        for i, j in _pairs(b.shape[1])
    }


def _rotated(A: TimeMatrix, t: float, theta0: float):
    a0, a1, a2 = A.at(t)
    if theta0 == 0.0:
        return a0, a1, a2
    return _premultiply(Jet(theta0 * t, theta0, 0.0), a0, a1, a2)


def time_minors_p(A: TimeMatrix, t: float, theta0: float = 0.0) -> Minors:
    """p_ij = det(A_i, A_j)."""
    b, _, _ = _rotated(A, t, theta0)
    return {key: float(val) for key, val in _p(b).items()}


def time_minors_Q(A: TimeMatrix, t: float, theta0: float = 0.0) -> Minors:
    """Q_ij = <A_i', A_j> - <A_j', A_i>."""
    b, b1, _ = _rotated(A, t, theta0)
    return _bilinear(b1, b)


def time_minors_q(A: TimeMatrix, t: float, theta0: float = 0.0) -> Minors:
    """q_ij = <A_i'', A_j> - <A_j'', A_i>."""
    b, _, b2 = _rotated(A, t, theta0)
    return _bilinear(b2, b)


def max_time_minor(A: TimeMatrix, t: float) -> float:
    return max(abs(p) for p in time_minors_p(A, t).values())


def max_spatial_minor(v: SpatialMap, z: np.ndarray) -> np.ndarray:
    g = spatial_minors(v, z)
    return np.max(np.abs(np.stack(list(g.values()))), axis=0)


def pluecker_terms(p: Minors) -> Tuple[float, float, float]:
    if set(p) != {(i + 1, j + 1) for i, j in _pairs(4)}:
        raise DimensionError("the Pluecker relation needs the six minors of a 2 x 4 matrix")
    return p[(1, 2)] * p[(3, 4)], -p[(1, 3)] * p[(2, 4)], p[(1, 4)] * p[(2, 3)]


def pluecker_residual(p: Minors) -> float:
    """|p12 p34 - p13 p24 + p14 p23|."""
    return abs(sum(pluecker_terms(p)))


def minor_sum(sol: Solution, z: np.ndarray, t: float) -> Tuple[Any, Any]:
    """(sum p_ij g_ij, sum |p_ij g_ij|) in the rotated frame."""
    p = time_minors_p(sol.A, t, sol.theta0)
    g = spatial_minors(sol.v, z)
    terms = [p[key] * g[key] for key in p]
    return sum(terms), sum(np.abs(term) for term in terms)


def cauchy_binet_residual(sol: Solution, z: np.ndarray, t: float) -> Any:
    """|det(d phi) - sum p_ij g_ij|."""
    total, _ = minor_sum(sol, z, t)
    return np.abs(det_jacobian(sol, z, t) - total)


# ──────────────────────────
# h, vorticity, velocities
# ──────────────────────────
def h_value(sol: Solution, z: np.ndarray, t: float) -> Any:
    """h = det(P1) + det(P2), P_i = [[(phi^i_10)', (phi^i_01)'], [phi^i_10, phi^i_01]]."""
    j, jt = jacobian_rate(sol, z, t)
    return sum(jt[i, 0] * j[i, 1] - jt[i, 1] * j[i, 0] for i in range(2))


def h_rate(sol: Solution, z: np.ndarray, t: float) -> Any:
    """Exact time derivative of h, sum q_ij g_ij."""
    q = time_minors_q(sol.A, t, sol.theta0)
    g = spatial_minors(sol.v, z)
    return sum(q[key] * g[key] for key in q)


def _floor(det_floor: Optional[float]) -> float:
    return settings.DET_FLOOR if det_floor is None else det_floor


def vorticity(
    sol: Solution,
    z: np.ndarray,
    t: float,
    det_floor: Optional[float] = None,
    strict: bool = True,
) -> Any:
    """
    zeta = h / det(d phi).

    Points with |det| <= det_floor raise NearSingularError, or come back as nan
    when ``strict`` is False.
    """
    z = np.asarray(z, dtype=float)
    floor = _floor(det_floor)
    det = det_jacobian(sol, z, t)
    bad = ~(np.abs(det) > floor)
    if strict and np.any(bad):
        idx = np.unravel_index(int(np.argmax(bad)), np.shape(bad)) if np.ndim(bad) else ()
        at = tuple(float(c) for c in z[(slice(None),) + idx])
        raise NearSingularError(f"|det(d phi)| <= {floor:g} at z={at}, t={t:g}", at=at)
    with np.errstate(all="ignore"):
        zeta = h_value(sol, z, t) / det
    return np.where(bad, np.nan, zeta) if np.ndim(zeta) else (np.nan if bad else zeta)


def lagrangian_velocity(sol: Solution, z: np.ndarray, t: float) -> np.ndarray:
    _, b1, _ = frame(sol, t)
    return _apply(b1, sol.v.values(z))


def lagrangian_acceleration(sol: Solution, z: np.ndarray, t: float) -> np.ndarray:
    _, _, b2 = frame(sol, t)
    return _apply(b2, sol.v.values(z))


# ──────────────────────────
# Inversion (Newton)
# ──────────────────────────
class Inversion(NamedTuple):
    z: np.ndarray  # nan where not converged
    ok: np.ndarray
    singular: np.ndarray
    iterations: int
    residual: float


def invert_points(
    sol: Solution,
    x: np.ndarray,
    t: float,
    guess: Optional[np.ndarray] = None,
    tol: float = 1e-12,
    max_iter: int = 50,
    det_floor: Optional[float] = None,
) -> Inversion:
    """
    Vectorised Newton iteration z <- z - (d phi)^-1 (phi(z, t) - x); never raises.

    A point is solved once every component of phi(z, t) - x is within ``tol``.
    """
    x = np.asarray(x, dtype=float)
    shape = x.shape[1:]
    xf = x.reshape(2, -1)
    z = np.array(xf if guess is None else np.broadcast_to(guess, x.shape).reshape(2, -1))
    n = xf.shape[1]
    floor = _floor(det_floor)

    ok = np.zeros(n, dtype=bool)
    failed = np.zeros(n, dtype=bool)
    singular = np.zeros(n, dtype=bool)
    res = np.full(n, np.inf)
    it = 0
    with np.errstate(all="ignore"):
        while True:
            active = ~(ok | failed)
            if not active.any():
                break
            idx = np.flatnonzero(active)
            za = z[:, idx]
            f = phi(sol, za, t) - xf[:, idx]
            r = np.max(np.abs(f), axis=0)
            res[idx] = r
            done = r <= tol
            ok[idx[done]] = True
            bad = ~np.isfinite(r)
            failed[idx[bad]] = True
            step = ~(done | bad)
            if it >= max_iter or not step.any():
                break
            idx, za, f = idx[step], za[:, step], f[:, step]
            j = phi_jacobian(sol, za, t)
            det = det2(j)
            sing = ~(np.abs(det) > floor)
            singular[idx[sing]] = True
            failed[idx[sing]] = True
            go = ~sing
            j, det, f, idx = j[:, :, go], det[go], f[:, go], idx[go]
            dz0 = (j[1, 1] * f[0] - j[0, 1] * f[1]) / det
            dz1 = (-j[1, 0] * f[0] + j[0, 0] * f[1]) / det
            z[0, idx] -= dz0
            z[1, idx] -= dz1
            it += 1

    out = np.where(ok, z, np.nan).reshape(x.shape)
    unsolved = res[~ok]
    worst = float(np.nanmax(unsolved)) if unsolved.size and np.isfinite(unsolved).any() else 0.0
    return Inversion(out, ok.reshape(shape), singular.reshape(shape), it, worst)


def invert(
    sol: Solution,
    x: np.ndarray,
    t: float,
    guess: Optional[np.ndarray] = None,
    tol: float = 1e-12,
    max_iter: int = 50,
    det_floor: Optional[float] = None,
) -> np.ndarray:
    """Labels z with phi(z, t) = x. Raises when any point fails."""
    result = invert_points(sol, x, t, guess, tol, max_iter, det_floor)
    if np.all(result.ok):
        return result.z
    if np.any(result.singular):
        raise NearSingularError(f"Jacobian became singular while inverting at t={t:g}")
    raise NoConvergenceError(
        "Newton inversion did not converge", result.iterations, result.residual
    )


def invert_sweep(
    sol: Solution,
    X: np.ndarray,
    t: float,
    guess: Optional[np.ndarray] = None,
    **kwargs: Any,
) -> Inversion:
    """
    Invert a grid X of shape (2, n1, n2) row by row, starting each row from the
    labels recovered for the previous row.
    """
    X = np.asarray(X, dtype=float)
    base = X if guess is None else np.broadcast_to(guess, X.shape)
    Z = np.full(X.shape, np.nan)
    ok = np.zeros(X.shape[1:], dtype=bool)
    singular = np.zeros(X.shape[1:], dtype=bool)
    iterations, worst = 0, 0.0
    prev: Optional[Inversion] = None
    for i in range(X.shape[1]):
        g = np.array(base[:, i])
        if prev is not None:
            g = np.where(prev.ok, prev.z, g)
        row = invert_points(sol, X[:, i], t, guess=g, **kwargs)
        if not np.all(row.ok):
            # second chance from the caller's guess
            retry = invert_points(sol, X[:, i], t, guess=base[:, i], **kwargs)
            row = retry if retry.ok.sum() > row.ok.sum() else row
        Z[:, i], ok[i], singular[i] = row.z, row.ok, row.singular
        iterations = max(iterations, row.iterations)
        worst = max(worst, row.residual)
        prev = row
    if not ok.all():
        logger.info("invert_sweep: %d of %d points not inverted at t=%g", (~ok).sum(), ok.size, t)
    return Inversion(Z, ok, singular, iterations, worst)


def eulerian_velocity(
    sol: Solution, x: np.ndarray, t: float, guess: Optional[np.ndarray] = None
) -> np.ndarray:
    return lagrangian_velocity(sol, invert(sol, x, t, guess), t)


def lagrangian_map(sol: Solution, z: np.ndarray, t: float) -> np.ndarray:
    """Phi^t = phi^t o (phi^0)^-1, started from the point itself."""
    return phi(sol, invert(sol, z, 0.0, guess=z), t)
