# eulerflow/app/families.py
"""
Constructors for the five separated solution families.

    make_k2         A = M(theta)[[r, r a], [0, e/r]],               v = (z1, z2)
    make_k3         A = M(theta)[[r, r a1, r a2], [0, 1/r, 0]],     v = (z1, z2, f(z2))
    make_elliptic   A = (I | M(mu t)),                              v = (z1, z2, f1, f2)
    make_hyperbolic A = [[e^ct, 0, 0, e^-ct], [0, e^-ct, e^ct, 0]], v = (z1, z2, f1(z1), f2(z2))
    make_parabolic  A = [[t, 1, 0, 0], [0, 0, 1, t]],               v = (z1, z2, z2 f1' + f2, f1)

The gauge functions a, a1, a2 are defined by their rates and integrated with
adaptive Simpson quadrature.
"""

from __future__ import annotations

import logging
import math
import operator
from dataclasses import dataclass, field, replace
from functools import cached_property, partial
from typing import Callable, Dict, Optional, Union

import numpy as np

from .errors import AntiCRViolation, InvalidParameters, QuadratureError
from .expr import (
    ZERO,
    T,
    Z1,
    Z2,
    Constant,
    Expr,
    cos,
    differentiate,
    evaluate,
    evaluate_on,
    exp,
    sin,
)
from .kernel import (
    ComposedTimeFunction,
    ExprTimeFunction,
    Family,
    Jet,
    Solution,
    SpatialMap,
    TimeMatrix,
    max_spatial_minor,
    max_time_minor,
    remember,
)
from .models import (
    AntiCRMap,
    Config,
    EllipticParams,
    GerstnerParams,
    GridSpec,
    HyperbolicParams,
    K2Params,
    K3Params,
    ParabolicParams,
)

logger = logging.getLogger(__name__)

ANTICR_SAMPLES = 200
ANTICR_TOL = 1e-9
R_FLOOR = 1e-9
RANK_FLOOR = 1e-12


# ──────────────────────────
# Quadrature
# ──────────────────────────
def _simpson(f: Callable[[float], float], a: float, fa: float, b: float, fb: float):
    m = 0.5 * (a + b)
    fm = f(m)
    return m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb)


def _adaptive(f, a, fa, b, fb, m, fm, whole, tol, level, max_depth):
    lm, flm, left = _simpson(f, a, fa, m, fm)
    rm, frm, right = _simpson(f, m, fm, b, fb)
    delta = left + right - whole
    # the first levels always split so a lucky three-point estimate is not trusted
    if level >= 3 and abs(delta) <= 15.0 * tol:
        return left + right + delta / 15.0
    if level >= max_depth:
        raise QuadratureError(
            f"adaptive Simpson did not reach tolerance on [{a:.6g}, {b:.6g}] "
            f"within depth {max_depth} (error estimate {abs(delta) / 15.0:.3e})"
        )
    return _adaptive(f, a, fa, m, fm, lm, flm, left, tol / 2, level + 1, max_depth) + _adaptive(
        f, m, fm, b, fb, rm, frm, right, tol / 2, level + 1, max_depth
    )


def _composite(f: Callable[[float], float], a: float, b: float, n: int = 16) -> float:
    x = np.linspace(a, b, n + 1)
    y = np.array([f(float(xi)) for xi in x])
    h = (b - a) / n
    return float(h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum()))


def quadrature(
    integrand: Union[Expr, Callable[[float], float]],
    t0: float,
    t1: float,
    abs_tol: float = 1e-12,
    rel_tol: float = 1e-10,
    max_depth: int = 40,
) -> float:
    """
    Integral of ``integrand`` over [t0, t1] by adaptive Simpson.

    Stops when the local error estimate is below max(abs_tol, rel_tol * |I|);
    raises QuadratureError if that takes more than ``max_depth`` bisections or
    the integrand is not finite.
    """
    if isinstance(integrand, Expr):
        expr = integrand

        def f(t: float) -> float:
            return float(evaluate(expr, {"t": t}))

    else:
        f = integrand

    def checked(t: float) -> float:
        value = f(t)
        if not math.isfinite(value):
            raise QuadratureError(f"integrand is not finite at t={t:.6g}")
        return value

    if t0 == t1:
        return 0.0
    if t1 < t0:
        return -quadrature(integrand, t1, t0, abs_tol, rel_tol, max_depth)

    fa, fb = checked(t0), checked(t1)
    m, fm, whole = _simpson(checked, t0, fa, t1, fb)
    tol = max(abs_tol, rel_tol * abs(_composite(checked, t0, t1)))
    return _adaptive(checked, t0, fa, t1, fb, m, fm, whole, tol, 0, max_depth)


@dataclass(frozen=True)
class QuadratureTimeFunction:
    """g(t) = initial + integral of ``integrand`` from t0 to t; g' is the integrand itself."""

    integrand: Expr
    t0: float = 0.0
    initial: float = 0.0
    _values: Dict[float, float] = field(default_factory=dict, compare=False, repr=False)

    @cached_property
    def rate(self) -> Expr:
        return differentiate(self.integrand, "t")

    def value(self, t: float) -> float:
        t = float(t)
        hit = self._values.get(t)
        if hit is None:
            hit = remember(self._values, t, self.initial + quadrature(self.integrand, self.t0, t))
        return hit

    def jet(self, t: float) -> Jet:
        env = {"t": t}
        return Jet(
            self.value(t), float(evaluate(self.integrand, env)), float(evaluate(self.rate, env))
        )


# ──────────────────────────
# Helpers
# ──────────────────────────
def _over(numerator: float, denominator: Jet) -> Jet:
    return numerator / denominator


def _check_r(r: Expr, window) -> None:
    ts = np.linspace(window[0], window[1], 101)
    values = np.array([float(evaluate(r, {"t": float(t)})) for t in ts])
    worst = int(np.argmin(values))
    if not values[worst] >= R_FLOOR:
        raise InvalidParameters(
            f"r(t) must stay >= {R_FLOOR:g} on [{window[0]:g}, {window[1]:g}]; "
            f"r({ts[worst]:.6g}) = {values[worst]:.6g}"
        )


def _check_rank(sol: Solution, t: float, domain: Optional[GridSpec]) -> None:
    if max_time_minor(sol.A, t) <= RANK_FLOOR:
        raise InvalidParameters(f"A(t) is rank deficient at t={t:g}")
    if domain is None:
        return
    low = ~(max_spatial_minor(sol.v, domain.labels()) > RANK_FLOOR)
    if low.any():
        logger.warning("dv has rank < 2 at %d of %d label points", low.sum(), low.size)


def _flag_singular(sol: Solution, domain: Optional[GridSpec]) -> None:
    """Log (but accept) label points where the closed-form det(d phi) vanishes."""
    if domain is None:
        return
    z = domain.labels()
    det = evaluate_on(sol.det_closed, {"z1": z[0], "z2": z[1]}, z.shape[1:])
    bad = ~(np.abs(det) > domain.det_floor)
    if bad.any():
        i = np.unravel_index(int(np.argmax(bad)), bad.shape)
        logger.warning(
            "%s: det(d phi) vanishes at %d of %d label points (first at z=(%.6g, %.6g)); "
            "they are excluded from vorticity and inversion",
            sol.family.value,
            bad.sum(),
            bad.size,
            z[0][i],
            z[1][i],
        )


def _finish(sol: Solution, t0: float, domain: Optional[GridSpec]) -> Solution:
    _check_rank(sol, t0, domain)
    _flag_singular(sol, domain)
    logger.debug("constructed %s solution with k=%d", sol.family.value, sol.k)
    return sol


# ──────────────────────────
# k = 2, 3
# ──────────────────────────
def make_k2(p: K2Params, domain: Optional[GridSpec] = None) -> Solution:
    """Kirchhoff-type family: det(d phi) = e, zeta = c / e."""
    _check_r(p.r, p.time_window)
    theta_dot = differentiate(p.theta, "t")
    a = QuadratureTimeFunction((Constant(2.0 * p.e) * theta_dot - p.c) / p.r**2, p.t0, p.a0)
    r = ExprTimeFunction(p.r)
    rows = (
        (r, ComposedTimeFunction(operator.mul, (r, a))),
        (ExprTimeFunction(ZERO), ComposedTimeFunction(partial(_over, p.e), (r,))),
    )
    sol = Solution(
        family=Family.K2,
        A=TimeMatrix(rows, theta=ExprTimeFunction(p.theta)),
        v=SpatialMap((Z1, Z2)),
        det_closed=Constant(p.e),
        zeta_closed=Constant(p.c / p.e),
        params=p,
        gauges=(("a", a),),
    )
    return _finish(sol, p.t0, domain)


def make_k3(p: K3Params, domain: Optional[GridSpec] = None) -> Solution:
    """det(d phi) = 1, zeta = f'(z2)."""
    _check_r(p.r, p.time_window)
    theta_dot = differentiate(p.theta, "t")
    a1 = QuadratureTimeFunction(Constant(2.0) * theta_dot / p.r**2, p.t0, p.a1_0)
    a2 = QuadratureTimeFunction(-(Constant(1.0) / p.r**2), p.t0, p.a2_0)
    r = ExprTimeFunction(p.r)
    zero = ExprTimeFunction(ZERO)
    rows = (
        (
            r,
            ComposedTimeFunction(operator.mul, (r, a1)),
            ComposedTimeFunction(operator.mul, (r, a2)),
        ),
        (zero, ComposedTimeFunction(partial(_over, 1.0), (r,)), zero),
    )
    sol = Solution(
        family=Family.K3,
        A=TimeMatrix(rows, theta=ExprTimeFunction(p.theta)),
        v=SpatialMap((Z1, Z2, p.f)),
        det_closed=Constant(1.0),
        zeta_closed=differentiate(p.f, "z2"),
        params=p,
        gauges=(("a1", a1), ("a2", a2)),
    )
    return _finish(sol, p.t0, domain)


# ──────────────────────────
# k = 4
# ──────────────────────────
def anticr_residuals(f: AntiCRMap, z: np.ndarray):
    """(f1_z1 + f2_z2, f1_z2 - f2_z1, gradient scale) at points z of shape (2, ...)."""
    df = SpatialMap((f.f1, f.f2)).jacobian(z)
    scale = np.max(np.abs(df), axis=(0, 1))
    return df[0, 0] + df[1, 1], df[0, 1] - df[1, 0], scale


def check_anticr_map(f: AntiCRMap, domain: Optional[GridSpec] = None) -> None:
    """Sample the anti-CR system at 200 seeded random points; raise AntiCRViolation on failure."""
    z1 = domain.z1 if domain is not None else (-1.0, 1.0)
    z2 = domain.z2 if domain is not None else (-1.0, 1.0)
    rng = np.random.default_rng(0)
    z = np.stack(
        [rng.uniform(*z1, ANTICR_SAMPLES), rng.uniform(*z2, ANTICR_SAMPLES)]
    )
    r1, r2, scale = anticr_residuals(f, z)
    with np.errstate(invalid="ignore"):
        rel = np.maximum(np.abs(r1), np.abs(r2)) / (1.0 + scale)
    rel = np.where(np.isfinite(rel), rel, 0.0)
    worst = int(np.argmax(rel))
    if rel[worst] > ANTICR_TOL:
        raise AntiCRViolation(
            float(max(abs(r1[worst]), abs(r2[worst]))), (float(z[0, worst]), float(z[1, worst]))
        )


def make_elliptic(p: EllipticParams, domain: Optional[GridSpec] = None) -> Solution:
    """phi = z + M(mu t) f for an anti-CR map f."""
    check_anticr_map(p.f, domain)
    mut = Constant(p.mu) * T
    rows = ((1.0, 0.0, cos(mut), -sin(mut)), (0.0, 1.0, sin(mut), cos(mut)))
    grad_sq = differentiate(p.f.f1, "z1") ** 2 + differentiate(p.f.f1, "z2") ** 2
    sol = Solution(
        family=Family.ELLIPTIC,
        A=TimeMatrix.from_exprs(rows),
        v=SpatialMap((Z1, Z2, p.f.f1, p.f.f2)),
        det_closed=Constant(1.0) - grad_sq,
        zeta_closed=Constant(-2.0 * p.mu) * grad_sq / (Constant(1.0) - grad_sq),
        params=p,
    )
    return _finish(sol, 0.0, domain)


def gerstner_map(kappa: float) -> AntiCRMap:
    """f_G = (e^{kappa z2} / kappa) (sin(kappa z1), -cos(kappa z1))."""
    if kappa == 0:
        raise InvalidParameters("kappa must be nonzero")
    k = Constant(kappa)
    g = exp(k * Z2) / k
    return AntiCRMap(f1=g * sin(k * Z1), f2=-(g * cos(k * Z1)))


def make_gerstner(kappa: float, mu: float, domain: Optional[GridSpec] = None) -> Solution:
    """The elliptic solution with f = f_G; det(d phi) = 1 - e^{2 kappa z2}."""
    f = gerstner_map(kappa)
    sol = make_elliptic(EllipticParams(f=f, mu=mu), domain)
    e2 = exp(Constant(2.0 * kappa) * Z2)
    return replace(
        sol,
        det_closed=Constant(1.0) - e2,
        zeta_closed=Constant(-2.0 * mu) * e2 / (Constant(1.0) - e2),
    )


def make_hyperbolic(p: HyperbolicParams, domain: Optional[GridSpec] = None) -> Solution:
    """det(d phi) = 1 - f1' f2', zeta = 2c (f1' + f2') / (1 - f1' f2')."""
    exponent = p.exponent if p.exponent is not None else Constant(p.c) * T
    grow, decay = exp(exponent), exp(-exponent)
    rows = ((grow, 0.0, 0.0, decay), (0.0, decay, grow, 0.0))
    d1 = differentiate(p.f1, "z1")
    d2 = differentiate(p.f2, "z2")
    det = Constant(1.0) - d1 * d2
    sol = Solution(
        family=Family.HYPERBOLIC,
        A=TimeMatrix.from_exprs(rows),
        v=SpatialMap((Z1, Z2, p.f1, p.f2)),
        det_closed=det,
        zeta_closed=Constant(2.0 * p.c) * (d1 + d2) / det,
        params=p,
    )
    return _finish(sol, 0.0, domain)


def make_parabolic(p: ParabolicParams, domain: Optional[GridSpec] = None) -> Solution:
    """det(d phi) = -z2 f1'' - f2', zeta = (1 + f1'^2) / det."""
    d1 = differentiate(p.f1, "z1")
    dd1 = differentiate(d1, "z1")
    df2 = differentiate(p.f2, "z1")
    rows = ((T, 1.0, 0.0, 0.0), (0.0, 0.0, 1.0, T))
    det = -(Z2 * dd1) - df2
    sol = Solution(
        family=Family.PARABOLIC,
        A=TimeMatrix.from_exprs(rows),
        v=SpatialMap((Z1, Z2, Z2 * d1 + p.f2, p.f1)),
        det_closed=det,
        zeta_closed=(Constant(1.0) + d1**2) / det,
        params=p,
    )
    return _finish(sol, 0.0, domain)


def with_rotation(sol: Solution, theta0: float) -> Solution:
    """Premultiply by M(theta0 t); rotations compose additively."""
    if theta0 == 0.0:
        return sol
    return replace(sol, theta0=sol.theta0 + float(theta0))


# ──────────────────────────
# Config entry point
# ──────────────────────────
def build_solution(config: Config) -> Solution:
    p = config.family_params
    domain = config.grid
    if config.family == "k2":
        sol = make_k2(p, domain)
    elif config.family == "k3":
        sol = make_k3(p, domain)
    elif config.family == "elliptic":
        sol = make_elliptic(p, domain)
    elif config.family == "gerstner":
        sol = make_gerstner(p.kappa, p.mu, domain)
    elif config.family == "hyperbolic":
        sol = make_hyperbolic(p, domain)
    else:
        sol = make_parabolic(p, domain)
    return with_rotation(sol, config.theta0)


__all__ = [
    "AntiCRMap",
    "EllipticParams",
    "GerstnerParams",
    "HyperbolicParams",
    "K2Params",
    "K3Params",
    "ParabolicParams",
    "QuadratureTimeFunction",
    "anticr_residuals",
    "build_solution",
    "check_anticr_map",
    "gerstner_map",
    "make_elliptic",
    "make_gerstner",
    "make_hyperbolic",
    "make_k2",
    "make_k3",
    "make_parabolic",
    "quadrature",
    "with_rotation",
]
