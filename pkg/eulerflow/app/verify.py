# eulerflow/app/verify.py
"""
Residual suites for constructed solutions.

Every check returns a ResidualReport: named max-|residual| entries, each with
its tolerance and the (z1, z2, t) where the maximum occurred. Points that cannot
be evaluated (singular Jacobian, failed inversion, non-finite values) are left
out of the maxima and counted in ``excluded_fraction``; a report with more than
10% excluded points fails regardless of its entries.

Closed-form and rotation-shift residuals are absolute. Drift residuals are
relative to 1 + |value at t0|, PDE residuals to 1 + |zeta|^3 and the transport
residual to the size of its two terms.
"""

from __future__ import annotations

import logging
from dataclasses import replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .calc import collinearity_residual, segment_residual
from .errors import DimensionError, InvalidParameters
from .expr import Expr, evaluate, evaluate_on
from .families import anticr_residuals, with_rotation
from .kernel import (
    Family,
    Minors,
    Solution,
    SpatialMap,
    det_jacobian,
    frame,
    h_rate,
    h_value,
    invert_points,
    invert_sweep,
    lagrangian_acceleration,
    lagrangian_velocity,
    minor_sum,
    phi,
    pluecker_terms,
    spatial_minors,
    time_minors_p,
    time_minors_Q,
    vorticity,
)
from .models import (
    AntiCRMap,
    Config,
    GridSpec,
    ResidualEntry,
    ResidualPoint,
    ResidualReport,
    TrajectoryConfig,
)

logger = logging.getLogger(__name__)

DRIFT_TOL = 1e-8
DET_TOL = 1e-9
ZETA_TOL = 1e-8
CAUCHY_BINET_TOL = 1e-10
PLUECKER_TOL = 1e-12
CONSTRAINT_TOL = 1e-10
MINOR_TOL = 1e-9
ROTATION_TOL = 1e-10
ANTICR_TOL = 1e-9
LAPLACE_TOL = 1e-8
GAUGE_TOL = 1e-6
GEOMETRY_TOL = 1e-9
INVERSE_AFFINE_TOL = 1e-8

CONSTRAINT_CASE = {
    Family.HYPERBOLIC: "case1",
    Family.PARABOLIC: "case2",
    Family.ELLIPTIC: "case3",
}


# ──────────────────────────
# Helpers
# ──────────────────────────
def _entry(
    name: str,
    residual,
    tol: float,
    z: Optional[np.ndarray] = None,
    t=None,
) -> ResidualEntry:
    """Max of |residual| over its finite values, located at its argmax."""
    r = np.abs(np.asarray(residual, dtype=float))
    finite = np.isfinite(r)
    if r.size == 0 or not finite.any():
        empty = r.size == 0
        return ResidualEntry(name=name, max_abs=0.0 if empty else np.nan, tol=tol, passed=empty)
    flat = int(np.argmax(np.where(finite, r, -np.inf)))
    max_abs = float(r.flat[flat])

    def pick(a) -> Optional[float]:
        if a is None:
            return None
        return float(np.broadcast_to(np.asarray(a, dtype=float), r.shape).flat[flat])

    at = ResidualPoint(
        z1=pick(None if z is None else z[0]), z2=pick(None if z is None else z[1]), t=pick(t)
    )
    return ResidualEntry(name=name, max_abs=max_abs, at=at, tol=tol, passed=max_abs <= tol)


def _report(check: str, entries: List[ResidualEntry], mask=None) -> ResidualReport:
    excluded = 0.0 if mask is None else 1.0 - float(np.mean(mask))
    report = ResidualReport(check=check, entries=entries, excluded_fraction=excluded)
    logger.info(
        "%s: %s%s",
        check,
        "pass" if report.passed else "FAIL",
        "" if report.passed else f" ({', '.join(report.failures())})",
    )
    return report


def _masked(values, mask):
    return np.where(mask, values, np.nan)


def _family(tag: Union[Family, str]) -> Family:
    if isinstance(tag, Family):
        return tag
    if tag == "gerstner":
        return Family.ELLIPTIC
    try:
        return Family(str(tag).lower())
    except ValueError:
        raise InvalidParameters(f"unknown family '{tag}'") from None


# ──────────────────────────
# Time invariance
# ──────────────────────────
def check_time_invariance(sol: Solution, grid: GridSpec) -> ResidualReport:
    """det(d phi), h and zeta must not move in t; h_rate = sum q_ij g_ij is the exact d/dt h."""
    z = grid.labels()
    times = grid.times()
    t0 = float(times[0])
    det0 = det_jacobian(sol, z, t0)
    h0 = h_value(sol, z, t0)
    mask = np.abs(det0) > grid.det_floor
    with np.errstate(all="ignore"):
        zeta0 = h0 / det0

    shape = (len(times),) + det0.shape
    det_drift, h_drift, zeta_drift, rate = (np.full(shape, np.nan) for _ in range(4))
    with np.errstate(all="ignore"):
        for i, t in enumerate(times):
            det = det_jacobian(sol, z, t)
            h = h_value(sol, z, t)
            det_drift[i] = np.abs(det - det0) / (1.0 + np.abs(det0))
            h_drift[i] = np.abs(h - h0) / (1.0 + np.abs(h0))
            ok = np.abs(det) > grid.det_floor
            zeta_drift[i] = np.where(ok, np.abs(h / det - zeta0) / (1.0 + np.abs(zeta0)), np.nan)
            rate[i] = np.abs(h_rate(sol, z, t)) / (1.0 + np.abs(h0))

    tt = times[:, None, None]
    zz = z[:, None]
    entries = [
        _entry("det_drift", _masked(det_drift, mask), DRIFT_TOL, zz, tt),
        _entry("h_drift", _masked(h_drift, mask), DRIFT_TOL, zz, tt),
        _entry("zeta_drift", _masked(zeta_drift, mask), DRIFT_TOL, zz, tt),
        _entry("h_rate", _masked(rate, mask), DRIFT_TOL, zz, tt),
    ]
    return _report("time_invariance", entries, mask & np.isfinite(det0) & np.isfinite(h0))


# ──────────────────────────
# Identities and minors
# ──────────────────────────
def check_identities(sol: Solution, grid: GridSpec) -> ResidualReport:
    """Cauchy-Binet on the grid at every sampled time; Pluecker for k = 4."""
    z = grid.labels()
    times = grid.times()
    cb = []
    for t in times:
        total, scale = minor_sum(sol, z, t)
        cb.append(np.abs(det_jacobian(sol, z, t) - total) / (1.0 + scale))
    tt = times[:, None, None]
    entries = [_entry("cauchy_binet", np.stack(cb), CAUCHY_BINET_TOL, z[:, None], tt)]
    if sol.k == 4:
        pl = []
        for t in times:
            terms = pluecker_terms(time_minors_p(sol.A, t, sol.theta0))
            pl.append(abs(sum(terms)) / (1.0 + sum(abs(x) for x in terms)))
        entries.append(_entry("pluecker", np.array(pl), PLUECKER_TOL, None, times))
    return _report("identities", entries)


Combination = Callable[[Minors, Minors], float]

MINOR_COMBINATIONS: Dict[Family, Dict[str, Combination]] = {
    Family.K2: {
        "p12": lambda p, Q: p[1, 2],
        "Q12": lambda p, Q: Q[1, 2],
    },
    Family.K3: {
        "p12": lambda p, Q: p[1, 2],
        "p13": lambda p, Q: p[1, 3],
        "Q12": lambda p, Q: Q[1, 2],
        "Q13": lambda p, Q: Q[1, 3],
    },
    Family.ELLIPTIC: {
        "p12": lambda p, Q: p[1, 2],
        "p34": lambda p, Q: p[3, 4],
        "p13-p24": lambda p, Q: p[1, 3] - p[2, 4],
        "p14+p23": lambda p, Q: p[1, 4] + p[2, 3],
        "Q12": lambda p, Q: Q[1, 2],
        "Q34": lambda p, Q: Q[3, 4],
        "Q13-Q24": lambda p, Q: Q[1, 3] - Q[2, 4],
        "Q14+Q23": lambda p, Q: Q[1, 4] + Q[2, 3],
    },
    Family.HYPERBOLIC: {
        "p12": lambda p, Q: p[1, 2],
        "p34": lambda p, Q: p[3, 4],
        "p14": lambda p, Q: p[1, 4],
        "p23": lambda p, Q: p[2, 3],
        "Q12": lambda p, Q: Q[1, 2],
        "Q14": lambda p, Q: Q[1, 4],
        "Q23": lambda p, Q: Q[2, 3],
        "Q34": lambda p, Q: Q[3, 4],
    },
    Family.PARABOLIC: {
        "p12": lambda p, Q: p[1, 2],
        "p34": lambda p, Q: p[3, 4],
        "p13-p24": lambda p, Q: p[1, 3] - p[2, 4],
        "p23": lambda p, Q: p[2, 3],
        "Q12": lambda p, Q: Q[1, 2],
        "Q34": lambda p, Q: Q[3, 4],
        "Q13-Q24": lambda p, Q: Q[1, 3] - Q[2, 4],
        "Q23": lambda p, Q: Q[2, 3],
    },
}


def check_minor_constancy(sol: Solution, times: Sequence[float]) -> ResidualReport:
    """The family's constant combinations of p_ij and Q_ij, against their value at times[0]."""
    times = np.asarray(times, dtype=float)
    combos = MINOR_COMBINATIONS[sol.family]
    values = {name: [] for name in combos}
    for t in times:
        p = time_minors_p(sol.A, t, sol.theta0)
        Q = time_minors_Q(sol.A, t, sol.theta0)
        for name, fn in combos.items():
            values[name].append(fn(p, Q))
    entries = []
    for name, series in values.items():
        s = np.array(series)
        entries.append(_entry(name, np.abs(s - s[0]) / (1.0 + abs(s[0])), MINOR_TOL, None, times))
    return _report("minor_constancy", entries)


def check_constraints(v: SpatialMap, case: Union[str, int], grid: GridSpec) -> ResidualReport:
    """Minor combinations that vanish for each canonical form of v (k = 4)."""
    if v.k != 4:
        raise DimensionError(f"constraint systems are defined for k = 4, got k = {v.k}")
    key = f"case{case}" if isinstance(case, int) else str(case)
    z = grid.labels()
    g = spatial_minors(v, z)
    if key == "case1":
        combos = {"g13": g[1, 3], "g24": g[2, 4]}
    elif key == "case2":
        combos = {"g14": g[1, 4], "g24+g13": g[2, 4] + g[1, 3]}
    elif key == "case3":
        combos = {"g24+g13": g[2, 4] + g[1, 3], "g14-g23": g[1, 4] - g[2, 3]}
    else:
        raise InvalidParameters(f"unknown constraint case '{case}'")
    entries = [_entry(name, values, CONSTRAINT_TOL, z) for name, values in combos.items()]
    return _report(f"constraints_{key}", entries)


# ──────────────────────────
# Vorticity
# ──────────────────────────
def check_vorticity_closed_form(sol: Solution, grid: GridSpec) -> ResidualReport:
    z = grid.labels()
    t = grid.t0
    env = {"z1": z[0], "z2": z[1]}
    zeta = vorticity(sol, z, t, grid.det_floor, strict=False)
    expected = evaluate_on(sol.zeta_closed, env, z.shape[1:]) + 2.0 * sol.theta0
    det = det_jacobian(sol, z, t)
    det_expected = evaluate_on(sol.det_closed, env, z.shape[1:])
    with np.errstate(all="ignore"):
        zeta_res = np.abs(zeta - expected)
        det_res = np.abs(det - det_expected)
    mask = np.isfinite(zeta) & np.isfinite(expected)
    entries = [
        _entry("det_closed", det_res, DET_TOL, z, t),
        _entry("zeta_closed", _masked(zeta_res, mask), ZETA_TOL, z, t),
    ]
    return _report("vorticity_closed_form", entries, mask)


def check_rotation_shift(sol: Solution, theta0: float, grid: GridSpec) -> ResidualReport:
    """zeta(M(theta0 t) phi) - zeta(phi) = 2 theta0."""
    z = grid.labels()
    times = grid.times()
    rotated = with_rotation(sol, theta0)
    res = []
    for t in times:
        base = vorticity(sol, z, t, grid.det_floor, strict=False)
        turned = vorticity(rotated, z, t, grid.det_floor, strict=False)
        res.append(np.abs(turned - base - 2.0 * theta0))
    res = np.stack(res)
    mask = np.isfinite(res[0])
    return _report(
        "rotation_shift",
        [_entry("zeta_shift", res, ROTATION_TOL, z[:, None], times[:, None, None])],
        mask,
    )


def _stencil(expr: Expr, z: np.ndarray, h: float) -> Dict[str, np.ndarray]:
    shape = z.shape[1:]
    out = {}
    for name, (d1, d2) in {
        "c": (0, 0),
        "e": (1, 0),
        "w": (-1, 0),
        "n": (0, 1),
        "s": (0, -1),
        "ne": (1, 1),
        "nw": (-1, 1),
        "se": (1, -1),
        "sw": (-1, -1),
    }.items():
        out[name] = evaluate_on(expr, {"z1": z[0] + d1 * h, "z2": z[1] + d2 * h}, shape)
    return out


def check_vorticity_pde(
    family: Union[Family, str],
    sol: Solution,
    grid: GridSpec,
    fd_step: float = 1e-3,
    zeta: Optional[Expr] = None,
    tol: float = 1e-5,
) -> ResidualReport:
    """
    Second-order PDE satisfied by zeta (``zeta`` or the closed form) at interior
    grid points, derivatives by central differences of step ``fd_step``.

        elliptic    zeta (zeta - 2 mu) lap(zeta) + 2 (mu - zeta) |grad zeta|^2 = 0
        hyperbolic  (zeta^2 + 4 c^2) zeta_12 - 2 zeta zeta_1 zeta_2 = 0
        parabolic   zeta zeta_22 - 2 zeta_2^2 = 0, and 1/zeta affine in z2
    """
    fam = _family(family)
    if fam not in (Family.ELLIPTIC, Family.HYPERBOLIC, Family.PARABOLIC):
        raise InvalidParameters(f"no vorticity PDE for family '{fam.value}'")
    expr = sol.zeta_closed if zeta is None else zeta
    h = fd_step
    z = grid.labels()[:, 1:-1, 1:-1]
    s = _stencil(expr, z, h)
    c = s["c"]
    with np.errstate(all="ignore"):
        z10 = (s["e"] - s["w"]) / (2 * h)
        z01 = (s["n"] - s["s"]) / (2 * h)
        z20 = (s["e"] - 2 * c + s["w"]) / h**2
        z02 = (s["n"] - 2 * c + s["s"]) / h**2
        z11 = (s["ne"] - s["nw"] - s["se"] + s["sw"]) / (4 * h**2)
        norm = 1.0 + np.abs(c) ** 3
        entries = []
        if fam is Family.ELLIPTIC:
            mu = sol.params.mu
            pde = c * (c - 2 * mu) * (z20 + z02) + 2 * (mu - c) * (z10**2 + z01**2)
        elif fam is Family.HYPERBOLIC:
            k = sol.params.c
            pde = (c**2 + 4 * k**2) * z11 - 2 * c * z10 * z01
        else:
            pde = c * z02 - 2 * z01**2
            inverse = 1.0 / s["n"] - 2.0 / c + 1.0 / s["s"]
            entries.append(_entry("inverse_affine", inverse, INVERSE_AFFINE_TOL, z))
        entries.insert(0, _entry("pde", pde / norm, tol, z))
    mask = np.all(np.isfinite(np.stack(list(s.values()))), axis=0)
    return _report(f"vorticity_pde_{fam.value}", entries, mask)


# ──────────────────────────
# Eulerian frame
# ──────────────────────────
def x_grid_from_labels(sol: Solution, grid: GridSpec, t: float) -> Tuple[np.ndarray, np.ndarray]:
    """(phi(z, t), z) for the grid's label points."""
    z = grid.labels()
    return phi(sol, z, t), z


def check_euler_eulerian(
    sol: Solution,
    x_grid: np.ndarray,
    t: float,
    fd_x: float = 1e-4,
    fd_t: float = 1e-4,
    guesses: Optional[np.ndarray] = None,
    tol: float = 1e-4,
) -> ResidualReport:
    """
    Euler equations at spatial points x:

        div_u                 du1/dx1 + du2/dx2
        curl_momentum         curl of the material acceleration (= -grad p)
        vorticity_transport   d zeta/dt + u . grad zeta
        momentum_consistency  u_t + (u . grad) u by differences against the exact acceleration
    """
    X = np.asarray(x_grid, dtype=float)
    if guesses is None:
        base = invert_sweep(sol, X, t) if X.ndim == 3 else invert_points(sol, X, t)
        guesses = base.z
    guesses = np.asarray(guesses, dtype=float)
    usable = np.all(np.isfinite(guesses), axis=0)
    start = np.where(usable, guesses, X)

    offsets = {
        "c": (0.0, 0.0, 0.0),
        "e": (fd_x, 0.0, 0.0),
        "w": (-fd_x, 0.0, 0.0),
        "n": (0.0, fd_x, 0.0),
        "s": (0.0, -fd_x, 0.0),
        "f": (0.0, 0.0, fd_t),
        "b": (0.0, 0.0, -fd_t),
    }
    ok = usable.copy()
    U, acc, zeta = {}, {}, {}
    for key, (dx1, dx2, dt) in offsets.items():
        shifted = X + np.array([dx1, dx2]).reshape((2,) + (1,) * (X.ndim - 1))
        res = invert_points(sol, shifted, t + dt, guess=start)
        ok &= res.ok
        U[key] = lagrangian_velocity(sol, res.z, t + dt)
        zeta[key] = vorticity(sol, res.z, t + dt, strict=False)
        if key in ("c", "e", "w", "n", "s"):
            acc[key] = lagrangian_acceleration(sol, res.z, t + dt)
    ok &= np.all(np.isfinite(np.stack(list(zeta.values()))), axis=0)

    h, d = fd_x, fd_t
    with np.errstate(all="ignore"):
        du_dx1 = (U["e"] - U["w"]) / (2 * h)
        du_dx2 = (U["n"] - U["s"]) / (2 * h)
        div = du_dx1[0] + du_dx2[1]
        curl = (acc["e"][1] - acc["w"][1]) / (2 * h) - (acc["n"][0] - acc["s"][0]) / (2 * h)
        u = U["c"]
        momentum = (U["f"] - U["b"]) / (2 * d) + u[0] * du_dx1 + u[1] * du_dx2
        consistency = np.max(np.abs(momentum - acc["c"]), axis=0)
        zeta_t = (zeta["f"] - zeta["b"]) / (2 * d)
        advection = (u[0] * (zeta["e"] - zeta["w"]) + u[1] * (zeta["n"] - zeta["s"])) / (2 * h)
        # both terms are large where zeta is steep; only their balance is checked
        transport = (zeta_t + advection) / (1.0 + np.abs(zeta_t) + np.abs(advection))
    labels = np.where(ok, guesses, np.nan)
    entries = [
        _entry(name, _masked(values, ok), tol, labels, t)
        for name, values in (
            ("div_u", div),
            ("curl_momentum", curl),
            ("vorticity_transport", transport),
            ("momentum_consistency", consistency),
        )
    ]
    excluded = int((~ok).sum())
    if excluded:
        logger.info("euler check: %d of %d points excluded at t=%g", excluded, ok.size, t)
    return _report("euler_eulerian", entries, ok)


# ──────────────────────────
# Parameter-level checks
# ──────────────────────────
def check_anticr(f: AntiCRMap, grid: GridSpec) -> ResidualReport:
    """Both anti-CR equations and the harmonicity of f1 that they imply."""
    z = grid.labels()
    r1, r2, _ = anticr_residuals(f, z)
    hess = SpatialMap((f.f1,)).hessian(z)[0]
    lap = hess[0] + hess[2]
    mask = np.isfinite(r1) & np.isfinite(r2)
    entries = [
        _entry("f1_z1+f2_z2", r1, ANTICR_TOL, z),
        _entry("f1_z2-f2_z1", r2, ANTICR_TOL, z),
        _entry("laplacian_f1", lap, LAPLACE_TOL, z),
    ]
    return _report("anticr", entries, mask)


def check_gauge_functions(
    sol: Solution, times: Sequence[float], fd_step: float = 1e-3
) -> ResidualReport:
    """Quadrature-defined gauges against their defining rate: |FD(g, t) - g'(t)|."""
    times = np.asarray(times, dtype=float)
    entries = []
    for name, g in sol.gauges:
        res = []
        for t in times:
            fd = (g.value(t + fd_step) - g.value(t - fd_step)) / (2 * fd_step)
            res.append(abs(fd - float(evaluate(g.integrand, {"t": float(t)}))))
        entries.append(_entry(f"{name}_rate", np.array(res), GAUGE_TOL, None, times))
    return _report("gauge_functions", entries)


def check_trajectory_geometry(sol: Solution, traj: TrajectoryConfig) -> ResidualReport:
    """
    k = 3: particles sharing z2 stay on one line parallel to A_1(t).
    Parabolic (rotation removed): each trajectory is a straight segment.
    """
    seeds = traj.seed_points()
    times = traj.times()
    entries = []
    if sol.family is Family.K3:
        groups: Dict[float, List[int]] = {}
        for i, z2 in enumerate(seeds[:, 1]):
            groups.setdefault(round(float(z2), 12), []).append(i)
        groups = {k: v for k, v in groups.items() if len(v) >= 2}
        res, ts = [], []
        for t in times:
            b, _, _ = frame(sol, t)
            x = phi(sol, seeds.T, t).T
            for members in groups.values():
                res.append(collinearity_residual(x[members], direction=b[:, 0]))
                ts.append(t)
        entries.append(
            _entry("collinear_along_A1", np.array(res), GEOMETRY_TOL, None, np.array(ts))
        )
    elif sol.family is Family.PARABOLIC:
        plain = replace(sol, theta0=0.0)
        xs = np.stack([phi(plain, seeds.T, t) for t in times], axis=-1)  # (2, n, nt)
        res = [segment_residual(xs[:, i].T) for i in range(len(seeds))]
        entries.append(_entry("straight_segments", np.array(res), GEOMETRY_TOL, seeds.T))
    return _report("trajectory_geometry", entries)


# ──────────────────────────
# Suite
# ──────────────────────────
def run_suite(sol: Solution, config: Config) -> List[ResidualReport]:
    """Every check that applies to the solution's family and the config's blocks."""
    grid = config.grid
    reports = [
        check_time_invariance(sol, grid),
        check_vorticity_closed_form(sol, grid),
        check_identities(sol, grid),
        check_minor_constancy(sol, grid.times()),
    ]
    if sol.theta0 != 0.0:
        reports.append(check_rotation_shift(replace(sol, theta0=0.0), sol.theta0, grid))
    if sol.gauges:
        reports.append(check_gauge_functions(sol, np.linspace(*grid.t, 50)))
    if sol.family is Family.ELLIPTIC:
        reports.append(check_anticr(sol.params.f, grid))
    if sol.k == 4:
        reports.append(check_constraints(sol.v, CONSTRAINT_CASE[sol.family], grid))
    if config.pde is not None and sol.family in CONSTRAINT_CASE:
        pde_grid = config.pde.grid(grid)
        reports.append(
            check_vorticity_pde(sol.family, sol, pde_grid, config.pde.fd_step, tol=config.pde.tol)
        )
    if config.euler is not None:
        e = config.euler
        X, Z = x_grid_from_labels(sol, e.grid(), e.t)
        reports.append(check_euler_eulerian(sol, X, e.t, e.fd_x, e.fd_t, guesses=Z, tol=e.tol))
    if config.trajectories is not None and sol.family in (Family.K3, Family.PARABOLIC):
        reports.append(check_trajectory_geometry(sol, config.trajectories))
    return reports


def suite_passed(reports: Sequence[ResidualReport]) -> bool:
    return all(r.passed for r in reports)
