# eulerflow/app/cli.py
"""
Command-line front end.

    eulerflow verify        --config PATH [--out DIR]
    eulerflow trajectories  --config PATH [--out DIR]
    eulerflow field         --config PATH [--t REAL] [--out DIR]
    eulerflow figure        --figure N    [--out DIR]

Exit codes: 0 pass, 1 check or numerical failure, 2 usage or configuration error.
"""

from __future__ import annotations

import functools
import logging
from pathlib import Path
from typing import List, Optional

import click
import numpy as np
from pydantic import ValidationError

from . import settings
from .calc import field_frame, trajectories_frame, write_csv
from .errors import (
    AntiCRViolation,
    ConfigError,
    DimensionError,
    ExprError,
    InvalidParameters,
    NearSingularError,
    NoConvergenceError,
    QuadratureError,
)
from .families import build_solution
from .kernel import Solution, invert_sweep, lagrangian_velocity, vorticity
from .models import Config, ResidualReport, VerificationSummary
from .verify import check_anticr, run_suite, suite_passed

logger = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"
FIGURES = (1, 2, 3, 4)

EXIT_FAILED = 1
EXIT_USAGE = 2


# ──────────────────────────
# Helpers
# ──────────────────────────
def _exit(code: int, message: str) -> None:
    click.echo(message, err=True)
    raise SystemExit(code)


def _guarded(command):
    """Map library errors onto exit codes."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except (ConfigError, DimensionError, ExprError, InvalidParameters, ValidationError) as exc:
            _exit(EXIT_USAGE, f"config error: {exc}")
        except (NoConvergenceError, NearSingularError, QuadratureError, AntiCRViolation) as exc:
            _exit(EXIT_FAILED, f"numerical failure: {exc}")

    return wrapper


def load_config(path: Path) -> Config:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from exc
    return Config.model_validate_json(text)


def _out_dir(out: Optional[str], config: Config) -> Path:
    return Path(out or config.output.directory or settings.OUTPUT_DIR)


def _build(config: Config) -> Solution:
    sol = build_solution(config)
    logger.info("built %s solution (k=%d, theta0=%g)", config.family, sol.k, sol.theta0)
    return sol


def _verify(config: Config) -> List[ResidualReport]:
    """run_suite, with an anti-CR violation reported as a failing check."""
    try:
        sol = _build(config)
    except AntiCRViolation as exc:
        logger.error("%s", exc)
        return [check_anticr(config.family_params.f, config.grid)]
    return run_suite(sol, config)


def _summary(config: Config, reports: List[ResidualReport]) -> VerificationSummary:
    return VerificationSummary(
        name=config.name, family=config.family, passed=suite_passed(reports), reports=reports
    )


def _write_summary(summary: VerificationSummary, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(summary.model_dump_json(by_alias=True, indent=2) + "\n", encoding="utf-8")
    return path


def _echo_failures(reports: List[ResidualReport]) -> None:
    for report in reports:
        for name in report.failures():
            entry = next((e for e in report.entries if e.name == name), None)
            detail = f" max_abs={entry.max_abs:.3e} tol={entry.tol:.1e}" if entry else ""
            click.echo(f"FAIL {report.check}.{name}{detail}", err=True)


def _trajectories(sol: Solution, config: Config):
    if config.trajectories is None:
        raise ConfigError("config has no 'trajectories' block")
    traj = config.trajectories
    return trajectories_frame(sol, traj.seed_points(), traj.times())


# ──────────────────────────
# Commands
# ──────────────────────────
@click.group()
@click.option("--log-level", default=None, help="Override EULERFLOW_LOG_LEVEL.")
def cli(log_level: Optional[str]) -> None:
    """Separated-variables solutions of the 2D Euler equations."""
    logging.basicConfig(
        level=(log_level or settings.LOG_LEVEL).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


config_option = click.option(
    "--config",
    "config_path",
    required=True,
    type=click.Path(dir_okay=False, path_type=Path),
    help="JSON run configuration.",
)
out_option = click.option("--out", default=None, help="Output directory.")


@cli.command()
@config_option
@out_option
@_guarded
def verify(config_path: Path, out: Optional[str]) -> None:
    """Run every check that applies to the configured family."""
    config = load_config(config_path)
    reports = _verify(config)
    summary = _summary(config, reports)
    if "json" in config.output.formats:
        path = _write_summary(summary, _out_dir(out, config) / "report.json")
        click.echo(f"report: {path}")
    if not summary.passed:
        _echo_failures(reports)
        _exit(EXIT_FAILED, "verification failed")
    click.echo("verification passed")


@cli.command()
@config_option
@out_option
@_guarded
def trajectories(config_path: Path, out: Optional[str]) -> None:
    """Particle paths x = phi(z, t) for the configured seeds."""
    config = load_config(config_path)
    df = _trajectories(_build(config), config)
    if "csv" in config.output.formats:
        path = write_csv(df, _out_dir(out, config) / "trajectories.csv")
        click.echo(f"trajectories: {path} ({len(df)} rows)")


@cli.command()
@config_option
@click.option("--t", "t", type=float, default=None, help="Time (defaults to the field block's t).")
@out_option
@_guarded
def field(config_path: Path, t: Optional[float], out: Optional[str]) -> None:
    """Eulerian velocity and vorticity on the configured x-grid."""
    config = load_config(config_path)
    if config.field is None:
        raise ConfigError("config has no 'field' block")
    t = config.field.t if t is None else t
    sol = _build(config)
    X = config.field.points()
    inv = invert_sweep(sol, X, t)
    U = lagrangian_velocity(sol, inv.z, t)
    zeta = vorticity(sol, inv.z, t, config.grid.det_floor, strict=False)
    ok = inv.ok & np.all(np.isfinite(U), axis=0) & np.isfinite(zeta)
    U = np.where(ok, U, np.nan)
    zeta = np.where(ok, zeta, np.nan)
    if "csv" in config.output.formats:
        path = write_csv(field_frame(X, U, zeta), _out_dir(out, config) / "field.csv")
        click.echo(f"field: {path}")
    excluded = 1.0 - float(np.mean(ok))
    if excluded > ResidualReport.max_excluded:
        _exit(EXIT_FAILED, f"{excluded:.1%} of field points could not be inverted")


@cli.command()
@click.option("--figure", "n", required=True, type=click.IntRange(1, len(FIGURES)))
@out_option
@_guarded
def figure(n: int, out: Optional[str]) -> None:
    """Verify a built-in figure configuration, then write its trajectory data."""
    config = load_config(CONFIG_DIR / f"figure{n}.json")
    sol = _build(config)
    reports = run_suite(sol, config)
    summary = _summary(config, reports)
    out_dir = _out_dir(out, config)
    path = _write_summary(summary, out_dir / f"figure{n}_report.json")
    click.echo(f"report: {path}")
    if not summary.passed:
        _echo_failures(reports)
        _exit(EXIT_FAILED, f"figure {n} failed verification; no data written")
    df = _trajectories(sol, config)
    path = write_csv(df, out_dir / f"figure{n}_trajectories.csv")
    click.echo(f"trajectories: {path} ({len(df)} rows)")


def main() -> None:
    cli()


if __name__ == "__main__":
    main()
