# eulerflow/app/models.py
from __future__ import annotations

import math
from typing import Annotated, Any, ClassVar, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PlainSerializer,
    PlainValidator,
    PrivateAttr,
    field_validator,
    model_validator,
)

from . import settings
from . import calc
from .errors import InvalidParameters
from .expr import Constant, Expr, as_expr, variables

Range = Tuple[float, float]


# ──────────────────────────
# Expression fields
# ──────────────────────────
def _expr_field(*allowed: str):
    def _validate(value: Any) -> Expr:
        if isinstance(value, bool) or not isinstance(value, (Expr, str, int, float)):
            raise ValueError(f"expected an expression string, got {type(value).__name__}")
        e = as_expr(value)
        extra = variables(e) - set(allowed)
        if extra:
            names = ", ".join(allowed) or "no variables"
            raise ValueError(f"'{e}' may only depend on {names}, found {', '.join(sorted(extra))}")
        return e

    return Annotated[
        Expr, PlainValidator(_validate), PlainSerializer(lambda e: str(e), return_type=str)
    ]


TExpr = _expr_field("t")
Z1Expr = _expr_field("z1")
Z2Expr = _expr_field("z2")
ZExpr = _expr_field("z1", "z2")


class _Params(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True, extra="forbid")


# ──────────────────────────
# Family parameter records
# ──────────────────────────
class K2Params(_Params):
    r: TExpr = Constant(1.0)
    theta: TExpr = Constant(0.0)
    e: float = 1.0
    c: float = 0.0
    a0: float = 0.0
    t0: float = 0.0  # a(t0) = a0
    time_window: Range = (0.0, 2.0)

    @field_validator("e")
    @classmethod
    def _e_nonzero(cls, v: float) -> float:
        if v == 0:
            raise InvalidParameters("e must be nonzero")
        return v


class K3Params(_Params):
    r: TExpr = Constant(1.0)
    theta: TExpr = Constant(0.0)
    f: Z2Expr = Constant(0.0)
    a1_0: float = 0.0
    a2_0: float = 0.0
    t0: float = 0.0
    time_window: Range = (0.0, 2.0)


class AntiCRMap(_Params):
    f1: ZExpr
    f2: ZExpr


class EllipticParams(_Params):
    f: AntiCRMap
    mu: float = 1.0


class GerstnerParams(_Params):
    kappa: float = 1.0
    mu: float = 1.0

    @field_validator("kappa")
    @classmethod
    def _kappa_nonzero(cls, v: float) -> float:
        if v == 0:
            raise InvalidParameters("kappa must be nonzero")
        return v


class HyperbolicParams(_Params):
    c: float = 1.0
    f1: Z1Expr = Constant(0.0)
    f2: Z2Expr = Constant(0.0)
    # replaces c*t in the exponentials; only meant for negative controls
    exponent: Optional[TExpr] = None


class ParabolicParams(_Params):
    f1: Z1Expr = Constant(0.0)
    f2: Z1Expr = Constant(0.0)


FamilyTag = Literal["k2", "k3", "elliptic", "gerstner", "hyperbolic", "parabolic"]

PARAM_MODELS: Dict[str, type] = {
    "k2": K2Params,
    "k3": K3Params,
    "elliptic": EllipticParams,
    "gerstner": GerstnerParams,
    "hyperbolic": HyperbolicParams,
    "parabolic": ParabolicParams,
}


# ──────────────────────────
# Sampling grid
# ──────────────────────────
def _check_range(name: str, r: Range) -> None:
    if not (math.isfinite(r[0]) and math.isfinite(r[1]) and r[0] < r[1]):
        raise ValueError(f"{name} range must satisfy lo < hi, got {r}")


class GridSpec(BaseModel):
    z1: Range = (-1.0, 1.0)
    z2: Range = (-1.0, 1.0)
    n1: int = Field(21, ge=3)
    n2: int = Field(21, ge=3)
    t: Range = (0.0, 2.0)
    nt: int = Field(11, ge=3)
    det_floor: float = Field(default_factory=lambda: settings.DET_FLOOR, gt=0)

    @model_validator(mode="after")
    def _ranges(self) -> "GridSpec":
        _check_range("z1", self.z1)
        _check_range("z2", self.z2)
        _check_range("t", self.t)
        return self

    def labels(self) -> np.ndarray:
        """Label points, shape (2, n1, n2)."""
        z1 = np.linspace(*self.z1, self.n1)
        z2 = np.linspace(*self.z2, self.n2)
        return np.stack(np.meshgrid(z1, z2, indexing="ij"))

    def times(self) -> np.ndarray:
        return np.linspace(*self.t, self.nt)

    @property
    def t0(self) -> float:
        return float(self.t[0])


# ──────────────────────────
# Reports
# ──────────────────────────
class ResidualPoint(BaseModel):
    z1: Optional[float] = None
    z2: Optional[float] = None
    t: Optional[float] = None


class ResidualEntry(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    name: str
    max_abs: float
    at: Optional[ResidualPoint] = None
    tol: float
    passed: bool = Field(alias="pass")


class ResidualReport(BaseModel):
    max_excluded: ClassVar[float] = 0.1

    check: str
    entries: List[ResidualEntry] = []
    excluded_fraction: float = 0.0

    @property
    def passed(self) -> bool:
        return self.excluded_fraction <= self.max_excluded and all(e.passed for e in self.entries)

    def entry(self, name: str) -> ResidualEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def failures(self) -> List[str]:
        out = [e.name for e in self.entries if not e.passed]
        if self.excluded_fraction > self.max_excluded:
            out.append("excluded_fraction")
        return out


class VerificationSummary(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    name: Optional[str] = None
    family: str
    passed: bool = Field(alias="pass")
    reports: List[ResidualReport] = []


# ──────────────────────────
# Run configuration
# ──────────────────────────
class TrajectoryConfig(BaseModel):
    seeds: Optional[List[Tuple[float, float]]] = None
    # or a lattice x lattice grid of seeds over this label window
    z1: Optional[Range] = None
    z2: Optional[Range] = None
    lattice: int = Field(5, ge=1)
    t: Tuple[float, float] = (0.0, 2.0 * math.pi)
    samples: int = Field(201, ge=1)

    @model_validator(mode="after")
    def _seeds_or_window(self) -> "TrajectoryConfig":
        if not self.seeds and (self.z1 is None or self.z2 is None):
            raise ValueError("trajectories need either 'seeds' or both 'z1' and 'z2' windows")
        return self

    def seed_points(self) -> np.ndarray:
        """Seeds as an array of shape (n, 2)."""
        if self.seeds:
            return np.asarray(self.seeds, dtype=float)
        return calc.lattice(self.z1, self.z2, self.lattice)

    def times(self) -> np.ndarray:
        return np.linspace(self.t[0], self.t[1], self.samples)


class FieldConfig(BaseModel):
    x1: Range
    x2: Range
    n1: int = Field(15, ge=2)
    n2: int = Field(15, ge=2)
    t: float = 0.0

    @model_validator(mode="after")
    def _ranges(self) -> "FieldConfig":
        _check_range("x1", self.x1)
        _check_range("x2", self.x2)
        return self

    def points(self) -> np.ndarray:
        x1 = np.linspace(*self.x1, self.n1)
        x2 = np.linspace(*self.x2, self.n2)
        return np.stack(np.meshgrid(x1, x2, indexing="ij"))


class EulerConfig(BaseModel):
    """Eulerian check on the image of a label window at time t."""

    z1: Range
    z2: Range
    n1: int = Field(15, ge=3)
    n2: int = Field(15, ge=3)
    t: float = 0.5
    fd_x: float = Field(1e-4, gt=0)
    fd_t: float = Field(1e-4, gt=0)
    tol: float = Field(1e-4, gt=0)

    def grid(self) -> GridSpec:
        return GridSpec(z1=self.z1, z2=self.z2, n1=self.n1, n2=self.n2)


class PdeConfig(BaseModel):
    fd_step: float = Field(1e-3, gt=0)
    tol: float = Field(1e-5, gt=0)
    # optional label window replacing the main grid window
    z1: Optional[Range] = None
    z2: Optional[Range] = None

    @model_validator(mode="after")
    def _ranges(self) -> "PdeConfig":
        for name in ("z1", "z2"):
            if getattr(self, name) is not None:
                _check_range(name, getattr(self, name))
        return self

    def grid(self, base: GridSpec) -> GridSpec:
        update = {k: v for k, v in (("z1", self.z1), ("z2", self.z2)) if v is not None}
        return base.model_copy(update=update) if update else base


class OutputConfig(BaseModel):
    directory: Optional[str] = None
    formats: List[Literal["csv", "json"]] = ["csv", "json"]


class Config(BaseModel):
    name: Optional[str] = None
    family: FamilyTag
    params: Dict[str, Any] = {}
    theta0: float = 0.0
    grid: GridSpec = Field(default_factory=GridSpec)
    trajectories: Optional[TrajectoryConfig] = None
    field: Optional[FieldConfig] = None
    euler: Optional[EulerConfig] = None
    pde: Optional[PdeConfig] = None
    output: OutputConfig = Field(default_factory=OutputConfig)

    _parsed: Any = PrivateAttr(default=None)

    @model_validator(mode="after")
    def _family_params(self) -> "Config":
        self._parsed = PARAM_MODELS[self.family].model_validate(self.params)
        return self

    @property
    def family_params(self) -> Any:
        return self._parsed
