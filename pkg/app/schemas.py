# app/schemas.py
import math
from typing import Annotated, Literal, Optional

from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, field_validator, model_validator

from app.models import CurveKind, ProfileKind, ShapeKind, TwistKind
from app.services.compare import DEFAULT_EPS


class _Namespace(BaseModel):
    model_config = ConfigDict(extra="forbid")


def _float_list(value):
    if isinstance(value, str):
        return [float(v) for v in value.replace(";", ",").split(",") if v.strip()]
    return value


FloatList = Annotated[list[float], BeforeValidator(_float_list)]


# Curve Schemas
class CurveConfig(_Namespace):
    kind: CurveKind = CurveKind.line
    R: Optional[float] = Field(None, gt=0)
    a: Optional[float] = Field(None, gt=0)
    b: Optional[float] = Field(None, ge=0)
    L: float = Field(math.pi, gt=0)
    N: int = Field(512, ge=16)
    table: Optional[str] = None
    e1: Optional[FloatList] = None

    @model_validator(mode="after")
    def check_kind(self):
        if self.kind == CurveKind.circle and self.R is None:
            raise ValueError("curve.R is required for a circle")
        if self.kind == CurveKind.helix and (self.a is None or self.b is None):
            raise ValueError("curve.a and curve.b are required for a helix")
        if self.kind == CurveKind.sampled and not self.table:
            raise ValueError("curve.table is required for a sampled curve")
        if self.e1 is not None and len(self.e1) != 3:
            raise ValueError("curve.e1 takes three components")
        return self


# Fibre Schemas
class FiberConfig(_Namespace):
    shape: ShapeKind = ShapeKind.interval
    halfwidth: float = Field(1.0, gt=0)
    radius: float = Field(1.0, gt=0)
    a: Optional[float] = Field(None, gt=0)
    b: Optional[float] = Field(None, gt=0)
    offset: FloatList = Field(default_factory=lambda: [0.0, 0.0])
    centred: bool = False
    mask_file: Optional[str] = None
    mask_spacing: Optional[float] = Field(None, gt=0)
    n_grid: int = Field(128, ge=32)
    extrapolate: bool = True
    profile: ProfileKind = ProfileKind.constant
    base: float = Field(1.0, gt=0)
    amplitude: float = 0.3
    width: float = Field(1.0, gt=0)
    profile_center: Optional[float] = None

    @model_validator(mode="after")
    def check_shape(self):
        if len(self.offset) != 2:
            raise ValueError("fiber.offset takes two coordinates")
        if self.shape in (ShapeKind.ellipse, ShapeKind.rectangle) and (self.a is None or self.b is None):
            raise ValueError(f"fiber.a and fiber.b are required for a {self.shape.value}")
        if self.shape == ShapeKind.mask and not (self.mask_file and self.mask_spacing):
            raise ValueError("fiber.mask_file and fiber.mask_spacing are required for a mask")
        return self


# Twist Schemas
class TwistConfig(_Namespace):
    profile: TwistKind = TwistKind.none
    rate: float = 0.0
    x_start: Optional[float] = None
    x_end: Optional[float] = None
    smoothing: float = Field(0.1, gt=0)
    table: Optional[str] = None

    @model_validator(mode="after")
    def check_profile(self):
        if self.profile == TwistKind.window and (self.x_start is None or self.x_end is None):
            raise ValueError("twist.x_start and twist.x_end are required for a window twist")
        if self.profile == TwistKind.table and not self.table:
            raise ValueError("twist.table is required for a tabulated twist")
        return self


# Solve Schemas
class SpectrumConfig(_Namespace):
    eps: float = Field(0.1, gt=0, lt=1)
    n_eigs: int = Field(3, ge=1)
    alpha: int = Field(1, ge=1, le=2)
    include_eps3: bool = True
    m: int = Field(0, ge=0)
    nx: int = Field(400, ge=3)
    nn: int = Field(32, ge=4)


class SweepConfig(_Namespace):
    eps: FloatList = Field(default_factory=lambda: list(DEFAULT_EPS))
    nx: int = Field(400, ge=3)
    nn: int = Field(24, ge=4)
    levels: int = Field(3, ge=2)
    theory_order: Optional[float] = None
    threshold: float = 2.5
    disc_fraction: float = Field(0.1, gt=0)
    window_C: Optional[float] = Field(None, gt=0)

    @field_validator("eps")
    @classmethod
    def check_eps(cls, v):
        if len(v) < 3:
            raise ValueError("sweep.eps needs at least three values")
        if any(not 0 < e < 1 for e in v):
            raise ValueError("sweep.eps values must lie in (0, 1)")
        if len(set(v)) != len(v):
            raise ValueError("sweep.eps values must be distinct")
        return v


class OutputConfig(_Namespace):
    directory: Optional[str] = None
    format: Literal["csv"] = "csv"


# Run Schema
class RunConfig(_Namespace):
    curve: CurveConfig = Field(default_factory=CurveConfig)
    fiber: FiberConfig = Field(default_factory=FiberConfig)
    twist: TwistConfig = Field(default_factory=TwistConfig)
    hollow: bool = False
    spectrum: SpectrumConfig = Field(default_factory=SpectrumConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @model_validator(mode="after")
    def check_combination(self):
        if self.hollow and self.fiber.shape != ShapeKind.disc:
            raise ValueError("hollow waveguides need fiber.shape = disc")
        if self.fiber.shape == ShapeKind.interval and self.twist.profile != TwistKind.none:
            raise ValueError("an interval fibre cannot be twisted")
        return self
