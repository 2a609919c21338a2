"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

import math
from typing import Literal

from pydantic import BaseModel, Field, model_validator


class KernelModel(BaseModel):
    family: Literal["newtonian", "bessel", "gaussian", "power_decay", "tabulated"]
    alpha: float | None = Field(default=None, gt=0)
    sigma: float | None = Field(default=None, gt=0)
    gamma: float | None = Field(default=None, gt=0)
    r0: float | None = Field(default=None, gt=0)
    csv: str | None = None
    gamma_decay: float | None = None

    def as_spec(self) -> dict:
        return {k: v for k, v in self.model_dump().items() if v is not None}


class InitialModel(BaseModel):
    profile: Literal["gaussian", "ball", "barenblatt", "stationary", "csv"] = "gaussian"
    mass: float = Field(default=1.0, gt=0)
    sigma: float = Field(default=1.0, gt=0)
    radius: float = Field(default=1.0, gt=0)
    t0: float = Field(default=1.0, gt=0)
    dilation: float = Field(default=1.0, gt=0)
    csv: str | None = None


class SolverModel(BaseModel):
    d: int = Field(ge=2)
    m: float = Field(gt=0)
    t_end: float = Field(gt=0)
    n: int = Field(ge=4, le=8192)
    r_max: float = Field(gt=0)
    variables: Literal["physical", "similarity"] = "physical"
    kernel: KernelModel | None = None
    cfl: float = Field(default=0.4, gt=0, le=1)
    diag_dt: float | None = Field(default=None, gt=0)
    snapshot_dt: float | None = Field(default=None, gt=0)
    beta: float = Field(default=2.5, ge=0)
    reference: str | None = "auto"
    peak_factor: float = Field(default=1e3, gt=1)
    dt_floor_ratio: float = Field(default=0.75, gt=0, le=1)
    domain_flux_tol: float = Field(default=1e-6, gt=0)
    quadrature_order: int = Field(default=64, ge=8)
    rebuild_dtau: float = Field(default=0.1, gt=0)
    advection: Literal["upwind", "minmod"] = "upwind"


class ScenarioModel(BaseModel):
    name: str = "scenario"
    solver: SolverModel
    initial: InitialModel = InitialModel()
    lambdas: list[float] = Field(default_factory=lambda: [1.0], min_length=1)
    output_dir: str | None = None
    fit_series: str = "linf_phys"
    fit_window: tuple[float, float] | None = None
    spreading_threshold: float = -0.5
    workers: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _lambdas_at_least_one(self):
        if any(lam < 1.0 for lam in self.lambdas):
            raise ValueError("lambda values must be >= 1")
        return self


class RunReport(BaseModel):
    lam: float = Field(alias="lambda")
    status: str
    classification: str
    fits: dict
    samples: int
    directory: str | None = None

    model_config = {"populate_by_name": True}


class SweepReport(BaseModel):
    lambdas: list[float]
    classifications: dict[str, str]
    bracket: list[float | None]
    hint: str | None
    statuses: dict[str, str]


class ScenarioResponse(BaseModel):
    scenario: str
    status: str
    runs: list[RunReport]
    sweep: SweepReport
    output_dir: str | None


class FitRequest(BaseModel):
    t: list[float] = Field(min_length=2)
    y: list[float] = Field(min_length=2)
    window: tuple[float, float]
    kind: Literal["power", "exponential"] = "power"

    @model_validator(mode="after")
    def _same_length(self):
        if len(self.t) != len(self.y):
            raise ValueError("t and y must have the same length")
        return self


class FitResponse(BaseModel):
    exponent: float
    r_squared: float
    stderr: float
    n_samples: int
    window: tuple[float, float]


class EntropyAuditRequest(BaseModel):
    r: list[float] = Field(min_length=4)
    u: list[float] = Field(min_length=4)
    d: int = Field(ge=3)

    @model_validator(mode="after")
    def _same_length(self):
        if len(self.r) != len(self.u):
            raise ValueError("r and u must have the same length")
        return self


class EntropyAuditResponse(BaseModel):
    entropy: float
    production: float
    relative_entropy: float
    mass: float
    m: float
    d: int
    n: int
    r_max: float


class GradientNormRequest(BaseModel):
    kernel: KernelModel
    d: int = Field(ge=2)
    q: float = Field(ge=1)


class GradientNormResponse(BaseModel):
    norm: float | None
    divergent: bool

    @staticmethod
    def from_value(value: float) -> "GradientNormResponse":
        if math.isinf(value):
            return GradientNormResponse(norm=None, divergent=True)
        return GradientNormResponse(norm=value, divergent=False)


class HealthResponse(BaseModel):
    status: str
    version: str
