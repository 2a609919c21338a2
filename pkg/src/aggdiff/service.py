"""HTTP API wrapping the simulation laboratory.

Endpoints mirror the CLI surface: scenario execution (with artifact output
on the server's filesystem), rate fitting, entropy audits of snapshots, and
kernel gradient-norm queries.  Long simulations run synchronously inside the
request, which matches the single-operator lab deployment this serves.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, HTTPException

from . import __version__
from .configfile import ConfigError
from .entropy import entropy_report
from .fields import DensityField, RadialGrid
from .kernels import lq_gradient_norm
from .scenarios import (
    InitialSpec,
    ScenarioConfig,
    fit_exponential_rate,
    fit_rate,
    kernel_from_spec,
    run_scenario,
)
from .schemas import (
    EntropyAuditRequest,
    EntropyAuditResponse,
    FitRequest,
    FitResponse,
    GradientNormRequest,
    GradientNormResponse,
    HealthResponse,
    RunReport,
    ScenarioModel,
    ScenarioResponse,
    SweepReport,
)
from .solver import STATUS_BLOWUP, SolverConfig

app = FastAPI(
    title="aggdiff laboratory",
    description="Radial aggregation-diffusion simulations, sweeps, and audits",
    version=__version__,
)


def _scenario_from_model(model: ScenarioModel) -> ScenarioConfig:
    solver_fields = model.solver.model_dump()
    kernel_model = solver_fields.pop("kernel")
    kernel = kernel_from_spec(
        kernel_model and {k: v for k, v in kernel_model.items() if v is not None},
        model.solver.d,
    )
    solver = SolverConfig(kernel=kernel, **solver_fields)
    return ScenarioConfig(
        name=model.name,
        solver=solver,
        initial=InitialSpec(**model.initial.model_dump()),
        lambdas=list(model.lambdas),
        output_dir=model.output_dir,
        fit_series=model.fit_series,
        fit_window=model.fit_window,
        spreading_threshold=model.spreading_threshold,
        workers=model.workers,
    )


def _scenario_response(summary: dict) -> ScenarioResponse:
    runs = [
        RunReport(
            lam=entry["lambda"],
            status=entry["status"],
            classification=entry["classification"],
            fits=entry["fits"],
            samples=entry["samples"],
            directory=entry.get("directory"),
        )
        for entry in summary["runs"].values()
    ]
    statuses = [r.status for r in runs]
    overall = STATUS_BLOWUP if any(s == STATUS_BLOWUP for s in statuses) else "completed"
    if any(s not in ("completed", STATUS_BLOWUP) for s in statuses):
        overall = "mixed"
    sweep = summary["sweep"]
    return ScenarioResponse(
        scenario=summary["scenario"],
        status=overall,
        runs=runs,
        sweep=SweepReport(
            lambdas=sweep["lambdas"],
            classifications=sweep["classifications"],
            bracket=sweep["bracket"],
            hint=sweep["hint"],
            statuses=sweep["statuses"],
        ),
        output_dir=summary["solver"].get("output_dir") or summary.get("output_dir"),
    )


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


@app.post("/simulate", response_model=ScenarioResponse)
def simulate_endpoint(model: ScenarioModel) -> ScenarioResponse:
    """Run a scenario (every listed lambda) and write artifacts server-side."""
    try:
        scenario = _scenario_from_model(model)
        summary = run_scenario(scenario)
    except (ConfigError, ValueError) as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    resp = _scenario_response(summary)
    resp.output_dir = model.output_dir
    return resp


@app.post("/sweep", response_model=ScenarioResponse)
def sweep_endpoint(model: ScenarioModel) -> ScenarioResponse:
    """Alias of /simulate that requires at least two lambda values."""
    if len(model.lambdas) < 2:
        raise HTTPException(
            status_code=422, detail="a sweep needs at least two lambda values"
        )
    return simulate_endpoint(model)


@app.post("/fit", response_model=FitResponse)
def fit_endpoint(req: FitRequest) -> FitResponse:
    try:
        fitter = fit_rate if req.kind == "power" else fit_exponential_rate
        fit = fitter(np.asarray(req.t), np.asarray(req.y), req.window)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    return FitResponse(**fit.as_dict() | {"window": tuple(fit.window)})


@app.post("/entropy-audit", response_model=EntropyAuditResponse)
def entropy_audit_endpoint(req: EntropyAuditRequest) -> EntropyAuditResponse:
    r = np.asarray(req.r, dtype=float)
    u = np.asarray(req.u, dtype=float)
    try:
        h = float(r[1] - r[0])
        if h <= 0 or not np.allclose(np.diff(r), h, rtol=1e-8, atol=1e-12):
            raise ValueError("snapshot radii must form a uniform mesh")
        grid = RadialGrid(req.d, len(r), float(r[-1] + 0.5 * h))
        field = DensityField(grid, u)
        report = entropy_report(field)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    return EntropyAuditResponse(
        entropy=report.entropy,
        production=report.production,
        relative_entropy=report.relative_entropy,
        mass=report.mass,
        m=report.m,
        d=report.d,
        n=report.n,
        r_max=report.r_max,
    )


@app.post("/gradient-norm", response_model=GradientNormResponse)
def gradient_norm_endpoint(req: GradientNormRequest) -> GradientNormResponse:
    try:
        kernel = kernel_from_spec(req.kernel.as_spec(), req.d)
        value = lq_gradient_norm(kernel, req.q)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    return GradientNormResponse.from_value(value)
