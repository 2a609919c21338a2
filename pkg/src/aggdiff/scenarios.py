"""Scenario runner, lambda-threshold sweeps, rate fitting, and export.

A scenario bundles a solver configuration with an initial profile, a list of
dilation factors lambda, and fit windows.  Each lambda spreads the same base
profile out by u0 = lambda^{-d} f(./lambda) (physical runs) or, equivalently,
starts the similarity frame at the matching time shift T(lambda) with
theta(tau0) = f.  Runs are classified as spreading, blow-up, or
inconclusive, and the sweep reports the empirical bracket around the
spreading threshold.
"""

from __future__ import annotations

import concurrent.futures
import json
import logging
import math
import time as _walltime
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from . import kernels as _kernels
from .closed_forms import (
    BarenblattProfile,
    StationaryProfile,
    critical_exponent,
    shift_from_lambda,
)
from .fields import (
    DensityField,
    RadialGrid,
    field_from_function,
    load_density_csv,
    rescale_initial,
    save_density_csv,
)
from .solver import (
    STATUS_BLOWUP,
    STATUS_COMPLETED,
    DiagnosticsSeries,
    SolverConfig,
    simulate,
)

logger = logging.getLogger(__name__)

__all__ = [
    "InitialSpec",
    "ScenarioConfig",
    "FitResult",
    "fit_rate",
    "fit_exponential_rate",
    "RunResult",
    "run_single",
    "run_scenario",
    "SweepResult",
    "lambda_sweep",
    "classify_run",
    "build_initial_field",
    "kernel_from_spec",
    "export_series_csv",
    "load_series_csv",
]

CLASS_SPREADING = "global_spreading"
CLASS_BLOWUP = "blowup"
CLASS_INCONCLUSIVE = "inconclusive"


# ---------------------------------------------------------------------------
# Rate fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    exponent: float
    r_squared: float
    stderr: float
    n_samples: int
    window: tuple[float, float]

    def as_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "r_squared": self.r_squared,
            "stderr": self.stderr,
            "n_samples": self.n_samples,
            "window": list(self.window),
        }


def _windowed(t: np.ndarray, y: np.ndarray, window: tuple[float, float]):
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    lo, hi = window
    if not (hi > lo):
        raise ValueError(f"fit window must satisfy lo < hi, got [{lo}, {hi}]")
    sel = (t >= lo) & (t <= hi) & np.isfinite(y) & np.isfinite(t)
    return t[sel], y[sel]


def fit_rate(
    t: np.ndarray, y: np.ndarray, window: tuple[float, float]
) -> FitResult:
    """Least-squares power-law exponent of y ~ t^p over the window.

    The slope of log y against log t; invariant under y -> c y.  Requires at
    least 10 strictly positive samples inside the window.
    """
    ts, ys = _windowed(t, y, window)
    if len(ts) < 10:
        raise ValueError(
            f"need >= 10 samples in the fit window [{window[0]}, {window[1]}], "
            f"got {len(ts)}"
        )
    if np.any(ys <= 0) or np.any(ts <= 0):
        raise ValueError("power-law fit requires strictly positive samples")
    res = stats.linregress(np.log(ts), np.log(ys))
    return FitResult(
        exponent=float(res.slope),
        r_squared=float(res.rvalue**2),
        stderr=float(res.stderr),
        n_samples=len(ts),
        window=(float(window[0]), float(window[1])),
    )


def fit_exponential_rate(
    t: np.ndarray, y: np.ndarray, window: tuple[float, float]
) -> FitResult:
    """Least-squares exponential rate of y ~ e^{p t} over the window."""
    ts, ys = _windowed(t, y, window)
    if len(ts) < 5:
        raise ValueError(
            f"need >= 5 samples in the fit window [{window[0]}, {window[1]}], "
            f"got {len(ts)}"
        )
    if np.any(ys <= 0):
        raise ValueError("exponential fit requires strictly positive samples")
    res = stats.linregress(ts, np.log(ys))
    return FitResult(
        exponent=float(res.slope),
        r_squared=float(res.rvalue**2),
        stderr=float(res.stderr),
        n_samples=len(ts),
        window=(float(window[0]), float(window[1])),
    )


# ---------------------------------------------------------------------------
# Scenario configuration
# ---------------------------------------------------------------------------


def kernel_from_spec(spec: dict | None, d: int) -> _kernels.InteractionKernel | None:
    """Build a kernel from a config mapping like {family: ..., sigma: ...}."""
    if spec is None:
        return None
    spec = dict(spec)
    family = spec.pop("family", None)
    if family is None:
        raise ValueError("kernel spec needs a 'family' entry")
    try:
        if family == "newtonian":
            kern = _kernels.newtonian(d)
        elif family == "bessel":
            kern = _kernels.bessel(float(spec.pop("alpha")), d)
        elif family == "gaussian":
            kern = _kernels.gaussian(float(spec.pop("sigma")), d)
        elif family == "power_decay":
            kern = _kernels.power_decay(
                float(spec.pop("gamma")), float(spec.pop("r0", 1.0)), d
            )
        elif family == "tabulated":
            path = spec.pop("csv")
            data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
            kern = _kernels.tabulated(
                data[:, 0], data[:, 1], d, float(spec.pop("gamma_decay", math.inf))
            )
        else:
            raise ValueError(f"unknown kernel family {family!r}")
    except KeyError as exc:
        raise ValueError(f"kernel family {family!r} is missing parameter {exc}") from exc
    if spec:
        raise ValueError(f"unused kernel parameters: {sorted(spec)}")
    return kern


@dataclass
class InitialSpec:
    """Base profile f before the lambda rescaling.

    ``profile`` is one of gaussian(sigma), ball(radius), barenblatt(t0),
    stationary(dilation), or csv(path); ``mass`` rescales the profile's total
    mass except for csv input, which is taken verbatim.
    """

    profile: str = "gaussian"
    mass: float = 1.0
    sigma: float = 1.0
    radius: float = 1.0
    t0: float = 1.0
    dilation: float = 1.0
    csv: str | None = None


def build_initial_field(spec: InitialSpec, grid: RadialGrid) -> DensityField:
    d = grid.d
    if spec.profile == "gaussian":
        s2 = spec.sigma**2
        norm = spec.mass * (2.0 * math.pi * s2) ** (-d / 2.0)
        return field_from_function(grid, lambda r: norm * np.exp(-(r**2) / (2.0 * s2)))
    if spec.profile == "ball":
        from .fields import sphere_area

        vol = sphere_area(d) * spec.radius**d / d
        height = spec.mass / vol
        return field_from_function(
            grid, lambda r: np.where(r <= spec.radius, height, 0.0)
        )
    if spec.profile == "barenblatt":
        return BarenblattProfile(spec.mass, d).field(grid, spec.t0)
    if spec.profile == "stationary":
        return StationaryProfile(spec.mass, d).dilated_field(grid, spec.dilation)
    if spec.profile == "csv":
        if spec.csv is None:
            raise ValueError("initial profile 'csv' needs a file path")
        return load_density_csv(spec.csv, d)
    raise ValueError(f"unknown initial profile {spec.profile!r}")


@dataclass
class ScenarioConfig:
    """One named experiment: solver setup, initial data, lambdas, fits."""

    name: str
    solver: SolverConfig
    initial: InitialSpec = field(default_factory=InitialSpec)
    lambdas: list[float] = field(default_factory=lambda: [1.0])
    output_dir: str | None = None
    fit_series: str = "linf_phys"
    fit_window: tuple[float, float] | None = None
    spreading_threshold: float = -0.5
    workers: int = 1

    def __post_init__(self) -> None:
        if not self.lambdas:
            raise ValueError("scenario needs at least one lambda value")
        if any(lam < 1.0 for lam in self.lambdas):
            raise ValueError(f"lambda values must be >= 1, got {self.lambdas}")
        if self.fit_window is not None:
            lo, hi = self.fit_window
            if not (0 <= lo < hi):
                raise ValueError(f"fit window must satisfy 0 <= lo < hi, got {self.fit_window}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")


# ---------------------------------------------------------------------------
# Single runs
# ---------------------------------------------------------------------------


@dataclass
class RunResult:
    lam: float
    status: str
    classification: str
    series: DiagnosticsSeries
    fits: dict[str, dict]
    final: DensityField


def _default_window(t: np.ndarray) -> tuple[float, float]:
    """Last decade of simulated time (asymptotic rates exclude transients)."""
    t_max = float(np.nanmax(t))
    return (t_max / 10.0, t_max)


def classify_run(
    series: DiagnosticsSeries, threshold: float = -0.5
) -> tuple[str, FitResult | None]:
    """Label a finished run from its status and late-time sup-norm slope."""
    if series.status == STATUS_BLOWUP:
        return CLASS_BLOWUP, None
    if series.status != STATUS_COMPLETED:
        return CLASS_INCONCLUSIVE, None
    t = series.column("t")
    y = series.column("linf_phys")
    window = _default_window(t)
    try:
        fit = fit_rate(t, y, window)
    except ValueError:
        return CLASS_INCONCLUSIVE, None
    if fit.exponent <= threshold:
        return CLASS_SPREADING, fit
    return CLASS_INCONCLUSIVE, fit


def run_single(scenario: ScenarioConfig, lam: float) -> RunResult:
    """Run one lambda of a scenario and fit the requested decay rate."""
    base = scenario.solver
    grid = base.grid()
    f = build_initial_field(scenario.initial, grid)
    if base.variables == "similarity":
        mode = base.similarity_mode
        cfg = replace(base, shift=shift_from_lambda(lam, mode, base.d))
        u0 = f
    else:
        cfg = replace(base, shift=shift_from_lambda(lam, base.similarity_mode, base.d))
        u0 = rescale_initial(f, lam, mode=base.similarity_mode, target_grid=grid)
    started = _walltime.time()
    result = simulate(cfg, u0)
    logger.info(
        "run lambda=%g finished: %s in %.1fs", lam, result.status, _walltime.time() - started
    )
    classification, class_fit = classify_run(result.series, scenario.spreading_threshold)
    fits: dict[str, dict] = {}
    if class_fit is not None:
        fits["classification_linf"] = class_fit.as_dict()
    if result.status == STATUS_COMPLETED:
        t = result.series.column("t")
        y = result.series.column(scenario.fit_series)
        window = scenario.fit_window or _default_window(t)
        try:
            fits[scenario.fit_series] = fit_rate(t, y, window).as_dict()
        except ValueError as exc:
            fits[scenario.fit_series] = {"error": str(exc)}
    return RunResult(
        lam=lam,
        status=result.status,
        classification=classification,
        series=result.series,
        fits=fits,
        final=result.final,
    )


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


@dataclass
class SweepResult:
    """Per-lambda classifications and the empirical threshold bracket.

    ``bracket`` is (largest blow-up lambda, smallest spreading lambda) when
    those are adjacent tested values; an open side is None, with ``hint``
    suggesting how to widen the sweep.
    """

    lambdas: list[float]
    classifications: dict[float, str]
    bracket: tuple[float | None, float | None]
    hint: str | None
    fits: dict[float, dict]
    statuses: dict[float, str]

    def as_dict(self) -> dict:
        return {
            "lambdas": self.lambdas,
            "classifications": {str(k): v for k, v in self.classifications.items()},
            "bracket": list(self.bracket),
            "hint": self.hint,
            "fits": {str(k): v for k, v in self.fits.items()},
            "statuses": {str(k): v for k, v in self.statuses.items()},
        }


def _check_sweep_kernel(scenario: ScenarioConfig) -> None:
    """Reject kernels whose gradient has no finite L^q norm below d/(d-1)."""
    kern = scenario.solver.kernel
    if kern is None:
        return
    d = scenario.solver.d
    q_crit = d / (d - 1.0)
    probes = [1.0]
    if kern.gamma_decay < math.inf:
        q_min = d / kern.gamma_decay
        if q_min < q_crit:
            probes.append(min(0.98 * q_crit, 0.5 * (q_min + q_crit)))
    probes.append(0.95 * q_crit)
    for q in probes:
        if q < 1.0 or q >= q_crit:
            continue
        if math.isfinite(_kernels.lq_gradient_norm(kern, q)):
            return
    raise ValueError(
        f"kernel {kern.family!r} has no finite gradient L^q norm for any probed "
        f"q < d/(d-1) = {q_crit:.4g}; spread-out data is not guaranteed to give "
        "global solutions for such kernels, so the sweep is refused"
    )


def _consistent_classifications(
    lambdas: list[float], classes: dict[float, str]
) -> dict[float, str]:
    """Mark monotonicity violations (spreading below a blow-up) inconclusive."""
    out = dict(classes)
    for i, la in enumerate(lambdas):
        for lb in lambdas[i + 1 :]:
            if out.get(la) == CLASS_SPREADING and out.get(lb) == CLASS_BLOWUP:
                out[la] = CLASS_INCONCLUSIVE
                out[lb] = CLASS_INCONCLUSIVE
    return out


def _bracket(
    lambdas: list[float], classes: dict[float, str]
) -> tuple[tuple[float | None, float | None], str | None]:
    blowups = [lam for lam in lambdas if classes[lam] == CLASS_BLOWUP]
    spreads = [lam for lam in lambdas if classes[lam] == CLASS_SPREADING]
    if not spreads and not blowups:
        return (None, None), "no conclusive runs; refine the grid or widen the sweep"
    if not spreads:
        return (max(blowups), None), "all conclusive runs blew up; extend to larger lambda"
    if not blowups:
        return (None, min(spreads)), "all conclusive runs spread; extend to smaller lambda"
    lo, hi = max(blowups), min(spreads)
    i_lo, i_hi = lambdas.index(lo), lambdas.index(hi)
    if i_hi == i_lo + 1:
        return (lo, hi), None
    return (
        (lo, hi),
        "bracket endpoints are separated by inconclusive runs; refine between them",
    )


def _sweep_worker(args) -> tuple[float, RunResult]:
    scenario, lam = args
    return lam, run_single(scenario, lam)


def lambda_sweep(scenario: ScenarioConfig) -> tuple[SweepResult, dict[float, RunResult]]:
    """Classify every lambda and bracket the spreading threshold.

    Entries run in a bounded process pool (``scenario.workers``); results are
    merged by lambda after all jobs complete.
    """
    _check_sweep_kernel(scenario)
    lambdas = sorted(set(float(l) for l in scenario.lambdas))
    runs: dict[float, RunResult] = {}
    if scenario.workers > 1 and len(lambdas) > 1:
        with concurrent.futures.ProcessPoolExecutor(
            max_workers=min(scenario.workers, len(lambdas))
        ) as pool:
            for lam, run in pool.map(
                _sweep_worker, [(scenario, lam) for lam in lambdas]
            ):
                runs[lam] = run
    else:
        for lam in lambdas:
            runs[lam] = run_single(scenario, lam)
    raw = {lam: runs[lam].classification for lam in lambdas}
    classes = _consistent_classifications(lambdas, raw)
    bracket, hint = _bracket(lambdas, classes)
    result = SweepResult(
        lambdas=lambdas,
        classifications=classes,
        bracket=bracket,
        hint=hint,
        fits={lam: runs[lam].fits for lam in lambdas},
        statuses={lam: runs[lam].status for lam in lambdas},
    )
    return result, runs


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------

_SERIES_COLUMNS = [
    "t",
    "tau",
    "dt",
    "mass",
    "linf",
    "linf_phys",
    "lp",
    "lp_exponent",
    "l2beta",
    "second_moment",
    "entropy",
    "entropy_production",
    "h_rel",
    "l1_ref",
    "clipped_mass",
    "blocked_outflow",
    "boundary_mass",
]


def export_series_csv(series: DiagnosticsSeries, path) -> None:
    """Diagnostics as CSV with a stable column order and full precision."""
    cols = [c for c in _SERIES_COLUMNS if any(c in rec for rec in series.records)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for rec in series.records:
            fh.write(
                ",".join(f"{rec.get(c, math.nan):.17g}" for c in cols) + "\n"
            )


def load_series_csv(path) -> DiagnosticsSeries:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        cols = header.split(",") if header else []
        records = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            vals = [float(x) for x in line.split(",")]
            records.append(dict(zip(cols, vals)))
    return DiagnosticsSeries(meta={}, records=records, status="loaded")


def _run_dir(base: Path, lam: float) -> Path:
    return base / f"run_lambda_{lam:g}"


def run_scenario(scenario: ScenarioConfig) -> dict:
    """Execute the scenario (single run or sweep) and write all artifacts.

    Writes, under ``output_dir``: per-lambda diagnostics (JSON lines and
    CSV), initial and final snapshots, a per-run summary, and a sweep
    summary with the threshold bracket.  Everything except the wall-clock
    timestamp in the summary is deterministic for a fixed configuration.
    """
    out = Path(scenario.output_dir) if scenario.output_dir else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    sweep, runs = lambda_sweep(scenario)
    run_summaries = {}
    for lam in sweep.lambdas:
        run = runs[lam]
        entry = {
            "lambda": lam,
            "status": run.status,
            "classification": run.classification,
            "fits": run.fits,
            "samples": len(run.series.records),
        }
        if out is not None:
            rdir = _run_dir(out, lam)
            rdir.mkdir(parents=True, exist_ok=True)
            run.series.to_jsonl(rdir / "diagnostics.jsonl")
            export_series_csv(run.series, rdir / "diagnostics.csv")
            save_density_csv(run.final, rdir / "final.csv")
            entry["directory"] = str(rdir)
        run_summaries[f"{lam:g}"] = entry
    solver_echo = asdict(replace(scenario.solver, kernel=None))
    solver_echo.pop("kernel", None)
    summary = {
        "scenario": scenario.name,
        "solver": solver_echo,
        "kernel": scenario.solver.kernel.family if scenario.solver.kernel else None,
        "initial": asdict(scenario.initial),
        "runs": run_summaries,
        "sweep": sweep.as_dict(),
        "timestamp": _walltime.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    if out is not None:
        with open(out / "summary.json", "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2)
        _export_sweep_csv(sweep, out / "sweep.csv")
    return summary


def _export_sweep_csv(sweep: SweepResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("lambda,classification,status,fit_exponent\n")
        for lam in sweep.lambdas:
            fit = sweep.fits.get(lam, {})
            exp = math.nan
            for key in ("classification_linf",):
                if key in fit and "exponent" in fit[key]:
                    exp = fit[key]["exponent"]
            fh.write(
                f"{lam:.17g},{sweep.classifications[lam]},{sweep.statuses[lam]},{exp:.17g}\n"
            )
