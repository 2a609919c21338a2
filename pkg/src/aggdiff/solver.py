"""Positivity-preserving finite-volume integration of the aggregation-diffusion flow.

The dynamics u_t + div(u grad(K*u)) = Laplace(u^m) are advanced on a uniform
radial mesh with conservative face fluxes: a two-point gradient of u^m for
the (possibly degenerate) diffusion and first-order upwinding for the drift,
combined under an explicit SSP-RK2 step with a CFL-limited time step.  In
similarity variables the same stencil integrates

    theta_tau + div(theta e^{(d-1)tau} (grad K)(e^tau .) * theta)
        = Laplace(theta^m) + div(xi theta)

(the linear d = 2 frame carries e^{tau/2} factors and a xi/2 drift instead).
No-flux conditions hold at r = 0 (zero face area) and at r = R; advective
outflow suppressed by the outer wall is accumulated and ends the run as
``domain_exhausted`` once it exceeds a configured fraction of the mass.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .closed_forms import (
    BarenblattProfile,
    SimilarityFrame,
    critical_exponent,
    fokker_planck_semigroup,
    heat_semigroup,
)
from .entropy import entropy, entropy_production, exponents, minimum_entropy
from .fields import DensityField, RadialGrid, limited_slopes
from .kernels import InteractionKernel, build_convolution

__all__ = [
    "SolverConfig",
    "DiagnosticsSeries",
    "RadialStepper",
    "SimulationResult",
    "simulate",
    "detect_blowup",
    "dissipation_residual",
]

STATUS_RUNNING = "running"
STATUS_COMPLETED = "completed"
STATUS_BLOWUP = "blowup_detected"
STATUS_EXHAUSTED = "domain_exhausted"
STATUS_MAX_STEPS = "max_steps_exceeded"


@dataclass
class SolverConfig:
    """Parameters of one time integration.

    ``variables`` selects physical time or the self-similar frame; ``shift``
    is the frame's time offset T (so similarity runs start at tau0 > 0 for
    spread-out data).  ``m`` must be 1 with d = 2 (linear diffusion) or the
    critical exponent 2 - 2/d with d >= 3.
    """

    d: int
    m: float
    t_end: float
    n: int
    r_max: float
    variables: str = "physical"
    kernel: InteractionKernel | None = None
    cfl: float = 0.4
    diag_dt: float | None = None
    snapshot_dt: float | None = None
    shift: float = 0.0
    beta: float = 2.5
    lp_exponent: float | None = None
    reference: str | None = "auto"
    peak_factor: float = 1e3
    dt_floor_ratio: float = 0.75
    blowup_window: int = 5
    domain_flux_tol: float = 1e-6
    quadrature_order: int = 64
    rebuild_dtau: float = 0.1
    advection: str = "upwind"
    max_steps: int = 50_000_000

    def __post_init__(self) -> None:
        if not (0.0 < self.cfl <= 1.0):
            raise ValueError(f"CFL number must lie in (0, 1], got {self.cfl}")
        if self.variables not in ("physical", "similarity"):
            raise ValueError(f"unknown variables choice {self.variables!r}")
        if self.advection not in ("upwind", "minmod"):
            raise ValueError(f"unknown advection scheme {self.advection!r}")
        if self.m == 1.0:
            if self.d != 2:
                raise ValueError(
                    "linear diffusion (m = 1) is supported only in d = 2; "
                    "nonlinear runs need m = 2 - 2/d with d >= 3"
                )
        else:
            expected = 2.0 - 2.0 / self.d
            if self.d < 3 or not math.isclose(self.m, expected, rel_tol=1e-9):
                raise ValueError(
                    f"m must be 1 (d = 2) or 2 - 2/d = {expected:.6g} (d = {self.d}); "
                    f"got m = {self.m}"
                )
        if self.kernel is not None and self.kernel.d != self.d:
            raise ValueError(
                f"kernel dimension {self.kernel.d} != solver dimension {self.d}"
            )
        if self.t_end <= self.t_start:
            raise ValueError(
                f"t_end = {self.t_end} does not exceed the start time {self.t_start}"
            )
        if self.shift < 0:
            raise ValueError(f"time shift must be >= 0, got {self.shift}")
        if self.diag_dt is None:
            self.diag_dt = (self.t_end - self.t_start) / 200.0
        if self.reference == "auto":
            self.reference = "heat" if self.m == 1.0 else "barenblatt"
        if self.lp_exponent is None:
            if self.m > 1.0:
                self.lp_exponent = exponents(1.0, self.m, self.d)[0]
            else:
                self.lp_exponent = 2.0

    @property
    def similarity_mode(self) -> str:
        return "linear_d2" if self.m == 1.0 else "nonlinear"

    @property
    def frame(self) -> SimilarityFrame:
        return SimilarityFrame(self.similarity_mode, self.d, self.shift)

    @property
    def t_start(self) -> float:
        if self.variables == "similarity":
            return self.frame.tau0
        return 0.0

    def grid(self) -> RadialGrid:
        return RadialGrid(self.d, self.n, self.r_max)


@dataclass
class DiagnosticsSeries:
    """Per-sample scalar diagnostics of one run, exportable as JSON lines."""

    meta: dict
    records: list[dict] = field(default_factory=list)
    status: str = STATUS_RUNNING

    def column(self, name: str) -> np.ndarray:
        return np.array([rec.get(name, math.nan) for rec in self.records], dtype=float)

    def to_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec, sort_keys=False) + "\n")

    @staticmethod
    def from_jsonl(path, meta: dict | None = None) -> "DiagnosticsSeries":
        records = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    records.append(json.loads(line))
        return DiagnosticsSeries(meta=meta or {}, records=records, status="loaded")


class _AttractionCache:
    """Kernel velocity with cached operator rebuilds along similarity time.

    The dilated kernel varies slowly in tau, so the operator is rebuilt only
    every ``rebuild_dtau``; the exponential prefactor is applied exactly at
    the current time.
    """

    def __init__(self, config: SolverConfig, grid: RadialGrid):
        self.config = config
        self.grid = grid
        self.built_at: float | None = None
        self.op = None

    def _dilation(self, time: float) -> float:
        if self.config.variables != "similarity":
            return 1.0
        if self.config.m == 1.0:
            return math.exp(time / 2.0)
        return math.exp(time)

    def _prefactor(self, time: float) -> float:
        if self.config.variables != "similarity":
            return 1.0
        if self.config.m == 1.0:
            return math.exp(time / 2.0)
        return math.exp((self.config.d - 1) * time)

    def _operator(self, time: float):
        cfg = self.config
        needs_rebuild = self.op is None or (
            cfg.variables == "similarity"
            and time - self.built_at >= cfg.rebuild_dtau - 1e-12
        )
        if needs_rebuild:
            self.op = build_convolution(
                cfg.kernel,
                self.grid,
                quadrature_order=cfg.quadrature_order,
                dilation=self._dilation(time),
            )
            self.built_at = time
        return self.op

    def velocity(self, values: np.ndarray, time: float) -> np.ndarray:
        if self.config.kernel is None:
            return np.zeros_like(values)
        return self._prefactor(time) * self._operator(time).apply(values)

    def face_velocity(self, values: np.ndarray, time: float):
        """(interior-face velocities, outer-face velocity) from the kernel."""
        if self.config.kernel is None:
            return np.zeros(self.grid.n - 1), 0.0
        pref = self._prefactor(time)
        op = self._operator(time)
        if op.exact_newtonian:
            faces = op.apply_at_faces(values)
            outer = float(op.apply(values)[-1])
        else:
            w = op.apply(values)
            faces = 0.5 * (w[:-1] + w[1:])
            outer = float(w[-1])
        return pref * faces, pref * outer


class RadialStepper:
    """Explicit conservative update on one grid; state is a plain value array."""

    def __init__(self, config: SolverConfig, grid: RadialGrid | None = None):
        self.config = config
        self.grid = grid if grid is not None else config.grid()
        if self.grid.d != config.d:
            raise ValueError("grid dimension does not match the solver configuration")
        self.attraction = _AttractionCache(config, self.grid)
        g = self.grid
        self._face_r = g.faces[1:-1]
        self._area_in = g.face_areas[1:-1]
        if config.variables == "similarity":
            self._drift = -self._face_r if config.m > 1.0 else -0.5 * self._face_r
            self._drift_out = -g.r_max if config.m > 1.0 else -0.5 * g.r_max
        else:
            self._drift = np.zeros_like(self._face_r)
            self._drift_out = 0.0

    def _velocities(
        self, values: np.ndarray, time: float, w=None
    ) -> tuple[np.ndarray, float]:
        """Interior-face and outer-face advective velocities."""
        if w is None:
            w = self.attraction.face_velocity(values, time)
        att_faces, att_outer = w
        return att_faces + self._drift, att_outer + self._drift_out

    def face_velocity(self, values: np.ndarray, time: float) -> np.ndarray:
        """Total advective velocity at the n-1 interior faces."""
        return self._velocities(values, time)[0]

    def cfl_dt(self, values: np.ndarray, time: float, w=None) -> float:
        """CFL-limited step: min over faces of h^2 / (2d D + h |v|)."""
        cfg = self.config
        h = self.grid.h
        if cfg.m == 1.0:
            d_face = np.ones_like(self._face_r)
        else:
            p = values ** (cfg.m - 1.0)
            d_face = 0.5 * cfg.m * (p[:-1] + p[1:])
        v = np.abs(self._velocities(values, time, w)[0])
        denom = 2.0 * cfg.d * d_face + h * v + 1e-30
        return cfg.cfl * float(np.min(h**2 / denom))

    def _upwind_states(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Left/right states at interior faces (first order or minmod MUSCL)."""
        if self.config.advection == "minmod":
            slopes = limited_slopes(values, self.grid.h)
            half = 0.5 * self.grid.h
            return values[:-1] + half * slopes[:-1], values[1:] - half * slopes[1:]
        return values[:-1], values[1:]

    def _flux_divergence(self, values: np.ndarray, time: float, w=None):
        """Return (du/dt, suppressed outer advective outflow rate)."""
        cfg = self.config
        g = self.grid
        h = g.h
        um = values if cfg.m == 1.0 else values**cfg.m
        v, v_out = self._velocities(values, time, w)
        left, right = self._upwind_states(values)
        phi = np.where(v > 0.0, left, right) * v - (um[1:] - um[:-1]) / h
        flux = np.zeros(g.n + 1)
        flux[1:-1] = self._area_in * phi
        div = (flux[:-1] - flux[1:]) / g.volumes
        blocked = g.face_areas[-1] * max(v_out, 0.0) * values[-1]
        return div, blocked

    def step(self, values: np.ndarray, time: float, dt: float, w0=None):
        """SSP-RK2 update; returns (new values, clipped mass, blocked outflow).

        ``w0`` optionally reuses face velocities already evaluated at
        (values, time), e.g. the ones behind the CFL choice of ``dt``.
        """
        g = self.grid
        rhs1, out1 = self._flux_divergence(values, time, w0)
        u1 = values + dt * rhs1
        neg1 = np.minimum(u1, 0.0)
        u1 -= neg1
        rhs2, out2 = self._flux_divergence(u1, time + dt)
        u2 = 0.5 * (values + u1 + dt * rhs2)
        neg2 = np.minimum(u2, 0.0)
        u2 -= neg2
        clipped = -float(g.volumes @ (neg1 + neg2))
        blocked = dt * 0.5 * (out1 + out2)
        return u2, clipped, blocked


@dataclass
class SimulationResult:
    status: str
    series: DiagnosticsSeries
    snapshots: list[tuple[float, DensityField]]
    final: DensityField
    config: SolverConfig


def _similarity_view(
    config: SolverConfig, u: np.ndarray, grid: RadialGrid, t: float
) -> DensityField:
    """State as a similarity-frame profile (exact scaling, no resampling)."""
    if config.variables == "similarity":
        return DensityField(grid, u)
    frame = config.frame
    tau = frame.tau_of_t(t)
    mu = frame.space_factor(tau)
    nu = frame.density_factor(tau)
    return DensityField(grid.scaled(1.0 / mu), nu * u)


def _reference_distance(
    config: SolverConfig,
    grid: RadialGrid,
    u: np.ndarray,
    time: float,
    initial: DensityField,
    mass0: float,
) -> float:
    """L1 distance to the configured reference solution (frame invariant)."""
    ref = config.reference
    if ref in (None, "none"):
        return math.nan
    if ref == "heat":
        if config.variables == "similarity":
            evolved = fokker_planck_semigroup(
                grid, initial.values, time - config.t_start
            )
            return float(grid.volumes @ np.abs(u - evolved))
        evolved = heat_semigroup(initial, time) if time > 0 else initial
        return float(grid.volumes @ np.abs(u - evolved.values))
    if ref == "barenblatt":
        profile = BarenblattProfile(mass0, config.d)
        if config.variables == "similarity":
            frame = config.frame
            t_phys = frame.t_of_tau(time)
            if t_phys <= 1e-9:
                return math.nan
            mu = frame.space_factor(time)
            nu = frame.density_factor(time)
            pulled = nu * profile.eval(t_phys, mu * grid.centers)
            return float(grid.volumes @ np.abs(u - pulled))
        if time <= 1e-9:
            return math.nan
        return float(grid.volumes @ np.abs(u - profile.eval(time, grid.centers)))
    raise ValueError(f"unknown reference choice {ref!r}")


def _record_sample(
    config: SolverConfig,
    grid: RadialGrid,
    u: np.ndarray,
    time: float,
    dt: float,
    clipped: float,
    blocked: float,
    initial: DensityField,
    mass0: float,
) -> dict:
    g = grid
    rec: dict = {}
    if config.variables == "similarity":
        frame = config.frame
        rec["tau"] = time
        rec["t"] = frame.t_of_tau(time)
        nu = frame.density_factor(time)
    else:
        rec["t"] = time
        nu = 1.0
    rec["dt"] = dt
    rec["mass"] = float(g.volumes @ u)
    linf = float(u.max(initial=0.0))
    rec["linf"] = linf
    rec["linf_phys"] = linf / nu
    p = config.lp_exponent
    rec["lp"] = float((g.volumes @ u**p) ** (1.0 / p))
    rec["lp_exponent"] = p
    w = (1.0 + g.centers**2) ** (2.0 * config.beta)
    rec["l2beta"] = float(math.sqrt(g.volumes @ (w * u**2)))
    rec["second_moment"] = float(g.volumes @ (g.centers**2 * u))
    rec["clipped_mass"] = clipped
    rec["blocked_outflow"] = blocked
    outer = g.centers >= 0.98 * g.r_max
    rec["boundary_mass"] = float(g.volumes[outer] @ u[outer])
    if config.m > 1.0:
        theta = _similarity_view(config, u, grid, rec["t"])
        h_val = entropy(theta, config.m)
        rec["entropy"] = h_val
        rec["entropy_production"] = entropy_production(theta, config.m)
        rec["h_rel"] = h_val - minimum_entropy(mass0, config.d)
    rec["l1_ref"] = _reference_distance(config, grid, u, time, initial, mass0)
    return rec


def detect_blowup(
    series: DiagnosticsSeries, peak0: float, dt0: float, config: SolverConfig
) -> bool:
    """Concentration classifier: peak growth, collapsing dt, shrinking spread.

    All three signals are required, to avoid labelling transients: the
    native-frame peak must exceed ``peak_factor`` times its initial value,
    the step size must have fallen below ``dt_floor_ratio`` of its initial
    value, and the second moment must be decreasing across the trailing
    window.
    """
    recs = series.records
    w = config.blowup_window
    if len(recs) <= w:
        return False
    last = recs[-1]
    if last["linf"] < config.peak_factor * max(peak0, 1e-300):
        return False
    if last["dt"] > config.dt_floor_ratio * dt0:
        return False
    return last["second_moment"] < recs[-1 - w]["second_moment"]


def simulate(config: SolverConfig, u0: DensityField) -> SimulationResult:
    """Integrate to ``t_end`` or a terminal classification, with diagnostics.

    ``u0`` is the physical density (physical mode) or the similarity profile
    at tau0 (similarity mode).  Samples are recorded every ``diag_dt``; the
    step lands exactly on sample times, so identical configurations produce
    identical series.
    """
    grid = config.grid()
    if u0.grid != grid:
        raise ValueError(
            f"initial data lives on {u0.grid}, but the configuration requires {grid}"
        )
    stepper = RadialStepper(config, grid)
    u = u0.values.copy()
    time = config.t_start
    mass0 = u0.mass
    initial = u0.copy()
    series = DiagnosticsSeries(
        meta={
            "d": config.d,
            "m": config.m,
            "n": config.n,
            "r_max": config.r_max,
            "variables": config.variables,
            "kernel": config.kernel.family if config.kernel else None,
            "shift": config.shift,
            "t_start": config.t_start,
            "t_end": config.t_end,
            "reference": config.reference,
        }
    )
    snapshots: list[tuple[float, DensityField]] = [(time, u0.copy())]
    dt0 = stepper.cfl_dt(u, time)
    series.records.append(
        _record_sample(config, grid, u, time, dt0, 0.0, 0.0, initial, mass0)
    )
    peak0 = series.records[0]["linf"]

    clipped_total = 0.0
    blocked_total = 0.0
    next_sample = time + config.diag_dt
    next_snapshot = (
        time + config.snapshot_dt if config.snapshot_dt is not None else math.inf
    )
    status = STATUS_RUNNING
    steps = 0
    dt_last = dt0
    while time < config.t_end - 1e-14:
        w = stepper.attraction.face_velocity(u, time)
        dt = stepper.cfl_dt(u, time, w)
        dt_last = dt
        target = min(next_sample, next_snapshot, config.t_end)
        dt = min(dt, target - time)
        if dt <= 0:
            dt = 1e-16
        u, clipped, blocked = stepper.step(u, time, dt, w0=w)
        clipped_total += clipped
        blocked_total += blocked
        time += dt
        steps += 1
        if time >= next_snapshot - 1e-12:
            snapshots.append((time, DensityField(grid, u.copy())))
            next_snapshot += config.snapshot_dt
        if time >= next_sample - 1e-12 or time >= config.t_end - 1e-14:
            series.records.append(
                _record_sample(
                    config, grid, u, time, dt_last, clipped_total, blocked_total,
                    initial, mass0,
                )
            )
            while next_sample <= time + 1e-12:
                next_sample += config.diag_dt
            if detect_blowup(series, peak0, dt0, config):
                status = STATUS_BLOWUP
                break
            if blocked_total > config.domain_flux_tol * mass0:
                status = STATUS_EXHAUSTED
                break
        if steps >= config.max_steps:
            status = STATUS_MAX_STEPS
            break
    if status == STATUS_RUNNING:
        status = STATUS_COMPLETED
    series.status = status
    final = DensityField(grid, u)
    if not snapshots or snapshots[-1][0] < time - 1e-12:
        snapshots.append((time, final.copy()))
    return SimulationResult(status, series, snapshots, final, config)


def dissipation_residual(series: DiagnosticsSeries) -> float:
    """max over samples of |dH_rel/dtau + I| / (1 + I) along a diffusion run.

    The entropy identity dH/dtau = -I holds only for the kernel-free
    similarity flow; other runs are rejected.  The derivative is a centered
    difference over the recorded samples, so the residual carries O(h) space
    and O(dtau^2) sampling error.
    """
    meta = series.meta
    if meta.get("kernel") is not None:
        raise ValueError("entropy dissipation identity requires a kernel-free run")
    if meta.get("variables") != "similarity" or meta.get("m", 1.0) <= 1.0:
        raise ValueError(
            "entropy dissipation residual is defined for nonlinear similarity runs"
        )
    tau = series.column("tau")
    h_rel = series.column("h_rel")
    prod = series.column("entropy_production")
    if len(tau) < 3:
        raise ValueError("need at least three samples for the centered difference")
    dh = (h_rel[2:] - h_rel[:-2]) / (tau[2:] - tau[:-2])
    mid = prod[1:-1]
    return float(np.max(np.abs(dh + mid) / (1.0 + mid)))
