"""Entropy functionals, dissipation, and inequality audits for the rescaled flow.

For the nonlinear Fokker-Planck equation theta_tau = Laplace(theta^m)
+ div(xi theta) with m = 2 - 2/d, the Lyapunov functional is

    H[theta] = 1/(m-1) int theta^m + 1/2 int |xi|^2 theta,

minimized at fixed mass by the compactly supported steady state theta_M.
The dissipation along the flow is the production functional

    I[theta] = int theta | m/(m-1) grad theta^{m-1} + xi |^2,

and the generalized logarithmic Sobolev inequality H[f | theta_M] <= I[f]/2
turns dH/dtau = -I into exponential relative-entropy decay.  This module
evaluates all of these by quadrature on radial grids, together with the
truncation bounds and exponent bookkeeping used by the higher-norm
estimates.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from .closed_forms import StationaryProfile, critical_exponent
from .fields import DensityField, RadialGrid, lp_norm, truncated_part

__all__ = [
    "entropy",
    "entropy_production",
    "minimum_entropy",
    "relative_entropy",
    "log_sobolev_slack",
    "csiszar_kullback_ratio",
    "equi_integrability_bound",
    "slicing_bound",
    "exponents",
    "EntropyReport",
    "entropy_report",
]

# Cells below this fraction of the peak are treated as vacuum when
# differentiating theta^{m-1}; their production contribution is O(floor^m).
THETA_FLOOR_FRACTION = 1e-12


def entropy(theta: DensityField, m: float) -> float:
    """H[theta] = 1/(m-1) int theta^m + 1/2 int |xi|^2 theta (needs m > 1)."""
    if m <= 1:
        raise ValueError(f"entropy requires m > 1, got m={m}")
    g = theta.grid
    internal = float(g.volumes @ theta.values**m) / (m - 1.0)
    confinement = 0.5 * float(g.volumes @ (g.centers**2 * theta.values))
    return internal + confinement


def entropy_production(theta: DensityField, m: float) -> float:
    """I[theta] = int theta |m/(m-1) grad theta^{m-1} + xi|^2.

    The pressure gradient is differenced centrally inside the support and
    one-sidedly at its edges; vacuum cells contribute nothing.
    """
    if m <= 1:
        raise ValueError(f"entropy production requires m > 1, got m={m}")
    g = theta.grid
    v = theta.values
    peak = float(v.max(initial=0.0))
    if peak == 0.0:
        return 0.0
    floor = THETA_FLOOR_FRACTION * peak
    active = v > floor
    pressure = v ** (m - 1.0)
    grad = np.zeros_like(v)
    h = g.h
    inner = active.copy()
    inner[1:] &= active[:-1]
    inner[:-1] &= active[1:]
    idx = np.where(inner)[0]
    idx = idx[(idx > 0) & (idx < g.n - 1)]
    grad[idx] = (pressure[idx + 1] - pressure[idx - 1]) / (2.0 * h)
    # One-sided differences at support edges.
    edge = active & ~inner
    for i in np.where(edge)[0]:
        if i + 1 < g.n and active[i + 1]:
            grad[i] = (pressure[i + 1] - pressure[i]) / h
        elif i >= 1 and active[i - 1]:
            grad[i] = (pressure[i] - pressure[i - 1]) / h
        else:
            grad[i] = 0.0
    velocity = m / (m - 1.0) * grad + g.centers
    return float(g.volumes @ (np.where(active, v, 0.0) * velocity**2))


@lru_cache(maxsize=64)
def _minimum_entropy_cached(M: float, d: int) -> float:
    profile = StationaryProfile(M, d)
    m = profile.m
    # Dense quadrature of the closed form on its support, independent of any
    # caller grid.
    grid = RadialGrid(d, 8192, profile.support_radius() * 1.0000001)
    theta = profile.field(grid)
    return entropy(theta, m)


def minimum_entropy(M: float, d: int) -> float:
    """H[theta_M]: the minimal entropy among mass-M densities."""
    if M <= 0:
        raise ValueError(f"mass must be positive, got {M}")
    return _minimum_entropy_cached(float(M), int(d))


def relative_entropy(theta: DensityField, M: float, mass_tol: float = 1e-6) -> float:
    """H[theta | theta_M] = H[theta] - H[theta_M] >= 0 (same mass required)."""
    d = theta.grid.d
    m = critical_exponent(d)
    actual = theta.mass
    if abs(actual - M) > mass_tol * max(M, 1.0):
        raise ValueError(
            f"mass mismatch: field carries {actual:.8g}, reference needs {M:.8g}"
        )
    return entropy(theta, m) - minimum_entropy(M, d)


def log_sobolev_slack(f: DensityField) -> tuple[float, float, float]:
    """Relative entropy, half production, and the log-Sobolev slack.

    Returns (H_rel, I/2, I/2 - H_rel); the slack is nonnegative up to
    quadrature error for every density with finite mass and second moment.
    """
    d = f.grid.d
    m = critical_exponent(d)
    h_rel = entropy(f, m) - minimum_entropy(f.mass, d)
    half_production = 0.5 * entropy_production(f, m)
    return h_rel, half_production, half_production - h_rel


def csiszar_kullback_ratio(theta: DensityField, M: float, tol: float = 1e-12) -> float:
    """||theta - theta_M||_1 / sqrt(H[theta | theta_M]).

    Bounded along families approaching theta_M; returns NaN (flagged
    indeterminate) when the relative entropy is below ``tol``.
    """
    d = theta.grid.d
    h_rel = relative_entropy(theta, M)
    if h_rel <= tol:
        return math.nan
    ref = StationaryProfile(M, d).field(theta.grid)
    l1_dist = float(theta.grid.volumes @ np.abs(theta.values - ref.values))
    return l1_dist / math.sqrt(h_rel)


def equi_integrability_bound(
    theta: DensityField, k: float, m: float
) -> tuple[float, float]:
    """Tail mass ||(theta-k)_+||_1 and its bound k^{1-m} ||theta||_m^m.

    The bound holds pointwise for m > 1, hence exactly for any quadrature.
    """
    if k <= 0:
        raise ValueError(f"truncation level must be positive, got {k}")
    if m <= 1:
        raise ValueError(f"bound requires m > 1, got m={m}")
    tail = lp_norm(truncated_part(theta, k), 1)
    bound = k ** (1.0 - m) * lp_norm(theta, m) ** m
    return tail, bound


def slicing_bound(theta: DensityField, k: float, p: float) -> tuple[float, float]:
    """LHS and RHS of ||theta||_p^p <= 2^{p-1} (||theta_k||_p^p + k^{p-1} ||theta||_1)."""
    if k < 0:
        raise ValueError(f"truncation level must be >= 0, got {k}")
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    lhs = lp_norm(theta, p) ** p
    tail = lp_norm(truncated_part(theta, k), p) ** p
    rhs = 2.0 ** (p - 1.0) * (tail + k ** (p - 1.0) * lp_norm(theta, 1))
    return lhs, rhs


def exponents(q: float, m: float, d: int) -> tuple[float, float]:
    """Higher norm exponent p and decay margin eps for a kernel in L^q.

    1/p = 1 + (m-1)/(2m) - 1/q and eps = d/q - (d-1) > 0; valid only for
    1 <= q < d/(d-1), where the dilated-kernel term decays like e^{-eps tau}.
    The resulting p always exceeds m, so the production term cannot absorb
    the norm directly and a separate truncated estimate is required.
    """
    if d < 3:
        raise ValueError(f"exponent relation needs d >= 3, got d={d}")
    expected_m = critical_exponent(d)
    if not math.isclose(m, expected_m, rel_tol=1e-9):
        raise ValueError(f"m must be 2 - 2/d = {expected_m:.6g} for d={d}, got {m}")
    q_crit = d / (d - 1.0)
    if not (1.0 <= q < q_crit):
        raise ValueError(
            f"q must satisfy 1 <= q < d/(d-1) = {q_crit:.6g}, got q={q}"
        )
    inv_p = 1.0 + (m - 1.0) / (2.0 * m) - 1.0 / q
    eps = d / q - (d - 1.0)
    return 1.0 / inv_p, eps


@dataclass(frozen=True)
class EntropyReport:
    """Entropy audit of one similarity-frame snapshot."""

    entropy: float
    production: float
    relative_entropy: float
    mass: float
    m: float
    d: int
    n: int
    r_max: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=False)


def entropy_report(theta: DensityField) -> EntropyReport:
    """Evaluate H, I and the entropy gap of a snapshot against theta_M."""
    d = theta.grid.d
    m = critical_exponent(d)
    M = theta.mass
    h = entropy(theta, m)
    return EntropyReport(
        entropy=h,
        production=entropy_production(theta, m),
        relative_entropy=h - minimum_entropy(M, d),
        mass=M,
        m=m,
        d=d,
        n=theta.grid.n,
        r_max=theta.grid.r_max,
    )
