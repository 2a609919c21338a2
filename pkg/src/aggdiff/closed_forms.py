"""Exact reference solutions and the similarity-variable machinery.

Contains the compactly supported self-similar solution of the porous medium
equation u_t = Laplace(u^m) at the mass-critical exponent m = 2 - 2/d, its
stationary image in similarity variables, radial heat and Fokker-Planck
semigroups (Gaussian convolutions reduced to one dimension through modified
Bessel factors), and the invertible change of variables between physical
densities u(t, x) and similarity profiles theta(tau, xi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .fields import (
    DensityField,
    RadialGrid,
    cell_average,
    conservative_remap,
    field_from_function,
    sphere_area,
)

__all__ = [
    "critical_exponent",
    "barenblatt_c1",
    "BarenblattProfile",
    "stationary_pressure_constant",
    "StationaryProfile",
    "heat_semigroup",
    "fokker_planck_semigroup",
    "SimilarityFrame",
    "shift_from_lambda",
]


def critical_exponent(d: int) -> float:
    """Mass-critical porous-medium exponent m = 2 - 2/d."""
    if d < 3:
        raise ValueError(f"nonlinear critical exponent needs d >= 3, got d={d}")
    return 2.0 - 2.0 / d


_GL200 = np.polynomial.legendre.leggauss(200)


def _profile_mass(amplitude: float, quad_coef: float, power: float, d: int) -> float:
    """int (amplitude - quad_coef r^2)_+^power over R^d, by Gauss quadrature.

    Uses the substitution r = R sin(t) with R the support radius, which
    removes the endpoint non-smoothness of the power for fractional powers.
    """
    if amplitude <= 0:
        return 0.0
    radius = math.sqrt(amplitude / quad_coef)
    x, w = _GL200
    t = 0.25 * math.pi * (x + 1.0)
    wt = 0.25 * math.pi * w
    r = radius * np.sin(t)
    jac = radius * np.cos(t)
    vals = (amplitude - quad_coef * r**2) ** power * r ** (d - 1) * jac
    return float(sphere_area(d) * np.sum(wt * vals))


def barenblatt_c1(M: float, d: int) -> float:
    """Normalization constant of the self-similar porous-medium solution.

    Determined so that the profile at t = 1 carries total mass M; computed
    by quadrature of the mass integral and a monotone root find.
    """
    if M <= 0:
        raise ValueError(f"mass must be positive, got {M}")
    m = critical_exponent(d)
    power = 1.0 / (m - 1.0)
    quad_coef = (m - 1.0) / (2.0 * m * d)

    def mass_of(c1: float) -> float:
        return _profile_mass(c1, quad_coef, power, d)

    # Bracket using the scaling mass(c1) ~ c1^{power + d/2}.
    c_exp = power + d / 2.0
    c_guess = (M / max(mass_of(1.0), 1e-300)) ** (1.0 / c_exp)
    lo, hi = 0.5 * c_guess, 2.0 * c_guess
    while mass_of(lo) > M:
        lo *= 0.5
    while mass_of(hi) < M:
        hi *= 2.0
    return float(
        optimize.brentq(lambda c: mass_of(c) - M, lo, hi, xtol=1e-14, rtol=1e-12)
    )


@dataclass(frozen=True)
class BarenblattProfile:
    """Self-similar spreading solution of u_t = Laplace(u^m), m = 2 - 2/d.

    U(t, x; M) = t^{-1} (C1 - ((m-1)/(2md)) (|x| t^{-1/d})^2)_+^{1/(m-1)},
    with C1 fixed by mass conservation.
    """

    M: float
    d: int

    def __post_init__(self) -> None:
        if self.M <= 0:
            raise ValueError(f"mass must be positive, got {self.M}")
        object.__setattr__(self, "_c1", barenblatt_c1(self.M, self.d))

    @property
    def m(self) -> float:
        return critical_exponent(self.d)

    @property
    def c1(self) -> float:
        return self._c1

    def support_radius(self, t: float) -> float:
        m = self.m
        return t ** (1.0 / self.d) * math.sqrt(2.0 * m * self.d * self.c1 / (m - 1.0))

    def eval(self, t: float, r) -> np.ndarray:
        if t <= 0:
            raise ValueError(f"time must be positive, got {t}")
        r = np.asarray(r, dtype=float)
        m = self.m
        quad_coef = (m - 1.0) / (2.0 * m * self.d)
        arg = self.c1 - quad_coef * (r / t ** (1.0 / self.d)) ** 2
        return np.maximum(arg, 0.0) ** (1.0 / (m - 1.0)) / t

    def field(self, grid: RadialGrid, t: float) -> DensityField:
        return field_from_function(grid, lambda r: self.eval(t, r))


def stationary_pressure_constant(M: float, d: int) -> float:
    """Pressure constant C of the mass-M steady state of the rescaled flow.

    theta_M(xi) = ((m-1)/m (C - |xi|^2/2))_+^{1/(m-1)}; C is fixed by mass M
    via quadrature and a monotone root find.
    """
    if M <= 0:
        raise ValueError(f"mass must be positive, got {M}")
    m = critical_exponent(d)
    power = 1.0 / (m - 1.0)
    scale = ((m - 1.0) / m) ** power

    def mass_of(c: float) -> float:
        return scale * _profile_mass(c, 0.5, power, d)

    c_exp = power + d / 2.0
    c_guess = (M / max(mass_of(1.0), 1e-300)) ** (1.0 / c_exp)
    lo, hi = 0.5 * c_guess, 2.0 * c_guess
    while mass_of(lo) > M:
        lo *= 0.5
    while mass_of(hi) < M:
        hi *= 2.0
    return float(
        optimize.brentq(lambda c: mass_of(c) - M, lo, hi, xtol=1e-14, rtol=1e-12)
    )


@dataclass(frozen=True)
class StationaryProfile:
    """Steady state theta_M of theta_tau = Laplace(theta^m) + div(xi theta).

    The unique mass-M minimizer of the associated entropy; its transport
    velocity m/(m-1) grad theta^{m-1} + xi vanishes identically on the
    support.
    """

    M: float
    d: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "_c", stationary_pressure_constant(self.M, self.d))

    @property
    def m(self) -> float:
        return critical_exponent(self.d)

    @property
    def pressure_constant(self) -> float:
        return self._c

    def support_radius(self) -> float:
        return math.sqrt(2.0 * self._c)

    def eval(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        m = self.m
        arg = (m - 1.0) / m * (self._c - 0.5 * xi**2)
        return np.maximum(arg, 0.0) ** (1.0 / (m - 1.0))

    def field(self, grid: RadialGrid) -> DensityField:
        return field_from_function(grid, self.eval)

    def dilated_field(self, grid: RadialGrid, scale: float) -> DensityField:
        """Mass-preserving dilation scale^{-d} theta_M(xi / scale)."""
        if scale <= 0:
            raise ValueError(f"dilation scale must be positive, got {scale}")
        return field_from_function(
            grid, lambda xi: self.eval(xi / scale) / scale**self.d
        )


# ---------------------------------------------------------------------------
# Radial Gaussian convolutions: heat and Fokker-Planck semigroups
# ---------------------------------------------------------------------------


def _radial_gaussian_apply(
    grid: RadialGrid,
    values: np.ndarray,
    variance: float,
    source_scale: float,
    harmonic: int = 0,
) -> np.ndarray:
    """Apply w(r) = int K_var(|r e1 - b s y|) w(s) s^{d-1} ds dy to a profile.

    K_var is the Gaussian kernel (4 pi a)^{-d/2} exp(-|.|^2 / (4a)) with
    a = ``variance`` and b = ``source_scale``.  The source profile is
    represented piecewise linearly (slope-limited) and the output is cell
    averaged, which keeps both mass conservation and pointwise accuracy at
    quadrature level.  ``harmonic = 1`` propagates the radial factor of a
    dipole profile phi(|x|) cos(angle); the angular integral then carries
    the modified Bessel function of order d/2 instead of d/2 - 1.
    """
    if harmonic not in (0, 1):
        raise ValueError(f"harmonic index must be 0 or 1, got {harmonic}")
    if harmonic == 1 and grid.d != 2:
        raise ValueError("harmonic propagation is only used in d = 2")
    a = variance
    b = source_scale
    d = grid.d
    nu = d / 2.0 - 1.0 + harmonic
    lo = grid.faces[:-1][:, None]
    hi = grid.faces[1:][:, None]
    gauss_nodes = np.array([-math.sqrt(3.0 / 5.0), 0.0, math.sqrt(3.0 / 5.0)])
    gauss_wts = np.array([5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
    s = (0.5 * (hi + lo) + 0.5 * (hi - lo) * gauss_nodes[None, :]).ravel()
    wts = (0.5 * (hi - lo) * gauss_wts[None, :]).ravel() * s ** (d - 1)

    # Piecewise-linear source values at the quadrature nodes, pivoted at the
    # cell volume centroids so the represented mass is exactly Sum(vol * v).
    from .fields import _volume_centroids, limited_slopes

    slopes = limited_slopes(values, grid.h)
    centroids = _volume_centroids(grid)
    node_vals = (
        np.repeat(values, 3) + np.repeat(slopes, 3) * (s - np.repeat(centroids, 3))
    )

    r = s[:, None]
    r_wts = (wts / np.repeat(grid.volumes, 3)) * sphere_area(d)
    bs = b * s[None, :]
    z = r * bs / (2.0 * a)
    # (2 pi)^{d/2} z^{1-d/2} I_nu(z) is the angular factor; ive carries
    # e^{-|z|}, which combines with the Gaussian into exp(-(r-bs)^2 / (4a)).
    if d == 2:
        bessel = special.ive(nu, z)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            bessel = special.ive(nu, z) * z ** (1.0 - d / 2.0)
        limit = 1.0 / (2.0**nu * math.gamma(nu + 1.0))
        bessel = np.where(z < 1e-12, limit, bessel)
    prefactor = (4.0 * math.pi * a) ** (-d / 2.0) * (2.0 * math.pi) ** (d / 2.0)
    kernel = prefactor * bessel * np.exp(-((r - bs) ** 2) / (4.0 * a))
    node_out = kernel @ (wts * node_vals)
    return (r_wts * node_out).reshape(grid.n, 3).sum(axis=1)


def heat_semigroup(u0: DensityField, t: float) -> DensityField:
    """Free-space heat evolution exp(t Laplace) u0 of a radial density."""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    if t == 0:
        return u0.copy()
    out = _radial_gaussian_apply(u0.grid, u0.values, variance=t, source_scale=1.0)
    return DensityField(u0.grid, np.maximum(out, 0.0))


def fokker_planck_semigroup(
    grid: RadialGrid, values: np.ndarray, tau: float, harmonic: int = 0
) -> np.ndarray:
    """Propagator of w_tau = Laplace(w) + (1/2) div(xi w) on radial profiles.

    Transforming the heat kernel into the d = 2 similarity frame yields the
    Mehler-type formula

        S(tau) w(xi) = (4 pi a)^{-d/2} int exp(-|xi - xi' e^{-tau/2}|^2/(4a))
                       w(xi') dxi',   a(tau) = 1 - exp(-tau),

    i.e. a Gaussian blur of variance a combined with a contraction of the
    source by e^{-tau/2}.  ``harmonic = 1`` propagates the radial profile of
    a dipole perturbation phi(|xi|) cos(angle), which is the slowest
    zero-mass mode and decays like e^{-tau/2}.
    """
    if grid.d != 2:
        raise ValueError(f"Fokker-Planck propagator is used in d = 2, got d={grid.d}")
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.n,):
        raise ValueError(f"profile has shape {values.shape}, expected ({grid.n},)")
    if tau == 0:
        return values.copy()
    a = 1.0 - math.exp(-tau)
    b = math.exp(-tau / 2.0)
    return _radial_gaussian_apply(
        grid, values, variance=a, source_scale=b, harmonic=harmonic
    )


# ---------------------------------------------------------------------------
# Similarity frames
# ---------------------------------------------------------------------------


def shift_from_lambda(lam: float, mode: str, d: int = 3) -> float:
    """Time shift T matching initial data spread out by a factor lambda."""
    if lam < 1:
        raise ValueError(f"lambda must be >= 1, got {lam}")
    if mode == "linear_d2":
        return lam**2 - 1.0
    if mode == "nonlinear":
        return (lam**d - 1.0) / d
    raise ValueError(f"unknown similarity mode {mode!r}")


@dataclass(frozen=True)
class SimilarityFrame:
    """Invertible change of variables (t, x, u) <-> (tau, xi, theta).

    Nonlinear mode (any d >= 2): s = d(t+T) + 1, tau = log(s)/d, xi = x/s^{1/d},
    theta = s u.  Linear mode (d = 2): s = (t+T) + 1, tau = log(s), xi = x/s^{1/2},
    theta = s u.  Both preserve mass exactly.
    """

    mode: str
    d: int
    T: float = 0.0

    def __post_init__(self) -> None:
        if self.mode not in ("linear_d2", "nonlinear"):
            raise ValueError(f"unknown similarity mode {self.mode!r}")
        if self.mode == "linear_d2" and self.d != 2:
            raise ValueError("linear_d2 similarity frame requires d = 2")
        if self.T < 0:
            raise ValueError(f"time shift must be >= 0, got {self.T}")

    @property
    def tau0(self) -> float:
        if self.mode == "nonlinear":
            return math.log(self.d * self.T + 1.0) / self.d
        return math.log(self.T + 1.0)

    def tau_of_t(self, t: float) -> float:
        if t < 0:
            raise ValueError(f"time must be >= 0, got {t}")
        if self.mode == "nonlinear":
            return math.log(self.d * (t + self.T) + 1.0) / self.d
        return math.log((t + self.T) + 1.0)

    def t_of_tau(self, tau: float) -> float:
        if tau < self.tau0 - 1e-12:
            raise ValueError(f"tau={tau} precedes the frame origin tau0={self.tau0}")
        if self.mode == "nonlinear":
            return (math.exp(self.d * tau) - 1.0) / self.d - self.T
        return math.exp(tau) - 1.0 - self.T

    def space_factor(self, tau: float) -> float:
        """x = space_factor(tau) * xi."""
        if self.mode == "nonlinear":
            return math.exp(tau)
        return math.exp(tau / 2.0)

    def density_factor(self, tau: float) -> float:
        """theta = density_factor(tau) * u."""
        if self.mode == "nonlinear":
            return math.exp(self.d * tau)
        return math.exp(tau)

    def to_similarity(
        self, u: DensityField, t: float, target_grid: RadialGrid | None = None
    ) -> tuple[DensityField, float]:
        """Rescale a physical density into the similarity frame at time t.

        Without a target grid the radii are divided by the space factor and
        no resampling occurs (the transform is then exact); with one, the
        profile is conservatively remapped.
        """
        tau = self.tau_of_t(t)
        mu = self.space_factor(tau)
        nu = self.density_factor(tau)
        native = DensityField(u.grid.scaled(1.0 / mu), nu * u.values)
        if target_grid is None:
            return native, tau
        theta, _ = conservative_remap(native, target_grid)
        return theta, tau

    def from_similarity(
        self, theta: DensityField, tau: float, target_grid: RadialGrid | None = None
    ) -> tuple[DensityField, float]:
        """Inverse of :meth:`to_similarity`."""
        t = self.t_of_tau(tau)
        mu = self.space_factor(tau)
        nu = self.density_factor(tau)
        native = DensityField(theta.grid.scaled(mu), theta.values / nu)
        if target_grid is None:
            return native, t
        u, _ = conservative_remap(native, target_grid)
        return u, t
