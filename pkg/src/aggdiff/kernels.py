"""Interaction potentials and the radial nonlocal attraction operator.

A kernel is a radial potential K(x) = k(|x|) whose gradient drives the
attraction velocity grad(K * u).  For radial densities the full convolution
collapses to a one-dimensional integral against the pair function

    G(r, s) = int_{S^{d-1}} k'(|r e1 - s y|) (r - s y1)/|r e1 - s y| dy,

so that the radial velocity is w(r) = int u(s) s^{d-1} G(r, s) ds.  In d = 3
the angular integral has the closed form

    G(r, s) = (pi / (r^2 s)) * [K2(b) - K2(a) + (r^2 - s^2)(K0(b) - K0(a))],

with a = |r - s|, b = r + s, K0 an antiderivative of k' and K2 of t^2 k'(t);
all built-in families carry those antiderivatives, so the d = 3 operator has
no angular quadrature error at all.  In d = 2 the integral is evaluated by
Gauss-Chebyshev quadrature after splitting off the 1/rho Newtonian-type
singularity, which is integrated in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .fields import DensityField, RadialGrid, sphere_area

__all__ = [
    "InteractionKernel",
    "newtonian",
    "bessel",
    "gaussian",
    "power_decay",
    "tabulated",
    "eval_gradient",
    "lq_gradient_norm",
    "AdmissibilityReport",
    "admissibility_probe",
    "RadialConvolutionOperator",
    "build_convolution",
    "attraction_velocity",
]

_SINGULAR_FAMILIES = ("newtonian", "bessel")


@dataclass(frozen=True)
class InteractionKernel:
    """Radial interaction potential with decay metadata.

    ``gamma_decay`` is an exponent gamma with |grad K(x)| <~ |x|^{-gamma}
    at infinity; ``math.inf`` marks faster-than-any-power decay.  All
    built-ins are attractive: k'(r) <= 0, so the induced radial velocity is
    negative (inward) for centrally peaked densities.
    """

    family: str
    d: int
    alpha: float = 0.0
    sigma: float = 0.0
    gamma: float = 0.0
    r0: float = 0.0
    table_r: np.ndarray | None = field(default=None, repr=False)
    table_kprime: np.ndarray | None = field(default=None, repr=False)
    table_k0: np.ndarray | None = field(default=None, repr=False)
    table_k2: np.ndarray | None = field(default=None, repr=False)
    gamma_decay: float = math.inf

    @property
    def singular_at_origin(self) -> bool:
        return self.family in _SINGULAR_FAMILIES

    def gradient(self, r) -> np.ndarray:
        """Radial derivative k'(r) for r > 0 (vectorized).

        Tabulated kernels raise outside their sample range; use
        :meth:`gradient_clamped` where endpoint clamping is acceptable.
        """
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValueError("radius must be nonnegative")
        if np.any(r == 0) and self.singular_at_origin:
            raise ValueError(f"k'(0) is singular for the {self.family} kernel")
        if self.family == "tabulated":
            lo, hi = self.table_r[0], self.table_r[-1]
            if np.any(r < lo) or np.any(r > hi):
                raise ValueError(
                    f"radius outside tabulated range [{lo:.3g}, {hi:.3g}]"
                )
        return self._gradient_raw(r)

    def gradient_clamped(self, r) -> np.ndarray:
        """Like :meth:`gradient`, but tabulated samples clamp at the endpoints."""
        return self._gradient_raw(np.asarray(r, dtype=float))

    def _gradient_raw(self, r: np.ndarray) -> np.ndarray:
        sigma_d = sphere_area(self.d)
        if self.family == "newtonian":
            return -(r ** (1 - self.d)) / sigma_d
        if self.family == "bessel":
            kappa = math.sqrt(self.alpha)
            if self.d == 2:
                return -(kappa / (2.0 * math.pi)) * special.k1(kappa * r)
            if self.d == 3:
                return -np.exp(-kappa * r) * (1.0 + kappa * r) / (4.0 * math.pi * r**2)
            raise ValueError(f"bessel kernel implemented for d in (2, 3), got d={self.d}")
        if self.family == "gaussian":
            s2 = self.sigma**2
            return -(r / s2) * np.exp(-(r**2) / (2.0 * s2))
        if self.family == "power_decay":
            return -r * (self.r0**2 + r**2) ** (-(self.gamma + 1.0) / 2.0)
        if self.family == "tabulated":
            return np.interp(r, self.table_r, self.table_kprime)
        raise ValueError(f"unknown kernel family {self.family!r}")

    def _antiderivative_k0(self, rho: np.ndarray) -> np.ndarray:
        """An antiderivative of k' (only differences are ever used)."""
        rho = np.asarray(rho, dtype=float)
        sigma_d = sphere_area(self.d)
        if self.family == "newtonian":
            if self.d == 2:
                return -np.log(np.maximum(rho, 1e-300)) / sigma_d
            return rho ** (2 - self.d) / ((self.d - 2) * sigma_d)
        if self.family == "bessel":
            kappa = math.sqrt(self.alpha)
            if self.d == 2:
                return special.k0(kappa * np.maximum(rho, 1e-300)) / (2.0 * math.pi)
            return np.exp(-kappa * rho) / (4.0 * math.pi * np.maximum(rho, 1e-300))
        if self.family == "gaussian":
            return np.exp(-(rho**2) / (2.0 * self.sigma**2))
        if self.family == "power_decay":
            v = self.r0**2 + rho**2
            if math.isclose(self.gamma, 1.0):
                return -0.5 * np.log(v)
            return v ** (-(self.gamma - 1.0) / 2.0) / (self.gamma - 1.0)
        if self.family == "tabulated":
            return np.interp(rho, self.table_r, self.table_k0)
        raise ValueError(f"unknown kernel family {self.family!r}")

    def _antiderivative_k2(self, rho: np.ndarray) -> np.ndarray:
        """int_0^rho t^2 k'(t) dt, used by the exact d = 3 angular reduction."""
        rho = np.asarray(rho, dtype=float)
        if self.family == "newtonian":
            if self.d != 3:
                raise ValueError("second-moment antiderivative is d = 3 specific")
            return -rho / (4.0 * math.pi)
        if self.family == "bessel":
            kappa = math.sqrt(self.alpha)
            return -(2.0 - np.exp(-kappa * rho) * (2.0 + kappa * rho)) / (
                4.0 * math.pi * kappa
            )
        if self.family == "gaussian":
            s2 = self.sigma**2
            return (rho**2 + 2.0 * s2) * np.exp(-(rho**2) / (2.0 * s2)) - 2.0 * s2
        if self.family == "power_decay":
            g = self.gamma
            v = self.r0**2 + rho**2
            v0 = self.r0**2

            def f1(x):
                if math.isclose(g, 3.0):
                    return np.log(x)
                return x ** ((3.0 - g) / 2.0) / ((3.0 - g) / 2.0)

            def f2(x):
                if math.isclose(g, 1.0):
                    return np.log(x)
                return x ** ((1.0 - g) / 2.0) / ((1.0 - g) / 2.0)

            return -0.5 * ((f1(v) - f1(v0)) - self.r0**2 * (f2(v) - f2(v0)))
        if self.family == "tabulated":
            return np.interp(rho, self.table_r, self.table_k2)
        raise ValueError(f"unknown kernel family {self.family!r}")

    def _singular_coefficient(self) -> float:
        """c with k'(rho) ~ c / rho as rho -> 0 (d = 2 Newtonian-type core)."""
        if self.d == 2 and self.family in ("newtonian", "bessel"):
            return -1.0 / (2.0 * math.pi)
        return 0.0


def newtonian(d: int) -> InteractionKernel:
    """Fundamental solution of -Laplace: the scale-invariant attractive kernel."""
    if d < 2:
        raise ValueError(f"dimension must be >= 2, got {d}")
    return InteractionKernel("newtonian", d, gamma_decay=float(d - 1))


def bessel(alpha: float, d: int) -> InteractionKernel:
    """Screened Newtonian kernel: fundamental solution of -Laplace + alpha."""
    if alpha <= 0:
        raise ValueError(f"screening rate alpha must be positive, got {alpha}")
    if d not in (2, 3):
        raise ValueError(f"bessel kernel implemented for d in (2, 3), got d={d}")
    return InteractionKernel("bessel", d, alpha=float(alpha), gamma_decay=math.inf)


def gaussian(sigma: float, d: int) -> InteractionKernel:
    """Smooth short-range kernel k(r) = exp(-r^2 / (2 sigma^2))."""
    if sigma <= 0:
        raise ValueError(f"width sigma must be positive, got {sigma}")
    return InteractionKernel("gaussian", d, sigma=float(sigma), gamma_decay=math.inf)


def power_decay(gamma: float, r0: float, d: int) -> InteractionKernel:
    """Smooth-core kernel with k'(r) = -r / (r0^2 + r^2)^{(gamma+1)/2}.

    The gradient decays like r^{-gamma} at infinity and vanishes linearly
    at the origin.
    """
    if gamma <= 0:
        raise ValueError(f"decay exponent gamma must be positive, got {gamma}")
    if r0 <= 0:
        raise ValueError(f"core radius r0 must be positive, got {r0}")
    return InteractionKernel(
        "power_decay", d, gamma=float(gamma), r0=float(r0), gamma_decay=float(gamma)
    )


def tabulated(
    r: np.ndarray, kprime: np.ndarray, d: int, gamma_decay: float = math.inf
) -> InteractionKernel:
    """Kernel gradient given by samples (r_i, k'(r_i)), linearly interpolated."""
    r = np.asarray(r, dtype=float)
    kprime = np.asarray(kprime, dtype=float)
    if r.ndim != 1 or r.shape != kprime.shape:
        raise ValueError("tabulated kernel needs matching 1-d r and k' sample arrays")
    if len(r) < 8:
        raise ValueError(f"tabulated kernel needs >= 8 samples, got {len(r)}")
    if r[0] <= 0 or np.any(np.diff(r) <= 0):
        raise ValueError("tabulated radii must be positive and strictly increasing")
    # Antiderivatives on the sample mesh via the trapezoid rule; the first
    # entry pins the (irrelevant) integration constant.
    k0 = np.concatenate(([0.0], np.cumsum(0.5 * (kprime[1:] + kprime[:-1]) * np.diff(r))))
    t2k = kprime * r**2
    k2 = np.concatenate(([0.0], np.cumsum(0.5 * (t2k[1:] + t2k[:-1]) * np.diff(r))))
    return InteractionKernel(
        "tabulated",
        d,
        table_r=r,
        table_kprime=kprime,
        table_k0=k0,
        table_k2=k2,
        gamma_decay=float(gamma_decay),
    )


def eval_gradient(kernel: InteractionKernel, r: float) -> float:
    """k'(r) at a single radius; negative values pull mass inward."""
    if r <= 0 and kernel.singular_at_origin:
        raise ValueError(f"k'(r) requires r > 0 for the {kernel.family} kernel")
    if r < 0:
        raise ValueError(f"radius must be nonnegative, got {r}")
    return float(kernel.gradient(np.array([r]))[0])


# ---------------------------------------------------------------------------
# L^q norms of the gradient
# ---------------------------------------------------------------------------

_GL32 = np.polynomial.legendre.leggauss(32)


def _panel_integral(kernel: InteractionKernel, q: float, a: float, b: float) -> float:
    """int_a^b |k'(r)|^q r^{d-1} dr by 32-point Gauss-Legendre."""
    x, w = _GL32
    nodes = 0.5 * (b + a) + 0.5 * (b - a) * x
    wts = 0.5 * (b - a) * w
    with np.errstate(over="ignore"):
        vals = np.abs(kernel.gradient(nodes)) ** q * nodes ** (kernel.d - 1)
    return float(np.sum(wts * vals))


def _geometric_sum(kernel, q, start: float, inward: bool, max_panels: int = 160):
    """Sum octave panels toward 0 (inward) or infinity; detect divergence.

    Panels of an admissible kernel shrink geometrically in both directions,
    so a stable ratio < 1 lets the remainder be summed in closed form; a
    ratio pinned at or above 1 (or overflow) is reported as divergent.
    """
    total = 0.0
    prev = None
    ratios: list[float] = []
    for k in range(max_panels):
        if inward:
            a, b = start * 2.0 ** -(k + 1), start * 2.0**-k
        else:
            a, b = start * 2.0**k, start * 2.0 ** (k + 1)
        val = _panel_integral(kernel, q, a, b)
        if not math.isfinite(val):
            return math.inf, False
        total += val
        if prev is not None and prev > 0:
            ratio = val / prev
            ratios.append(ratio)
            if val < 1e-300 or (total > 0 and val < 1e-14 * total and ratio < 0.9):
                return total, True
            if len(ratios) >= 6:
                recent = ratios[-4:]
                rho = float(np.median(recent))
                if rho >= 0.999:
                    return math.inf, False
                if max(recent) - min(recent) < 0.01 * max(recent):
                    return total + val * rho / (1.0 - rho), True
        prev = val
    if prev is not None and ratios and ratios[-1] < 0.999:
        rho = ratios[-1]
        return total + prev * rho / (1.0 - rho), True
    return math.inf, False


def lq_gradient_norm(kernel: InteractionKernel, q: float) -> float:
    """||grad K||_q = (sigma_{d-1} int |k'|^q r^{d-1} dr)^{1/q}.

    Returns ``math.inf`` when the core or tail integral diverges (as it does
    for the Newtonian kernel at every q below the critical d/(d-1), whose
    tail is exactly borderline).
    """
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    if kernel.family == "tabulated":
        # Compactly supported samples: integrate the table range directly.
        total = sum(
            _panel_integral(kernel, q, a, b)
            for a, b in zip(kernel.table_r[:-1], kernel.table_r[1:])
        )
        return (sphere_area(kernel.d) * total) ** (1.0 / q)
    core, core_ok = _geometric_sum(kernel, q, start=1.0, inward=True)
    if not core_ok:
        return math.inf
    tail, tail_ok = _geometric_sum(kernel, q, start=1.0, inward=False)
    if not tail_ok:
        return math.inf
    return (sphere_area(kernel.d) * (core + tail)) ** (1.0 / q)


# ---------------------------------------------------------------------------
# Admissibility probe
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdmissibilityReport:
    """Outcome of the numeric regularity checks on a kernel.

    ``kn_ok``: k is monotone near the origin.  ``mn_ok``: k'' and k'/r are
    monotone on (0, delta).  ``bd_ok``: sup |k'''(r)| r^{d+1} stays below the
    configured constant.  The probe reports, it never raises on failure.
    """

    kn_ok: bool
    mn_ok: bool
    bd_ok: bool
    details: dict


def _monotone(vals: np.ndarray, scale: float) -> bool:
    diffs = np.diff(vals)
    tol = 1e-8 * max(scale, 1e-300)
    has_up = np.any(diffs > tol)
    has_down = np.any(diffs < -tol)
    return not (has_up and has_down)


def admissibility_probe(
    kernel: InteractionKernel,
    r_max: float,
    n_samples: int = 400,
    delta: float | None = None,
    bd_constant: float = 1e3,
) -> AdmissibilityReport:
    """Finite-difference checks of radial monotonicity and third-derivative decay."""
    if r_max <= 0:
        raise ValueError(f"r_max must be positive, got {r_max}")
    if n_samples < 16:
        raise ValueError(f"need at least 16 samples, got {n_samples}")
    if kernel.family == "tabulated" and len(kernel.table_r) < 16:
        raise ValueError("tabulated kernel has insufficient resolution for the probe")
    if delta is None:
        delta = min(1.0, r_max / 10.0)

    if kernel.family == "tabulated":
        r_lo = float(kernel.table_r[0]) * 1.05
        r_hi = min(r_max, float(kernel.table_r[-1]) * 0.9)
        step_floor = float(np.median(np.diff(kernel.table_r)))
        delta = max(delta, 8.0 * r_lo)
    else:
        r_lo, r_hi, step_floor = 1e-5 * r_max, r_max, 0.0

    def derivatives(r: np.ndarray):
        e = np.maximum(1e-4 * r, step_floor)
        e = np.minimum(e, 0.49 * r)
        kp = kernel.gradient_clamped(r)
        kp_hi = kernel.gradient_clamped(r + e)
        kp_lo = kernel.gradient_clamped(r - e)
        k2 = (kp_hi - kp_lo) / (2.0 * e)
        k3 = (kp_hi - 2.0 * kp + kp_lo) / e**2
        return kp, k2, k3

    r_near = np.geomspace(max(r_lo, 1e-6 * delta), delta, n_samples)
    kp_near, k2_near, _ = derivatives(r_near)

    kn_ok = bool(np.all(kp_near <= 1e-12 * np.max(np.abs(kp_near)))) or bool(
        np.all(kp_near >= -1e-12 * np.max(np.abs(kp_near)))
    )
    mn_ok = _monotone(k2_near, float(np.max(np.abs(k2_near)))) and _monotone(
        kp_near / r_near, float(np.max(np.abs(kp_near / r_near)))
    )

    r_wide = np.geomspace(max(r_lo, 1e-3 * r_hi), r_hi, n_samples)
    _, _, k3_wide = derivatives(r_wide)
    bd_sup = float(np.max(np.abs(k3_wide) * r_wide ** (kernel.d + 1)))
    bd_ok = bd_sup <= bd_constant

    return AdmissibilityReport(
        kn_ok=kn_ok,
        mn_ok=mn_ok,
        bd_ok=bd_ok,
        details={
            "delta": delta,
            "bd_sup": bd_sup,
            "bd_constant": bd_constant,
            "n_samples": n_samples,
        },
    )


# ---------------------------------------------------------------------------
# Radial convolution operator
# ---------------------------------------------------------------------------

# 3-point Gauss rule reused for the source-cell integration of the matrix.
_SRC_NODES = np.array([-math.sqrt(3.0 / 5.0), 0.0, math.sqrt(3.0 / 5.0)])
_SRC_WEIGHTS = np.array([5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])


def _source_rule(lo: np.ndarray, hi: np.ndarray, d: int):
    """Gauss nodes/weights per source interval; weights absorb s^{d-1}."""
    mid = 0.5 * (hi + lo)[:, None]
    half = 0.5 * (hi - lo)[:, None]
    nodes = mid + half * _SRC_NODES[None, :]
    wts = half * _SRC_WEIGHTS[None, :] * nodes ** (d - 1)
    return nodes, wts


def _pair_function_d3(kernel, r: np.ndarray, s: np.ndarray, dilation: float):
    """G(r, s) for d = 3 via exact kernel antiderivatives (dilated argument)."""
    mu = dilation
    a = np.abs(r - s)
    b = r + s
    dk2 = (kernel._antiderivative_k2(mu * b) - kernel._antiderivative_k2(mu * a)) / mu**3
    dk0 = (kernel._antiderivative_k0(mu * b) - kernel._antiderivative_k0(mu * a)) / mu
    return math.pi / (r**2 * s) * (dk2 + (r**2 - s**2) * dk0)


def _pair_function_d2(kernel, r: np.ndarray, s: np.ndarray, dilation: float, order: int):
    """G(r, s) for d = 2: analytic singular part plus Gauss-Chebyshev smooth part."""
    mu = dilation
    k = np.arange(1, order + 1)
    x = np.cos((2 * k - 1) * math.pi / (2 * order))
    a2 = (r - s) ** 2
    b2 = (r + s) ** 2
    rho2 = 0.5 * (a2 + b2)[..., None] + 0.5 * (b2 - a2)[..., None] * x
    rho = np.sqrt(np.maximum(rho2, 1e-280))
    c = kernel._singular_coefficient()
    grad = kernel.gradient_clamped(np.maximum(mu * rho, 1e-140))
    if c != 0.0:
        grad = grad - c / (mu * rho)
    f = grad * ((r**2 - s**2)[..., None] + rho2) / rho
    g_smooth = (math.pi / order) * np.sum(f, axis=-1) / r
    if c != 0.0:
        g_sing = np.where(s < r, 2.0 * math.pi * (c / mu) / r, 0.0)
        return g_smooth + g_sing
    return g_smooth


def _pair_function(kernel, r, s, dilation, order):
    if kernel.d == 3:
        return _pair_function_d3(kernel, r, s, dilation)
    if kernel.d == 2:
        return _pair_function_d2(kernel, r, s, dilation, order)
    raise NotImplementedError(
        f"radial convolution operator implemented for d in (2, 3), got d={kernel.d}"
    )


def _build_matrix(kernel, grid: RadialGrid, order: int, dilation: float) -> np.ndarray:
    nodes, wts = _source_rule(grid.faces[:-1], grid.faces[1:], grid.d)
    r = grid.centers
    n = grid.n
    flat_nodes = nodes.ravel()
    flat_wts = wts.ravel()
    matrix = np.empty((n, n))
    per_row = flat_nodes.size * (order if grid.d == 2 else 1)
    chunk = max(1, int(5e6 // max(per_row, 1)))
    # Source nodes may coincide with an evaluation radius on the diagonal;
    # those entries are recomputed exactly below, so suppress the transient
    # division warnings here.
    with np.errstate(divide="ignore", invalid="ignore"):
        for i0 in range(0, n, chunk):
            i1 = min(i0 + chunk, n)
            g = _pair_function(
                kernel, r[i0:i1, None], flat_nodes[None, :], dilation, order
            )
            matrix[i0:i1] = (g * flat_wts[None, :]).reshape(i1 - i0, n, 3).sum(axis=2)
    # Diagonal cells contain the evaluation radius, where G has a kink (or a
    # jump for Newtonian-type kernels): integrate each half-cell separately.
    lo = grid.faces[:-1]
    hi = grid.faces[1:]
    for side_lo, side_hi in ((lo, r), (r, hi)):
        nd, wd = _source_rule(side_lo, side_hi, grid.d)
        g = _pair_function(kernel, r[:, None], nd, dilation, order)
        diag_part = np.sum(g * wd, axis=1)
        if side_lo is lo:
            diag = diag_part
        else:
            diag = diag + diag_part
    matrix[np.arange(n), np.arange(n)] = diag
    return matrix


@dataclass
class RadialConvolutionOperator:
    """Precomputed map from cell densities to the radial attraction velocity.

    ``apply`` returns the signed radial component of (grad K * u) at the cell
    centers; the Newtonian family routes through the exact enclosed-mass
    (shell theorem) formula unless a matrix was forced at build time.
    """

    grid: RadialGrid
    kernel: InteractionKernel
    quadrature_order: int
    dilation: float = 1.0
    matrix: np.ndarray | None = None
    exact_newtonian: bool = False

    def apply(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape != (self.grid.n,):
            raise ValueError(
                f"density has shape {values.shape}, expected ({self.grid.n},)"
            )
        if self.exact_newtonian:
            g = self.grid
            sigma_d = sphere_area(g.d)
            below = np.concatenate(([0.0], np.cumsum(g.volumes * values)[:-1]))
            partial = values * sigma_d * (g.centers**g.d - g.faces[:-1] ** g.d) / g.d
            enclosed = below + partial
            w = -enclosed / (sigma_d * g.centers ** (g.d - 1))
            return self.dilation ** (1 - g.d) * w
        return self.matrix @ values

    def apply_at_faces(self, values: np.ndarray) -> np.ndarray:
        """Velocity at the n-1 interior faces.

        The Newtonian path uses the exact enclosed mass at each face; matrix
        kernels interpolate the cell-center velocities.
        """
        if self.exact_newtonian:
            g = self.grid
            sigma_d = sphere_area(g.d)
            enclosed = np.cumsum(g.volumes * values)[:-1]
            w = -enclosed / (sigma_d * g.faces[1:-1] ** (g.d - 1))
            return self.dilation ** (1 - g.d) * w
        w = self.apply(values)
        return 0.5 * (w[:-1] + w[1:])


def build_convolution(
    kernel: InteractionKernel,
    grid: RadialGrid,
    quadrature_order: int = 64,
    dilation: float = 1.0,
    force_matrix: bool = False,
    max_cells: int = 4096,
) -> RadialConvolutionOperator:
    """Assemble the radial attraction operator on ``grid``.

    ``dilation`` evaluates the kernel gradient at scaled radii k'(dilation * r),
    as needed by the self-similar form of the dynamics.  The n x n matrix is
    refused above ``max_cells`` to bound memory.
    """
    if kernel.d != grid.d:
        raise ValueError(f"kernel dimension {kernel.d} != grid dimension {grid.d}")
    if quadrature_order < 8:
        raise ValueError(f"quadrature order must be >= 8, got {quadrature_order}")
    if dilation <= 0:
        raise ValueError(f"dilation must be positive, got {dilation}")
    if kernel.family == "newtonian" and not force_matrix:
        return RadialConvolutionOperator(
            grid, kernel, quadrature_order, dilation, exact_newtonian=True
        )
    if grid.n > max_cells:
        raise ValueError(
            f"grid has {grid.n} cells; matrix would exceed the {max_cells}-cell cap "
            f"({grid.n}^2 entries)"
        )
    matrix = _build_matrix(kernel, grid, quadrature_order, dilation)
    return RadialConvolutionOperator(grid, kernel, quadrature_order, dilation, matrix)


def attraction_velocity(op: RadialConvolutionOperator, u: DensityField) -> np.ndarray:
    """Radial velocity field w(r_i) = radial part of (grad K * u); w < 0 is inward."""
    if u.grid != op.grid:
        raise ValueError("density field and convolution operator use different grids")
    return op.apply(u.values)
