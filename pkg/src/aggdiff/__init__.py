"""Radial finite-volume laboratory for critical nonlocal aggregation-diffusion flows."""

__version__ = "0.1.0"

from .fields import DensityField, RadialGrid
from .kernels import InteractionKernel, bessel, gaussian, newtonian, power_decay
from .solver import SimulationResult, SolverConfig, simulate

__all__ = [
    "__version__",
    "DensityField",
    "RadialGrid",
    "InteractionKernel",
    "newtonian",
    "bessel",
    "gaussian",
    "power_decay",
    "SolverConfig",
    "SimulationResult",
    "simulate",
]
