"""Numerical laboratory for periodic homogenization of stored-energy mixtures."""

from .cell import (
    CellResult,
    MembershipResult,
    ProbeResult,
    SolverOptions,
    cell_integrand,
    hom_integrand,
    rank_one_probe,
    zero_set_membership,
)
from .densities import DistPower, MixtureDensity, PolyMax, Quadratic, verify_growth
from .grid import GradientField, PeriodicGrid, VectorField, cell_average, gradient
from .microstructure import (
    FractionVector,
    PhaseMap,
    adjust_fraction,
    checkerboard,
    fractions,
    oscillate,
    random_with_fraction,
    stripe,
)

__version__ = "0.1.0"

__all__ = [
    "CellResult",
    "DistPower",
    "FractionVector",
    "GradientField",
    "MembershipResult",
    "MixtureDensity",
    "PeriodicGrid",
    "PhaseMap",
    "PolyMax",
    "ProbeResult",
    "Quadratic",
    "SolverOptions",
    "VectorField",
    "adjust_fraction",
    "cell_average",
    "cell_integrand",
    "checkerboard",
    "fractions",
    "gradient",
    "hom_integrand",
    "oscillate",
    "random_with_fraction",
    "rank_one_probe",
    "stripe",
    "verify_growth",
    "zero_set_membership",
    "__version__",
]
