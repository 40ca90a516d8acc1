"""Fast path for quadratic conductivity mixtures: correctors and effective tensors.

For a piecewise-constant 2x2 conductivity A(y) on the periodic cell, the
corrector phi_i minimizes the quadratic energy of e_i + grad(phi) and the
effective tensor assembles the bilinear form

    (A_eff)_ij = mean over pixels of A(y) [e_i + grad phi_i] . [e_j + grad phi_j].

Solves run preconditioned conjugate gradient against the mean-coefficient
inverse applied by FFT.  Accuracy degrades with contrast; ratios above 1e4
are rejected rather than silently mis-solved.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import CGStalled, NonIntegralFraction
from .grid import PeriodicGrid, VectorField, forward_diff
from .microstructure import (
    FractionVector,
    PhaseMap,
    checkerboard,
    random_with_fraction,
    stripe,
)
from .solvers import build_preconditioner, pcg, quadratic_operator

__all__ = [
    "ConductivityMixture",
    "EffectiveTensor",
    "solve_corrector",
    "a_cell",
    "p_theta_sample",
    "CONTRAST_CAP",
]

logger = logging.getLogger(__name__)

CONTRAST_CAP = 1e4
_CG_RTOL = 1e-10
_CG_ACCEPT = 1e-8


@dataclass(frozen=True)
class ConductivityMixture:
    """Per-pixel 2x2 symmetric positive-definite conductivity A_chi(y)."""

    a_phases: tuple[np.ndarray, ...]
    chi: PhaseMap
    ellipticity: tuple[float, float] = field(init=False)

    def __post_init__(self):
        phases = tuple(np.asarray(a, dtype=float) for a in self.a_phases)
        if len(phases) != self.chi.n_phases:
            raise ValueError("tensor count must match the phase count")
        for a in phases:
            if a.shape != (2, 2):
                raise ValueError("phase tensors must be 2x2")
            if not np.allclose(a, a.T, atol=1e-12):
                raise ValueError("phase tensors must be symmetric")
            if np.linalg.eigvalsh(a).min() <= 0:
                raise ValueError("phase tensors must be positive definite")
        lo = min(np.linalg.eigvalsh(a).min() for a in phases)
        hi = max(np.linalg.eigvalsh(a).max() for a in phases)
        if hi / lo > CONTRAST_CAP:
            raise ValueError(f"phase contrast {hi / lo:.3g} exceeds the supported cap {CONTRAST_CAP:g}")
        object.__setattr__(self, "a_phases", phases)
        object.__setattr__(self, "ellipticity", (float(lo), float(hi)))

    @property
    def grid(self) -> PeriodicGrid:
        return self.chi.grid

    def coefficient_field(self) -> np.ndarray:
        """Per-pixel tensors as a (2, 2, S, S) array."""
        s = self.grid.size
        k = np.zeros((2, 2, s, s))
        for a, i in zip(self.a_phases, range(len(self.a_phases))):
            mask = self.chi.phase == i
            k[:, :, mask] = a[:, :, None]
        return k


@dataclass(frozen=True)
class EffectiveTensor:
    matrix: np.ndarray
    residuals: tuple[float, float]
    N: int
    j: int

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.T))


def _corrector_system(mixture: ConductivityMixture):
    k = mixture.coefficient_field()
    apply_a, rhs_for = quadratic_operator(k, mixture.grid, m=1)
    precond = build_preconditioner(k.mean(axis=(2, 3)), mixture.grid, m=1)
    return k, apply_a, rhs_for, precond


def solve_corrector(mixture: ConductivityMixture, axis: int, maxiter: int = 4000):
    """Mean-zero periodic potential driven along a coordinate axis.

    Returns (field, relative_residual); raises CGStalled when CG cannot push
    the relative residual below 1e-8 within the iteration cap.
    """
    if axis not in (0, 1):
        raise ValueError("axis must be 0 or 1")
    _, apply_a, rhs_for, precond = _corrector_system(mixture)
    e = np.zeros((1, 2))
    e[0, axis] = 1.0
    rhs = rhs_for(e)
    phi, rel, _ = pcg(apply_a, rhs, precond, rtol=_CG_RTOL, maxiter=maxiter)
    if rel > _CG_ACCEPT:
        raise CGStalled(f"corrector axis {axis}: relative residual {rel:.3e} after {maxiter} iterations")
    phi = phi - phi.mean(axis=(1, 2), keepdims=True)
    return VectorField(mixture.grid, phi), rel


def a_cell(mixture: ConductivityMixture) -> EffectiveTensor:
    """Effective 2x2 tensor of a conductivity mixture on its periodic cell."""
    k = mixture.coefficient_field()
    grads = []
    residuals = []
    for axis in range(2):
        phi, rel = solve_corrector(mixture, axis)
        g = forward_diff(phi.values, mixture.grid.h)[0]  # (2, S, S)
        e = np.zeros((2, 1, 1))
        e[axis] = 1.0
        grads.append(e + g)
        residuals.append(rel)
    mat = np.empty((2, 2))
    for i in range(2):
        kgi = np.einsum("abxy,bxy->axy", k, grads[i])
        for jj in range(2):
            mat[i, jj] = np.mean(np.einsum("axy,axy->xy", kgi, grads[jj]))
    return EffectiveTensor(matrix=mat, residuals=(residuals[0], residuals[1]), N=mixture.grid.N, j=mixture.grid.j)


def _diagonal_stripe(grid: PeriodicGrid, coeffs: tuple[int, int], theta: float) -> PhaseMap:
    """Stripe normal to a lattice direction: phase 0 where (a i0 + b i1) mod S < theta S.

    With gcd(a, S) = 1 the level sets are equidistributed, so fractions are
    pixel-exact whenever theta * S is integral.
    """
    s = grid.size
    width = theta * s
    if abs(width - round(width)) > 1e-9:
        raise NonIntegralFraction(f"theta {theta} not representable on {s} diagonal levels")
    a, b = coeffs
    i0, i1 = np.meshgrid(np.arange(s), np.arange(s), indexing="ij")
    level = (a * i0 + b * i1) % s
    return PhaseMap(grid, 2, (level >= round(width)).astype(np.int16))


def p_theta_sample(
    a1,
    a2,
    theta: float,
    count: int,
    seed: int,
    N: int,
) -> list[tuple[str, EffectiveTensor]]:
    """Effective tensors of `count` exact-fraction geometries mixing a1 and a2.

    The menu starts with axis stripes, diagonal stripes and (at theta = 1/2,
    even N) the checkerboard, then fills up with seeded random maps.  Failed
    solves are skipped with a warning and do not abort the sweep.
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    grid = PeriodicGrid(N=N)
    if abs(theta * grid.npixels - round(theta * grid.npixels)) > 1e-9:
        raise NonIntegralFraction(f"theta {theta} is not a whole pixel count at N = {N}")
    a1 = np.asarray(a1, dtype=float)
    a2 = np.asarray(a2, dtype=float)

    geometries: list[tuple[str, PhaseMap]] = []
    stripe_ok = abs(theta * grid.size - round(theta * grid.size)) < 1e-9
    if stripe_ok:
        geometries.append(("stripe-axis0", stripe(grid, 0, theta)))
        geometries.append(("stripe-axis1", stripe(grid, 1, theta)))
        geometries.append(("stripe-diag11", _diagonal_stripe(grid, (1, 1), theta)))
        geometries.append(("stripe-diag12", _diagonal_stripe(grid, (1, 2), theta)))
    if theta == 0.5 and N % 2 == 0:
        geometries.append(("checkerboard", checkerboard(grid)))
    frac = FractionVector((theta, 1.0 - theta)) if 0.0 < theta < 1.0 else None
    i = 0
    while len(geometries) < count:
        if frac is None:
            phase = np.full((grid.size, grid.size), 0 if theta == 1.0 else 1, dtype=np.int16)
            geometries.append((f"constant-{i}", PhaseMap(grid, 2, phase)))
        else:
            geometries.append((f"random-{i}", random_with_fraction(grid, frac, seed + i)))
        i += 1
    geometries = geometries[:count]

    out: list[tuple[str, EffectiveTensor]] = []
    for name, chi in geometries:
        try:
            mixture = ConductivityMixture((a1, a2), chi)
            out.append((name, a_cell(mixture)))
        except CGStalled as exc:  # pragma: no cover - contrast within cap converges
            logger.warning("geometry %s skipped: %s", name, exc)
    return out
