"""Periodic pixel grids on (0,j)^2, vector fields and discrete calculus.

Fields live on a uniform grid of (j*N)^2 nodes with spacing h = 1/N; node
(i0, i1) sits at y = (i0*h, i1*h) and all index arithmetic wraps modulo j*N.
Gradients use one-sided (forward) differences: centered stencils admit
checkerboard null modes that derail nonconvex minimization, one-sided ones
keep the discrete energy coercive on the mean-zero subspace.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PeriodicGrid",
    "VectorField",
    "GradientField",
    "gradient",
    "cell_average",
    "field_to_csv",
]


@dataclass(frozen=True)
class PeriodicGrid:
    """Discretization of the cell (0,j)^2 with N pixels per unit length."""

    N: int
    j: int = 1
    n: int = 2

    def __post_init__(self):
        if self.n != 2:
            raise ValueError("only n = 2 is supported")
        if self.N < 1 or self.j < 1:
            raise ValueError("N and j must be positive")
        if self.size < 2:
            raise ValueError("grid needs at least 2 points per side")

    @property
    def size(self) -> int:
        """Points per side, j*N."""
        return self.j * self.N

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def npixels(self) -> int:
        return self.size**2

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates (y1, y2) as two (size, size) arrays."""
        ax = np.arange(self.size) * self.h
        return np.meshgrid(ax, ax, indexing="ij")


@dataclass(frozen=True)
class VectorField:
    """m-component field sampled on the nodes of a periodic grid.

    Storage covers one fundamental domain; periodicity is structural, all
    access wraps around. `values` has shape (m, size, size).
    """

    grid: PeriodicGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3 or v.shape[1:] != (self.grid.size, self.grid.size):
            raise ValueError(f"values must have shape (m, {self.grid.size}, {self.grid.size})")
        if v.shape[0] not in (1, 2):
            raise ValueError("target dimension m must be 1 or 2")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def shifted_mean_zero(self) -> "VectorField":
        """Same field with the per-component mean subtracted."""
        return VectorField(self.grid, self.values - self.values.mean(axis=(1, 2), keepdims=True))


@dataclass(frozen=True)
class GradientField:
    """Per-node m x 2 matrices, shape (m, 2, size, size)."""

    grid: PeriodicGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 4 or v.shape[1] != 2 or v.shape[2:] != (self.grid.size, self.grid.size):
            raise ValueError(f"values must have shape (m, 2, {self.grid.size}, {self.grid.size})")
        object.__setattr__(self, "values", v)

    @property
    def m(self) -> int:
        return self.values.shape[0]


def forward_diff(values: np.ndarray, h: float) -> np.ndarray:
    """Forward differences with periodic wrap along the last two axes.

    Input (..., S, S) -> output (..., 2, S, S); component alpha holds
    (f(i + e_alpha) - f(i)) / h.
    """
    out = np.empty(values.shape[:-2] + (2,) + values.shape[-2:])
    np.subtract(np.roll(values, -1, axis=-2), values, out=out[..., 0, :, :])
    np.subtract(np.roll(values, -1, axis=-1), values, out=out[..., 1, :, :])
    out *= 1.0 / h
    return out


def backward_div(p: np.ndarray, h: float) -> np.ndarray:
    """Discrete negative adjoint of `forward_diff`.

    Input (..., 2, S, S) -> output (..., S, S); sum_x forward_diff(f)·p
    equals -sum_x f·backward_div(p) exactly (summation by parts on the torus).
    """
    out = np.subtract(p[..., 0, :, :], np.roll(p[..., 0, :, :], 1, axis=-2))
    out += p[..., 1, :, :]
    out -= np.roll(p[..., 1, :, :], 1, axis=-1)
    out *= 1.0 / h
    return out


def gradient(f: VectorField) -> GradientField:
    """Discrete gradient of a periodic field, exact for pixel-affine rows."""
    return GradientField(f.grid, forward_diff(f.values, f.grid.h))


def cell_average(g):
    """Average over all grid nodes (midpoint quadrature on the cell).

    Accepts a GradientField (returns the m x 2 mean matrix), a VectorField
    (returns the m-vector of means) or a bare array whose last two axes are
    the grid.
    """
    if isinstance(g, GradientField):
        return g.values.mean(axis=(2, 3))
    if isinstance(g, VectorField):
        return g.values.mean(axis=(1, 2))
    return np.asarray(g, dtype=float).mean(axis=(-2, -1))


def field_to_csv(f: VectorField) -> str:
    """Snapshot of a field as CSV text with header ``i,j,comp,value``."""
    lines = ["i,j,comp,value"]
    s = f.grid.size
    for comp in range(f.m):
        for i0 in range(s):
            row = f.values[comp, i0]
            lines.extend(f"{i0},{i1},{comp},{row[i1]!r}" for i1 in range(s))
    return "\n".join(lines) + "\n"
