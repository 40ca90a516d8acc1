"""Shared numerical machinery for the periodic cell problems.

Two solve paths share this module:

* the general (possibly nonconvex) mixtures go through `field_energy`, which
  returns the discrete energy and its exact gradient for a quasi-Newton
  driver;
* all-quadratic mixtures reduce to a linear system solved by conjugate
  gradient with an FFT-applied constant-coefficient preconditioner
  (`build_preconditioner`, `pcg`).

The discrete energy is the pixel mean of W_chi(x, xi + grad phi(x)) with the
forward-difference gradient, so its stationarity condition is a discrete
divergence equation on the torus.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .densities import MixtureDensity, Quadratic
from .grid import PeriodicGrid, backward_div, forward_diff

Array = np.ndarray


def field_energy(mix: MixtureDensity, xi: Array, phi: Array, grid: PeriodicGrid):
    """Discrete mixture energy and its gradient with respect to phi.

    phi has shape (m, S, S); returns (energy, denergy/dphi) where the energy
    is the pixel mean of the pointwise density at xi + grad(phi).
    """
    t = forward_diff(phi, grid.h)
    t += xi[:, :, None, None]
    w, p = mix.energy_and_grad_field(t)
    g = backward_div(p, grid.h)
    g *= -1.0 / grid.npixels
    return float(w.mean()), g


def field_energy_value(mix: MixtureDensity, xi: Array, phi: Array, grid: PeriodicGrid) -> float:
    t = xi[:, :, None, None] + forward_diff(phi, grid.h)
    return float(mix.energy_field(t).mean())


def quadratic_coefficients(mix: MixtureDensity) -> Array:
    """Per-pixel coefficient matrices K(x) of an all-quadratic mixture, (d, d, S, S)."""
    if not all(isinstance(w, Quadratic) for w in mix.phases):
        raise ValueError("mixture is not all-quadratic")
    d = mix.m * mix.n
    s = mix.grid.size
    k = np.zeros((d, d, s, s))
    for w, mask in zip(mix.phases, mix.masks()):
        k[:, :, mask] = w.A[:, :, None]
    return k


def _fourier_symbols(grid: PeriodicGrid) -> tuple[Array, Array]:
    """Forward-difference symbols lambda_alpha(k) on the (S, S) frequency grid."""
    s = grid.size
    k = np.fft.fftfreq(s) * s
    lam = (np.exp(2j * np.pi * k / s) - 1.0) / grid.h
    return lam[:, None] * np.ones((1, s)), np.ones((s, 1)) * lam[None, :]


def build_preconditioner(k_mean: Array, grid: PeriodicGrid, m: int) -> Callable[[Array], Array]:
    """Exact inverse of the mean-coefficient operator, applied via FFT.

    k_mean is the (d, d) pixel average of the coefficient field; the returned
    callable inverts -div(k_mean grad .) on the mean-zero subspace, which is a
    strong preconditioner for piecewise-constant coefficients at moderate
    contrast.
    """
    lam1, lam2 = _fourier_symbols(grid)
    lam = np.stack([lam1, lam2])  # (2, S, S)
    km = k_mean.reshape(m, 2, m, 2)
    # symbol(k)_{ab} = sum_{alpha beta} conj(lam_a) K lam_b, Hermitian PSD
    sym = np.einsum("aybz,yij,zij->abij", km, lam.conj(), lam)
    s = grid.size
    eye = np.eye(m)[:, :, None, None]
    # Regularize the zero mode; its output is discarded by mean projection.
    sym0 = sym + eye * (np.abs(sym).max() + 1.0) * (np.abs(sym).sum(axis=(0, 1)) == 0.0)
    inv = np.linalg.inv(np.moveaxis(sym0, (0, 1), (-2, -1)))
    inv = np.moveaxis(inv, (-2, -1), (0, 1))

    def apply(r: Array) -> Array:
        rh = np.fft.fft2(r, axes=(-2, -1))
        xh = np.einsum("abij,bij->aij", inv, rh)
        x = np.fft.ifft2(xh, axes=(-2, -1)).real
        return x - x.mean(axis=(-2, -1), keepdims=True)

    return apply


def quadratic_operator(k_field: Array, grid: PeriodicGrid, m: int):
    """Returns (apply_A, rhs_for) for the stationarity system of a quadratic mixture.

    apply_A(phi) = -div(K grad phi) and rhs_for(xi) = div(K xihat), both on
    (m, S, S) fields, so the minimizer solves apply_A(phi) = rhs.
    """

    def apply_a(phi: Array) -> Array:
        g = forward_diff(phi, grid.h).reshape(2 * m, grid.size, grid.size)
        kg = np.einsum("abij,bij->aij", k_field, g).reshape(m, 2, grid.size, grid.size)
        return -backward_div(kg, grid.h)

    def rhs_for(xi: Array) -> Array:
        kxi = np.einsum("abij,b->aij", k_field, xi.ravel()).reshape(m, 2, grid.size, grid.size)
        return backward_div(kxi, grid.h)

    return apply_a, rhs_for


def pcg(
    apply_a: Callable[[Array], Array],
    b: Array,
    precond: Callable[[Array], Array],
    rtol: float = 1e-10,
    atol: float = 0.0,
    maxiter: int = 2000,
    x0: Array | None = None,
):
    """Preconditioned conjugate gradient on mean-zero periodic fields.

    Stops when ||r||_2 <= max(rtol * ||b||_2, atol).  Returns
    (x, relative_residual, iterations); the caller decides whether a
    non-converged result is fatal.
    """
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b), 0.0, 0
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - apply_a(x)
    z = precond(r)
    p = z.copy()
    rz = float(np.vdot(r, z).real)
    target = max(rtol * bnorm, atol)
    for it in range(1, maxiter + 1):
        ap = apply_a(p)
        pap = float(np.vdot(p, ap).real)
        if pap <= 0.0:
            break
        a = rz / pap
        x += a * p
        r -= a * ap
        rnorm = float(np.linalg.norm(r))
        if rnorm <= target:
            return x, rnorm / bnorm, it
        z = precond(r)
        rz_new = float(np.vdot(r, z).real)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, float(np.linalg.norm(r)) / bnorm, maxiter
