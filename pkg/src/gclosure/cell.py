"""Single-cell and multi-cell minimization of mixture energies.

`cell_integrand` evaluates the one-period relaxation

    inf over periodic phi of the pixel mean of W_chi(x, xi + grad phi(x)),

`hom_integrand` repeats it on j-fold tilings of the geometry and reports the
per-cell average, whose infimum over j is the homogenized value.  Convex
(all-quadratic) mixtures take a preconditioned CG fast path and are solved to
the global discrete optimum; everything else runs a multi-start limited-memory
quasi-Newton descent on the mean-zero subspace.

`zero_set_membership` probes whether a matrix admits an exactly-zero-energy
periodic test field for given per-phase zero sets, and `rank_one_probe`
samples the cell value along a rank-one line to expose convexity failures.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .densities import DistPower, MixtureDensity, Quadratic
from .grid import PeriodicGrid, VectorField
from .microstructure import PhaseMap
from .solvers import (
    build_preconditioner,
    field_energy,
    field_energy_value,
    pcg,
    quadratic_coefficients,
    quadratic_operator,
)

__all__ = [
    "SolverOptions",
    "CellResult",
    "cell_integrand",
    "hom_integrand",
    "zero_set_membership",
    "MembershipResult",
    "rank_one_probe",
    "ProbeResult",
    "DEFAULT_EPS",
]

DEFAULT_EPS = 1e-3


@dataclass(frozen=True)
class SolverOptions:
    """Knobs for the cell minimizers; defaults suit the canned scenarios."""

    max_iters: int = 2000
    grad_tol: float = 1e-8
    restarts: int = 8
    seed: int = 0
    maxls: int = 60
    memory: int = 12
    eps: float | None = None  # smoothing override for DistPower phases

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.grad_tol <= 0:
            raise ValueError("grad_tol must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


@dataclass(frozen=True)
class CellResult:
    """Outcome of one cell/multi-cell minimization."""

    value: float
    minimizer: VectorField
    iterations: int
    converged: bool
    restarts_used: int
    energy_trace: tuple[float, ...] = ()


def _apply_eps(mix: MixtureDensity, opts: SolverOptions) -> MixtureDensity:
    if opts.eps is not None:
        return mix.with_eps(opts.eps)
    if mix.needs_smoothing():
        return mix.with_eps(DEFAULT_EPS)
    return mix


def _ridge_guess(grid: PeriodicGrid, m: int, scale: float) -> np.ndarray:
    """Per-unit-cell triangular ridge |<y1> - 1/2| in the first component."""
    y1 = (np.arange(grid.size) * grid.h) % 1.0
    tri = np.abs(y1 - 0.5) * scale
    out = np.zeros((m, grid.size, grid.size))
    out[0] = tri[:, None]
    return out


def _initial_guesses(grid: PeriodicGrid, m: int, xi: np.ndarray, opts: SolverOptions, extra):
    """Multi-start menu: warm starts, zero, the ridge field, Gaussian fields."""
    rng = np.random.default_rng(opts.seed)
    scale = float(np.linalg.norm(xi))
    menu: list[np.ndarray] = list(extra)
    menu.append(np.zeros((m, grid.size, grid.size)))
    menu.append(_ridge_guess(grid, m, scale if scale > 0 else 1.0))
    while len(menu) < opts.restarts:
        menu.append(grid.h * max(scale, 1.0) * rng.standard_normal((m, grid.size, grid.size)))
    menu = menu[: opts.restarts]
    return [g - g.mean(axis=(1, 2), keepdims=True) for g in menu]


def _minimize_once(mix: MixtureDensity, xi: np.ndarray, grid: PeriodicGrid, phi0, opts):
    shape = (mix.m, grid.size, grid.size)
    trace: list[float] = []
    last = [np.inf]

    def fun(x):
        e, g = field_energy(mix, xi, x.reshape(shape), grid)
        last[0] = e
        return e, g.ravel()

    res = minimize(
        fun,
        phi0.ravel(),
        jac=True,
        method="L-BFGS-B",
        callback=lambda _xk: trace.append(last[0]),
        options=dict(
            maxiter=opts.max_iters,
            maxcor=opts.memory,
            maxls=opts.maxls,
            gtol=opts.grad_tol,
            ftol=1e-16,
        ),
    )
    phi = res.x.reshape(shape)
    phi = phi - phi.mean(axis=(1, 2), keepdims=True)
    value = field_energy_value(mix, xi, phi, grid)
    converged = float(np.max(np.abs(res.jac))) <= opts.grad_tol
    return value, phi, int(res.nit), converged, trace


def _solve_quadratic(mix: MixtureDensity, xi: np.ndarray, grid: PeriodicGrid, opts):
    k_field = quadratic_coefficients(mix)
    apply_a, rhs_for = quadratic_operator(k_field, grid, mix.m)
    precond = build_preconditioner(k_field.mean(axis=(2, 3)), grid, mix.m)
    rhs = rhs_for(xi)
    # max-norm of the energy gradient is bounded by 2 ||r||_2 / S^2
    atol = 0.5 * opts.grad_tol * grid.npixels
    phi, rel, its = pcg(apply_a, rhs, precond, rtol=0.0, atol=atol, maxiter=opts.max_iters)
    phi = phi - phi.mean(axis=(1, 2), keepdims=True)
    value = field_energy_value(mix, xi, phi, grid)
    resid = rhs - apply_a(phi)
    converged = float(np.linalg.norm(resid)) <= atol
    return CellResult(
        value=value,
        minimizer=VectorField(grid, phi),
        iterations=its,
        converged=converged,
        restarts_used=1,
        energy_trace=(value,),
    )


def _solve_multistart(mix, xi, grid, opts, extra_guesses=()):
    guesses = _initial_guesses(grid, mix.m, xi, opts, extra_guesses)
    best = None
    total_trace: list[float] = []
    for phi0 in guesses:
        value, phi, nit, conv, trace = _minimize_once(mix, xi, grid, phi0, opts)
        total_trace.extend(trace)
        if best is None or value < best[0]:
            best = (value, phi, nit, conv)
    value, phi, nit, conv = best
    return CellResult(
        value=value,
        minimizer=VectorField(grid, phi),
        iterations=nit,
        converged=conv,
        restarts_used=len(guesses),
        energy_trace=tuple(total_trace),
    )


def cell_integrand(mix: MixtureDensity, xi, opts: SolverOptions | None = None) -> CellResult:
    """Minimize the one-period mixture energy at macroscopic gradient xi.

    All-quadratic mixtures are solved to the global optimum by preconditioned
    CG; others run `opts.restarts` quasi-Newton descents from the multi-start
    menu and keep the best.  Deterministic for a fixed seed.
    """
    opts = opts or SolverOptions()
    grid = mix.grid
    if grid.j != 1:
        raise ValueError("cell_integrand expects a unit-cell mixture (j = 1); use hom_integrand")
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (mix.m, mix.n):
        raise ValueError(f"xi must be {mix.m} x {mix.n}")
    mix = _apply_eps(mix, opts)
    if all(isinstance(w, Quadratic) for w in mix.phases):
        return _solve_quadratic(mix, xi, grid, opts)
    return _solve_multistart(mix, xi, grid, opts)


def _tile(mix: MixtureDensity, j: int) -> MixtureDensity:
    base = mix.grid
    grid = PeriodicGrid(N=base.N, j=j)
    chi = PhaseMap(grid, mix.chi.n_phases, np.tile(mix.chi.phase, (j, j)))
    return MixtureDensity(mix.phases, chi)


def hom_integrand(
    mix: MixtureDensity,
    xi,
    j_list,
    opts: SolverOptions | None = None,
) -> list[tuple[int, CellResult]]:
    """Cell values on j-fold tilings of a unit-cell mixture, averaged per cell.

    Results come back in the order of `j_list`.  When a previous entry's
    period divides the current one, its minimizer (tiled, and tiled plus a
    small random kick) seeds the multi-start menu: a coarse-periodic field is
    admissible at every multiple, so values cannot go up along refinements,
    and the kick lets the solver break the tiled symmetry.
    """
    opts = opts or SolverOptions()
    if mix.grid.j != 1:
        raise ValueError("hom_integrand expects the unit-cell geometry")
    xi = np.asarray(xi, dtype=float)
    rng = np.random.default_rng(opts.seed + 1)
    results: list[tuple[int, CellResult]] = []
    solved: dict[int, CellResult] = {}
    for j in j_list:
        if j < 1:
            raise ValueError("each j must be >= 1")
        mix_j = _apply_eps(_tile(mix, j), opts)
        if all(isinstance(w, Quadratic) for w in mix_j.phases):
            res = _solve_quadratic(mix_j, xi, mix_j.grid, opts)
        else:
            extra = []
            divisors = [jp for jp in solved if j % jp == 0 and jp < j]
            if divisors:
                jp = max(divisors)
                f = j // jp
                warm = np.tile(solved[jp].minimizer.values, (1, f, f))
                extra.append(warm)
                kick = mix_j.grid.h * max(float(np.linalg.norm(xi)), 1.0)
                extra.append(warm + kick * rng.standard_normal(warm.shape))
            res = _solve_multistart(mix_j, xi, mix_j.grid, opts, extra_guesses=extra)
        solved[j] = res
        results.append((j, res))
    return results


@dataclass(frozen=True)
class MembershipResult:
    member: bool
    certificate: CellResult


def zero_set_membership(
    partition: PhaseMap,
    zero_sets,
    xi,
    tol: float = 1e-4,
    opts: SolverOptions | None = None,
) -> MembershipResult:
    """Does xi admit a periodic field with xi + grad phi in each phase's zero set?

    Builds the squared-distance mixture for the given per-phase atom lists,
    minimizes it, and declares membership when the value drops below `tol`.
    The certificate carries the candidate field either way.
    """
    opts = opts or SolverOptions()
    phases = tuple(DistPower(tuple(zs), p=2.0, eps=0.0) for zs in zero_sets)
    mix = MixtureDensity(phases, partition)
    res = cell_integrand(mix, xi, opts)
    return MembershipResult(member=res.value <= tol, certificate=res)


@dataclass(frozen=True)
class ProbeResult:
    """Sampled cell values along a rank-one line, with a convexity verdict."""

    lambdas: tuple[float, ...]
    values: tuple[float, ...]
    violation: bool
    worst_excess: float
    results: tuple[CellResult, ...] = field(repr=False, default=())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lambda", "value", "converged"])
        for lam, v, r in zip(self.lambdas, self.values, self.results):
            w.writerow([repr(lam), repr(v), int(r.converged)])
        return buf.getvalue()

    def write_svg(self, path) -> None:
        from .svgplot import line_plot

        line_plot(
            path,
            list(self.lambdas),
            [list(self.values)],
            labels=["cell value"],
            title="cell value along rank-one line",
            xlabel="lambda",
        )


def rank_one_probe(
    mix: MixtureDensity,
    xi0,
    a,
    b,
    lambdas,
    opts: SolverOptions | None = None,
) -> ProbeResult:
    """Sample the cell value at xi0 + lambda a (x) b and check chord convexity.

    A violation is flagged when some interior sample exceeds the chord through
    two bracketing samples by more than three times the solver tolerance.
    """
    opts = opts or SolverOptions()
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if not a.any() or not b.any():
        raise ValueError("direction vectors must be nonzero")
    direction = np.outer(a, b)
    lambdas = sorted(float(l) for l in lambdas)
    results = [cell_integrand(mix, np.asarray(xi0, dtype=float) + lam * direction, opts) for lam in lambdas]
    values = [r.value for r in results]
    worst = 0.0
    tol = 3.0 * max(opts.grad_tol, 1e-12)
    for i in range(len(lambdas)):
        for jm in range(i + 1, len(lambdas)):
            for k in range(jm + 1, len(lambdas)):
                t = (lambdas[jm] - lambdas[i]) / (lambdas[k] - lambdas[i])
                chord = (1.0 - t) * values[i] + t * values[k]
                worst = max(worst, values[jm] - chord)
    return ProbeResult(
        lambdas=tuple(lambdas),
        values=tuple(values),
        violation=worst > tol,
        worst_excess=worst,
        results=tuple(results),
    )
