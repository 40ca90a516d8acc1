"""Stored-energy densities with p-growth, their gradients and mixtures.

Three families cover everything the scenarios need:

* ``Quadratic``  -- xi |-> A xihat . xihat with A symmetric positive definite
  acting on the row-major flattening xihat of xi.
* ``DistPower``  -- powers of the distance to a finite atom set, or to the
  segment spanned by two atoms (``hull=True``).  An optional smoothing radius
  eps replaces dist^p by (dist^2 + eps^2)^(p/2) - eps^p, which keeps the zero
  set on the atoms while making the minimizer's job tractable.
* ``PolyMax``    -- max of a matrix-distance power and a determinant-lifted
  distance power; vanishes exactly on its two atoms and is polyconvex for
  p >= 2.

Every density carries declared growth constants alpha = (a1, a2, a3) and an
exponent p with a1*|xi|^p - a2 <= W(xi) <= a3*(1 + |xi|^p); `verify_growth`
spot-checks the declaration by sampling.

Evaluation is vectorized over arrays of matrices of shape (m, n, K); the
fused `value_and_grad_field` is the hot path of the cell solvers and shares
all distance computations between the value and the gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import MedialAxisError
from .microstructure import PhaseMap

__all__ = [
    "EnergyDensity",
    "Quadratic",
    "DistPower",
    "PolyMax",
    "MixtureDensity",
    "GrowthReport",
    "verify_growth",
]


def _as_matrix(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if xi.ndim != 2:
        raise ValueError("expected a single m x n matrix")
    return xi


class EnergyDensity:
    """Common interface: scalar and vectorized evaluation plus gradients."""

    m: int
    n: int
    p: float
    alpha: tuple[float, float, float]

    def value(self, xi) -> float:
        xi = self._check(xi)
        return float(self.value_field(xi[..., None])[0])

    def grad(self, xi) -> np.ndarray:
        xi = self._check(xi)
        return self.grad_field(xi[..., None])[..., 0]

    def value_field(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad_field(self, t: np.ndarray) -> np.ndarray:
        return self.value_and_grad_field(t)[1]

    def value_and_grad_field(self, t: np.ndarray):
        raise NotImplementedError

    def _check(self, xi) -> np.ndarray:
        xi = _as_matrix(xi)
        if xi.shape != (self.m, self.n):
            raise ValueError(f"matrix shape {xi.shape} does not match density shape ({self.m}, {self.n})")
        return xi


@dataclass(frozen=True)
class Quadratic(EnergyDensity):
    """W(xi) = A xihat . xihat on the row-major flattening of xi."""

    A: np.ndarray
    p: float = 2.0
    alpha: tuple[float, float, float] = None  # type: ignore[assignment]

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        if not np.allclose(A, A.T, atol=1e-12):
            raise ValueError("A must be symmetric")
        ev = np.linalg.eigvalsh(A)
        if ev.min() <= 0:
            raise ValueError("A must be positive definite")
        object.__setattr__(self, "A", A)
        d = A.shape[0]
        if d == 2:
            m, n = 1, 2
        elif d == 4:
            m, n = 2, 2
        else:
            raise ValueError("A must act on flattened 1x2 or 2x2 matrices")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "n", n)
        if self.alpha is None:
            object.__setattr__(self, "alpha", (float(ev.min()), 0.0, float(ev.max())))

    def value_field(self, t: np.ndarray) -> np.ndarray:
        flat = t.reshape(self.m * self.n, -1)
        return np.einsum("ak,ak->k", self.A @ flat, flat).reshape(t.shape[2:])

    def value_and_grad_field(self, t: np.ndarray):
        flat = t.reshape(self.m * self.n, -1)
        aflat = self.A @ flat
        val = np.einsum("ak,ak->k", aflat, flat).reshape(t.shape[2:])
        return val, (2.0 * aflat).reshape(t.shape)


def _segment_residual(flat: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Residual t - proj_{[a,b]}(t) for flattened points (d, K) against segment [a, b]."""
    ab = b - a
    denom = float(ab @ ab)
    r = flat - a[:, None]
    if denom == 0.0:
        return r
    s = (ab @ r) / denom
    np.clip(s, 0.0, 1.0, out=s)
    r -= s[None, :] * ab[:, None]
    return r


@dataclass(frozen=True)
class DistPower(EnergyDensity):
    """W(xi) = dist^p(xi, K) with K a finite atom set or the atoms' segment.

    With ``eps > 0`` the smoothed value (dist^2 + eps^2)^(p/2) - eps^p is
    used instead; it is differentiable at the atoms and still vanishes there.
    """

    atoms: tuple[np.ndarray, ...]
    p: float = 2.0
    eps: float = 0.0
    hull: bool = False
    alpha: tuple[float, float, float] = None  # type: ignore[assignment]

    def __post_init__(self):
        atoms = tuple(_as_matrix(a) for a in self.atoms)
        if not atoms:
            raise ValueError("atom list must be non-empty")
        shape = atoms[0].shape
        if any(a.shape != shape for a in atoms):
            raise ValueError("all atoms must share one shape")
        if shape not in ((1, 2), (2, 2)):
            raise ValueError("atoms must be 1x2 or 2x2 matrices")
        if self.p <= 1:
            raise ValueError("exponent p must exceed 1")
        if self.eps < 0:
            raise ValueError("smoothing radius must be >= 0")
        if self.hull and len(atoms) > 2:
            raise ValueError("hull distance is implemented for segments (<= 2 atoms)")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "m", shape[0])
        object.__setattr__(self, "n", shape[1])
        if self.alpha is None:
            M = max(float(np.linalg.norm(a)) for a in atoms)
            a1 = 2.0 ** (1.0 - self.p)
            a2 = M**self.p + self.eps**self.p
            a3 = 2.0 ** (self.p - 1.0) * max(1.0, M**self.p + self.eps**self.p)
            object.__setattr__(self, "alpha", (a1, a2, a3))

    def with_eps(self, eps: float) -> "DistPower":
        return DistPower(self.atoms, self.p, eps, self.hull, self.alpha)

    @cached_property
    def _flat_atoms(self) -> np.ndarray:
        return np.stack([a.ravel() for a in self.atoms])

    def _residual(self, t: np.ndarray):
        """Returns (residual (d, K), dist^2 (K,), second_dist^2 or None)."""
        d = self.m * self.n
        flat = t.reshape(d, -1)
        atoms = self._flat_atoms
        if self.hull and len(self.atoms) == 2:
            res = _segment_residual(flat, atoms[0], atoms[1])
            return res, np.einsum("ak,ak->k", res, res), None
        if len(self.atoms) == 1:
            res = flat - atoms[0][:, None]
            return res, np.einsum("ak,ak->k", res, res), None
        diffs = flat[None, :, :] - atoms[:, :, None]
        d2 = np.einsum("mak,mak->mk", diffs, diffs)
        nearest = np.argmin(d2, axis=0)
        cols = np.arange(flat.shape[1])
        res = diffs[nearest, :, cols].T
        part = np.partition(d2, 1, axis=0)
        return res, part[0], part[1]

    def value_field(self, t: np.ndarray) -> np.ndarray:
        _, d2, _ = self._residual(t)
        if self.eps == 0.0:
            return (d2 ** (self.p / 2.0)).reshape(t.shape[2:])
        return ((d2 + self.eps**2) ** (self.p / 2.0) - self.eps**self.p).reshape(t.shape[2:])

    def value_and_grad_field(self, t: np.ndarray):
        res, d2, d2second = self._residual(t)
        if self.eps == 0.0:
            if d2second is not None:
                d = np.sqrt(d2)
                if np.any(np.sqrt(d2second) - d <= 1e-12):
                    raise MedialAxisError(
                        "gradient requested at a point equidistant from two atoms; use eps > 0"
                    )
            val = d2 ** (self.p / 2.0)
            # d^(p-2) * res -> 0 as d -> 0 for p > 1; mask the 0/0.
            with np.errstate(divide="ignore", invalid="ignore"):
                scale = np.where(d2 > 0.0, d2 ** (self.p / 2.0 - 1.0), 0.0)
        else:
            shifted = d2 + self.eps**2
            val = shifted ** (self.p / 2.0) - self.eps**self.p
            scale = shifted ** (self.p / 2.0 - 1.0)
        g = (self.p * scale)[None, :] * res
        return val.reshape(t.shape[2:]), g.reshape(t.shape)


@dataclass(frozen=True)
class PolyMax(EnergyDensity):
    """Polyconvex density vanishing exactly on its two 2x2 atoms.

    W(xi) = max( dist^p(xi, [a,b]), dist^(p/2)((xi, det xi), [(a, det a), (b, det b)]) ).

    The first term measures matrix distance to the segment joining the atoms,
    the second lifts matrices by their determinant and measures distance to
    the lifted segment; their max vanishes only where both do, i.e. at the
    atoms themselves.
    """

    atoms: tuple[np.ndarray, np.ndarray]
    p: float = 4.0
    alpha: tuple[float, float, float] = None  # type: ignore[assignment]

    m: int = field(default=2, init=False)
    n: int = field(default=2, init=False)

    def __post_init__(self):
        atoms = tuple(_as_matrix(a) for a in self.atoms)
        if len(atoms) != 2 or any(a.shape != (2, 2) for a in atoms):
            raise ValueError("PolyMax needs exactly two 2x2 atoms")
        if self.p < 2:
            raise ValueError("PolyMax needs p >= 2")
        object.__setattr__(self, "atoms", atoms)
        if self.alpha is None:
            M = max(float(np.linalg.norm(a)) for a in atoms)
            a1 = 2.0 ** (1.0 - self.p)
            a2 = M**self.p
            # Lifted branch grows like |xi|^p through det; fold a safety factor in.
            a3 = 2.0**self.p * max(1.0, (M + M**2) ** self.p)
            object.__setattr__(self, "alpha", (a1, a2, a3))

    @cached_property
    def _seg(self):
        a, b = self.atoms
        la = np.append(a.ravel(), a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0])
        lb = np.append(b.ravel(), b[0, 0] * b[1, 1] - b[0, 1] * b[1, 0])
        return a.ravel(), b.ravel(), la, lb

    def _distances(self, t: np.ndarray):
        """Shared geometry: residuals and squared distances of both branches."""
        a, b, la, lb = self._seg
        flat = t.reshape(4, -1)
        det = flat[0] * flat[3] - flat[1] * flat[2]
        r1 = _segment_residual(flat, a, b)
        d1sq = np.einsum("ak,ak->k", r1, r1)
        # Lifted segment handled without materializing a 5-row array twice.
        ab = lb - la
        denom = float(ab @ ab)
        r2 = flat - la[:4, None]
        r2d = det - la[4]
        s = (ab[:4] @ r2 + ab[4] * r2d) / denom
        np.clip(s, 0.0, 1.0, out=s)
        r2 -= s[None, :] * ab[:4, None]
        r2d = r2d - s * ab[4]
        d2sq = np.einsum("ak,ak->k", r2, r2) + r2d**2
        return flat, r1, d1sq, r2, r2d, d2sq

    def value_field(self, t: np.ndarray) -> np.ndarray:
        _, _, d1sq, _, _, d2sq = self._distances(t)
        return np.maximum(d1sq ** (self.p / 2.0), d2sq ** (self.p / 4.0)).reshape(t.shape[2:])

    def value_and_grad_field(self, t: np.ndarray):
        flat, r1, d1sq, r2, r2d, d2sq = self._distances(t)
        v1 = d1sq ** (self.p / 2.0)
        v2 = d2sq ** (self.p / 4.0)
        val = np.maximum(v1, v2)

        with np.errstate(divide="ignore", invalid="ignore"):
            s1 = np.where(d1sq > 0.0, d1sq ** (self.p / 2.0 - 1.0), 0.0)
        g = (self.p * s1)[None, :] * r1

        sel = np.flatnonzero(v2 > v1)
        if sel.size:
            q = self.p / 2.0
            d2b = d2sq[sel]
            with np.errstate(divide="ignore", invalid="ignore"):
                s2 = np.where(d2b > 0.0, d2b ** (q / 2.0 - 1.0), 0.0)
            fb = flat[:, sel]
            # Chain rule through the determinant lift: pull the fifth residual
            # component back with the cofactor matrix.
            cof = np.stack([fb[3], -fb[2], -fb[1], fb[0]])
            g[:, sel] = (q * s2)[None, :] * (r2[:, sel] + r2d[sel][None, :] * cof)
        return val.reshape(t.shape[2:]), g.reshape(t.shape)


@dataclass(frozen=True)
class MixtureDensity:
    """Pixelwise mixture sum_i chi_i(x) W_i(xi) of densities sharing one p."""

    phases: tuple[EnergyDensity, ...]
    chi: PhaseMap

    def __post_init__(self):
        phases = tuple(self.phases)
        if len(phases) != self.chi.n_phases:
            raise ValueError("phase count of chi must equal the number of densities")
        p0 = phases[0].p
        if any(w.p != p0 for w in phases):
            raise ValueError("all phases must share the same growth exponent p")
        mm = {w.m for w in phases}
        nn = {w.n for w in phases}
        if len(mm) != 1 or len(nn) != 1:
            raise ValueError("all phases must share the matrix shape")
        object.__setattr__(self, "phases", phases)

    @property
    def m(self) -> int:
        return self.phases[0].m

    @property
    def n(self) -> int:
        return self.phases[0].n

    @property
    def p(self) -> float:
        return self.phases[0].p

    @property
    def grid(self):
        return self.chi.grid

    @cached_property
    def _phase_pixels(self) -> tuple[np.ndarray, ...]:
        flat = self.chi.phase.ravel()
        return tuple(np.flatnonzero(flat == i) for i in range(len(self.phases)))

    def phase_at(self, pixel: tuple[int, int]) -> EnergyDensity:
        return self.phases[self.chi.phase[pixel]]

    def value(self, pixel: tuple[int, int], xi) -> float:
        return self.phase_at(pixel).value(xi)

    def grad(self, pixel: tuple[int, int], xi) -> np.ndarray:
        return self.phase_at(pixel).grad(xi)

    def masks(self) -> list[np.ndarray]:
        """Boolean pixel masks, one per phase."""
        return [self.chi.phase == i for i in range(len(self.phases))]

    def energy_field(self, t: np.ndarray) -> np.ndarray:
        """Pointwise energy W_chi(x, t(x)) for a matrix field t of shape (m, n, S, S)."""
        shape = t.shape[2:]
        flat = t.reshape(self.m, self.n, -1)
        out = np.zeros(flat.shape[2], dtype=float)
        for w, idx in zip(self.phases, self._phase_pixels):
            if idx.size:
                out[idx] = w.value_field(flat[:, :, idx])
        return out.reshape(shape)

    def grad_energy_field(self, t: np.ndarray) -> np.ndarray:
        return self.energy_and_grad_field(t)[1]

    def energy_and_grad_field(self, t: np.ndarray):
        """Fused pointwise energy and its xi-gradient, shapes (S, S) and (m, n, S, S)."""
        shape = t.shape[2:]
        flat = t.reshape(self.m, self.n, -1)
        out = np.zeros(flat.shape[2], dtype=float)
        gout = np.zeros_like(flat)
        for w, idx in zip(self.phases, self._phase_pixels):
            if idx.size:
                v, g = w.value_and_grad_field(flat[:, :, idx])
                out[idx] = v
                gout[:, :, idx] = g
        return out.reshape(shape), gout.reshape(t.shape)

    def with_eps(self, eps: float) -> "MixtureDensity":
        """Replace the smoothing radius of every DistPower phase."""
        return MixtureDensity(
            tuple(w.with_eps(eps) if isinstance(w, DistPower) else w for w in self.phases),
            self.chi,
        )

    def needs_smoothing(self) -> bool:
        return any(isinstance(w, DistPower) and w.eps == 0.0 for w in self.phases)


@dataclass(frozen=True)
class GrowthReport:
    holds: bool
    coercivity_margin: float
    growth_margin: float


def verify_growth(
    w: EnergyDensity,
    sample_count: int = 200,
    radius: float = 4.0,
    seed: int = 0,
) -> GrowthReport:
    """Sampling check of the declared growth constants.

    Draws `sample_count` matrices uniformly from the Frobenius ball of the
    given radius plus points along random rays out to 8x the radius, and
    reports the worst margins of a1*|xi|^p - a2 <= W <= a3*(1 + |xi|^p).
    A negative margin means the declaration fails at some sample.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    d = w.m * w.n
    pts = rng.standard_normal((sample_count, d))
    pts /= np.maximum(np.linalg.norm(pts, axis=1, keepdims=True), 1e-300)
    radii = radius * rng.random((sample_count, 1)) ** (1.0 / d)
    ball = pts * radii
    ray_dirs = rng.standard_normal((sample_count, d))
    ray_dirs /= np.maximum(np.linalg.norm(ray_dirs, axis=1, keepdims=True), 1e-300)
    ray_radii = radius * (1.0 + 7.0 * rng.random((sample_count, 1)))
    rays = ray_dirs * ray_radii
    samples = np.concatenate([np.zeros((1, d)), ball, rays]).reshape(-1, w.m, w.n)

    t = np.moveaxis(samples, 0, -1)
    vals = w.value_field(t)
    norms = np.linalg.norm(samples.reshape(len(samples), -1), axis=1)
    a1, a2, a3 = w.alpha
    coerc = vals - (a1 * norms**w.p - a2)
    upper = a3 * (1.0 + norms**w.p) - vals
    cm, um = float(coerc.min()), float(upper.min())
    return GrowthReport(holds=cm >= 0.0 and um >= 0.0, coercivity_margin=cm, growth_margin=um)
