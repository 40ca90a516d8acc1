"""Phase geometries: pixel partitions of the cell with exact volume fractions.

All geometries are pixel-aligned, so fractions are whole-pixel counts and the
bookkeeping below is bit-exact: `random_with_fraction` hits its target counts
by largest-remainder rounding, and `adjust_fraction` moves the provably
minimal number of pixels between phases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import IndivisibleScale, NonIntegralFraction
from .grid import PeriodicGrid

__all__ = [
    "PhaseMap",
    "FractionVector",
    "stripe",
    "checkerboard",
    "random_with_fraction",
    "adjust_fraction",
    "oscillate",
    "fractions",
    "largest_remainder_counts",
    "phasemap_to_text",
    "phasemap_from_text",
]


@dataclass(frozen=True)
class PhaseMap:
    """One phase index per pixel (0-based internally, 1-based on disk)."""

    grid: PeriodicGrid
    n_phases: int
    phase: np.ndarray = field(repr=False)

    def __post_init__(self):
        ph = np.asarray(self.phase)
        if ph.shape != (self.grid.size, self.grid.size):
            raise ValueError(f"phase array must be {self.grid.size} x {self.grid.size}")
        if not np.issubdtype(ph.dtype, np.integer):
            raise ValueError("phase indices must be integers")
        if self.n_phases < 1:
            raise ValueError("need at least one phase")
        if ph.min() < 0 or ph.max() >= self.n_phases:
            raise ValueError("phase indices out of range")
        object.__setattr__(self, "phase", ph.astype(np.int16))

    def counts(self) -> np.ndarray:
        return np.bincount(self.phase.ravel(), minlength=self.n_phases)


@dataclass(frozen=True)
class FractionVector:
    theta: tuple[float, ...]

    def __post_init__(self):
        th = tuple(float(t) for t in self.theta)
        if any(t < 0 for t in th):
            raise ValueError("fractions must be non-negative")
        if abs(sum(th) - 1.0) > 1e-12:
            raise ValueError("fractions must sum to 1")
        object.__setattr__(self, "theta", th)

    def __len__(self) -> int:
        return len(self.theta)

    def __getitem__(self, i: int) -> float:
        return self.theta[i]


def largest_remainder_counts(theta, total: int) -> np.ndarray:
    """Integer counts summing to `total`, nearest to theta_i * total.

    Ties in the remainders are broken by ascending phase index, so the result
    is deterministic.
    """
    th = np.asarray([float(t) for t in theta], dtype=float)
    ideal = th * total
    base = np.floor(ideal).astype(int)
    deficit = total - int(base.sum())
    remainders = ideal - base
    order = np.lexsort((np.arange(len(th)), -remainders))
    base[order[:deficit]] += 1
    return base


def stripe(grid: PeriodicGrid, normal_axis: int, fraction) -> PhaseMap:
    """Two-phase slab: phase 0 where y_axis < fraction, phase 1 elsewhere.

    The fraction must be pixel-representable (fraction * j * N integral).
    """
    if normal_axis not in (0, 1):
        raise ValueError("normal_axis must be 0 or 1")
    s = grid.size
    width = float(fraction) * s
    if abs(width - round(width)) > 1e-9:
        raise NonIntegralFraction(f"fraction {fraction} is not a whole number of pixels at size {s}")
    width = int(round(width))
    idx = np.arange(s)
    line = (idx >= width).astype(np.int16)
    phase = line[:, None] if normal_axis == 0 else line[None, :]
    return PhaseMap(grid, 2, np.broadcast_to(phase, (s, s)).copy())


def checkerboard(grid: PeriodicGrid) -> PhaseMap:
    """Four equal sub-squares per unit cell, phases on the two diagonals."""
    if grid.N % 2:
        raise NonIntegralFraction("checkerboard needs an even pixel count per unit cell")
    half = grid.N // 2
    idx = (np.arange(grid.size) // half) % 2
    phase = (idx[:, None] ^ idx[None, :]).astype(np.int16)
    return PhaseMap(grid, 2, phase)


def random_with_fraction(grid: PeriodicGrid, theta: FractionVector, seed: int) -> PhaseMap:
    """Uniformly shuffled phase map whose pixel counts hit theta exactly."""
    counts = largest_remainder_counts(theta.theta, grid.npixels)
    labels = np.repeat(np.arange(len(counts), dtype=np.int16), counts)
    rng = np.random.default_rng(seed)
    rng.shuffle(labels)
    return PhaseMap(grid, len(counts), labels.reshape(grid.size, grid.size))


def _origin_sweep_order(size: int) -> np.ndarray:
    """Flat pixel indices sorted by squared distance to the corner (0,0).

    Lexicographic (i0, i1) order breaks ties, mirroring a deterministic
    ball-growing sweep from the cell corner.
    """
    i0, i1 = np.divmod(np.arange(size * size), size)
    return np.lexsort((i1, i0, i0 * i0 + i1 * i1))


def adjust_fraction(chi: PhaseMap, theta_target) -> PhaseMap:
    """Reassign the minimal number of pixels so counts match theta_target.

    Over-represented phases keep their pixels nearest the cell corner and
    give up the farthest ones; the freed pixels are handed to phases below
    target, in ascending phase order.  The number of modified pixels is
    exactly sum_i max(0, count_i - target_i) = total * sum|theta - theta_k|/2.
    """
    theta = theta_target.theta if isinstance(theta_target, FractionVector) else theta_target
    if len(theta) != chi.n_phases:
        raise ValueError("target fraction length must match the phase count")
    target = largest_remainder_counts(theta, chi.grid.npixels)
    current = chi.counts()
    flat = chi.phase.ravel().copy()
    sweep = _origin_sweep_order(chi.grid.size)

    pool: list[np.ndarray] = []
    for i in range(chi.n_phases):
        surplus = current[i] - target[i]
        if surplus > 0:
            mine = sweep[flat[sweep] == i]
            pool.append(mine[len(mine) - surplus :])
    if pool:
        # Reorder the pool by the same corner sweep for determinism.
        freed = np.concatenate(pool)
        freed = freed[np.argsort(_rank_in(sweep, freed))]
        start = 0
        for i in range(chi.n_phases):
            deficit = target[i] - current[i]
            if deficit > 0:
                flat[freed[start : start + deficit]] = i
                start += deficit
    return PhaseMap(chi.grid, chi.n_phases, flat.reshape(chi.phase.shape))


def _rank_in(order: np.ndarray, items: np.ndarray) -> np.ndarray:
    pos = np.empty(len(order), dtype=int)
    pos[order] = np.arange(len(order))
    return pos[items]


def oscillate(chi: PhaseMap, k: int) -> PhaseMap:
    """Squeeze the pattern by k: the result samples chi at k-times the rate.

    Pixel i of the result carries chi(k*i mod size).  Requires k | N; exact
    fraction preservation additionally needs the pattern constant on the
    stride-k sublattice's blocks, which all pixel-aligned generators here
    satisfy when their widths are multiples of k.
    """
    if k < 1:
        raise ValueError("k must be positive")
    if chi.grid.N % k:
        raise IndivisibleScale(f"k = {k} does not divide N = {chi.grid.N}")
    s = chi.grid.size
    idx = (k * np.arange(s)) % s
    return PhaseMap(chi.grid, chi.n_phases, chi.phase[np.ix_(idx, idx)])


def fractions(chi: PhaseMap) -> FractionVector:
    return FractionVector(tuple(chi.counts() / chi.grid.npixels))


_HEADER = "gclosure-phasemap v1"


def phasemap_to_text(chi: PhaseMap) -> str:
    """Serialize with header ``gclosure-phasemap v1 n=2 N=.. j=.. phases=..``.

    Phase indices are written 1-based, row-major.
    """
    head = f"{_HEADER} n=2 N={chi.grid.N} j={chi.grid.j} phases={chi.n_phases}"
    body = "\n".join(" ".join(str(v + 1) for v in row) for row in chi.phase)
    return head + "\n" + body + "\n"


def phasemap_from_text(text: str) -> PhaseMap:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith(_HEADER):
        raise ValueError("not a gclosure-phasemap v1 file")
    fields = dict(tok.split("=") for tok in lines[0].split()[2:])
    grid = PeriodicGrid(N=int(fields["N"]), j=int(fields["j"]))
    n_phases = int(fields["phases"])
    rows = [[int(v) - 1 for v in ln.split()] for ln in lines[1:]]
    return PhaseMap(grid, n_phases, np.asarray(rows, dtype=np.int16))
