"""Atomic measures on 2x2 matrices, rank-one splittings and empirical estimates.

The four-matrix configuration diag(-1,-3), diag(-3,1), diag(1,3), diag(3,-1)
has no rank-one connections between its members, yet iterated equal rank-one
splittings starting from diag(-1,-1) concentrate mass on it with limiting
weights (8, 4, 2, 1)/15.  All bookkeeping for that construction runs in exact
rational arithmetic: the residual after d full cycles is exactly 16**-d.

`estimate_young` is the empirical counterpart: it classifies the per-pixel
matrices of a gradient field to a list of candidate atoms and reports the
resulting weights, the off-support fraction and the raw barycenter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .grid import GradientField

__all__ = [
    "DiscreteMeasure",
    "Laminate",
    "LaminateNode",
    "barycenter",
    "rank_one_connected",
    "tartar_square",
    "tartar_staircase",
    "estimate_young",
    "YoungEstimate",
    "measure_to_csv",
    "laminate_to_text",
]

RANK_ONE_TOL = 1e-12


def _matrix(entries) -> np.ndarray:
    a = np.asarray(entries)
    if a.shape != (2, 2):
        raise ValueError("atoms must be 2x2 matrices")
    return a


def _det(a: np.ndarray):
    return a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]


def _is_exact(a: np.ndarray) -> bool:
    return a.dtype == object or np.issubdtype(a.dtype, np.integer)


def _same_matrix(a: np.ndarray, b: np.ndarray) -> bool:
    if _is_exact(a) and _is_exact(b):
        return bool(np.all(a == b))
    return bool(np.allclose(np.asarray(a, float), np.asarray(b, float), atol=1e-12))


@dataclass(frozen=True)
class DiscreteMeasure:
    """Atomic probability measure: pairwise-distinct atoms with weights summing to 1."""

    atoms: tuple[np.ndarray, ...]
    weights: tuple

    def __post_init__(self):
        atoms = tuple(_matrix(a) for a in self.atoms)
        weights = tuple(self.weights)
        if len(atoms) != len(weights):
            raise ValueError("need one weight per atom")
        if any(w < 0 for w in weights):
            raise ValueError("weights must be non-negative")
        total = sum(weights)
        exact = all(isinstance(w, (Fraction, int)) for w in weights)
        if exact and total != 1:
            raise ValueError("weights must sum to 1")
        if not exact and abs(float(total) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        for i in range(len(atoms)):
            for k in range(i + 1, len(atoms)):
                if _same_matrix(atoms[i], atoms[k]):
                    raise ValueError("atoms must be pairwise distinct")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)


def barycenter(mu: DiscreteMeasure) -> np.ndarray:
    """First moment sum_i weight_i * atom_i; exact when atoms and weights are rational."""
    out = None
    for a, w in zip(mu.atoms, mu.weights):
        term = w * a
        out = term if out is None else out + term
    return out


def rank_one_connected(x, y) -> bool:
    """True iff x != y and det(x - y) vanishes (to 1e-12 in floats, exactly otherwise)."""
    x = _matrix(x)
    y = _matrix(y)
    diff = x - y
    if _is_exact(diff):
        if np.all(diff == 0):
            return False
        return _det(diff) == 0
    if np.allclose(np.asarray(diff, float), 0.0, atol=RANK_ONE_TOL):
        return False
    return abs(float(_det(diff))) <= RANK_ONE_TOL


def _f(x) -> Fraction:
    return Fraction(x)


def tartar_square() -> DiscreteMeasure:
    """The four-atom measure with weights (8, 4, 2, 1)/15 and barycenter diag(-1,-1)."""
    atoms = (
        np.array([[_f(-1), _f(0)], [_f(0), _f(-3)]], dtype=object),
        np.array([[_f(-3), _f(0)], [_f(0), _f(1)]], dtype=object),
        np.array([[_f(1), _f(0)], [_f(0), _f(3)]], dtype=object),
        np.array([[_f(3), _f(0)], [_f(0), _f(-1)]], dtype=object),
    )
    weights = (Fraction(8, 15), Fraction(4, 15), Fraction(2, 15), Fraction(1, 15))
    return DiscreteMeasure(atoms, weights)


@dataclass(frozen=True)
class LaminateNode:
    """Node of a rank-one splitting tree; exact rational entries throughout."""

    matrix: np.ndarray
    weight: Fraction
    lam: Fraction | None = None
    left: "LaminateNode | None" = None
    right: "LaminateNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def __post_init__(self):
        if (self.left is None) != (self.right is None) or (self.left is None) != (self.lam is None):
            raise ValueError("a split needs lam and both children")
        if self.lam is not None:
            if not 0 < self.lam < 1:
                raise ValueError("split weight must lie in (0, 1)")
            combo = self.lam * self.left.matrix + (1 - self.lam) * self.right.matrix
            if not _same_matrix(combo, self.matrix):
                raise ValueError("split does not preserve the barycenter")
            if self.left.weight != self.weight * self.lam or self.right.weight != self.weight * (1 - self.lam):
                raise ValueError("child masses do not match the split weights")
            diff = self.left.matrix - self.right.matrix
            if _is_exact(diff):
                if _det(diff) != 0 or np.all(diff == 0):
                    raise ValueError("children are not rank-one connected")
            elif abs(float(_det(diff))) > RANK_ONE_TOL:
                raise ValueError("children are not rank-one connected")


@dataclass(frozen=True)
class Laminate:
    """Rank-one splitting tree with total mass 1 at the root."""

    root: LaminateNode

    def __post_init__(self):
        if self.root.weight != 1:
            raise ValueError("root weight must be 1")

    def leaves(self) -> list[tuple[np.ndarray, Fraction]]:
        out: list[tuple[np.ndarray, Fraction]] = []

        def walk(node: LaminateNode):
            if node.is_leaf:
                out.append((node.matrix, node.weight))
            else:
                walk(node.left)
                walk(node.right)

        walk(self.root)
        return out

    def leaf_measure(self) -> DiscreteMeasure:
        """Aggregate the leaves, merging repeated atoms."""
        atoms: list[np.ndarray] = []
        weights: list[Fraction] = []
        for mat, mass in self.leaves():
            for i, a in enumerate(atoms):
                if _same_matrix(a, mat):
                    weights[i] += mass
                    break
            else:
                atoms.append(mat)
                weights.append(mass)
        return DiscreteMeasure(tuple(atoms), tuple(weights))


def _split_partner(parent: np.ndarray, atom: np.ndarray) -> np.ndarray:
    """Solve parent = (atom + partner)/2 and insist the split is rank-one.

    This re-derives the intermediate staircase points from the midpoint
    equations instead of hard-coding them.
    """
    partner = 2 * parent - atom
    diff = atom - partner
    if _det(diff) != 0 or np.all(diff == 0):
        raise ValueError("equal split is not rank-one connected; construction breaks")
    return partner


def tartar_staircase(depth: int) -> Laminate:
    """Order-`depth` staircase laminate generating the four-atom measure.

    Starting from diag(-1,-1), each stage splits the running remainder
    equally into the next atom and the rank-one-forced partner point,
    cycling through the four atoms `depth` times.  Leaf masses after d
    cycles are (1/2**i) * (1 - 16**-d) / (1 - 1/16) on atom i with a
    16**-d residual left at the start.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    square = tartar_square()
    atoms = list(square.atoms)
    start = np.array([[_f(-1), _f(0)], [_f(0), _f(-1)]], dtype=object)

    def build(current: np.ndarray, stage: int, mass: Fraction) -> LaminateNode:
        if stage == 4 * depth:
            return LaminateNode(matrix=current, weight=mass)
        atom = atoms[stage % 4]
        partner = _split_partner(current, atom)
        half = mass * Fraction(1, 2)
        left = LaminateNode(matrix=atom, weight=half)
        right = build(partner, stage + 1, half)
        return LaminateNode(matrix=current, weight=mass, lam=Fraction(1, 2), left=left, right=right)

    return Laminate(root=build(start, 0, _f(1)))


@dataclass(frozen=True)
class YoungEstimate:
    measure: DiscreteMeasure
    off_support_fraction: float
    barycenter: np.ndarray
    classified_fractions: tuple[float, ...]


def estimate_young(g: GradientField, atoms: Sequence, tol: float = 1e-6) -> YoungEstimate:
    """Classify each pixel's matrix to the nearest atom within `tol`.

    Pixels farther than `tol` from every atom count as off-support.  The
    returned measure renormalizes the classified fractions; the barycenter is
    the raw average of the gradient field, reported separately so it can be
    compared against the macroscopic gradient.
    """
    mats = [np.asarray(_matrix(a), dtype=float) for a in atoms]
    for i in range(len(mats)):
        for k in range(i + 1, len(mats)):
            if _same_matrix(mats[i], mats[k]):
                raise ValueError("atoms must be pairwise distinct")
    vals = g.values  # (m, 2, S, S)
    if vals.shape[0] != 2:
        raise ValueError("estimate_young expects 2x2 gradients")
    npix = vals.shape[-1] * vals.shape[-2]
    flat = vals.reshape(4, npix)
    stack = np.stack([m.ravel() for m in mats])  # (k, 4)
    d2 = ((flat[None, :, :] - stack[:, :, None]) ** 2).sum(axis=1)
    nearest = np.argmin(d2, axis=0)
    dmin = np.sqrt(d2[nearest, np.arange(npix)])
    on = dmin <= tol
    counts = np.bincount(nearest[on], minlength=len(mats))
    classified = counts / npix
    off = 1.0 - float(on.mean())
    total = counts.sum()
    if total:
        keep = counts > 0
        measure = DiscreteMeasure(
            tuple(m for m, k in zip(mats, keep) if k),
            tuple(float(c) / total for c, k in zip(counts, keep) if k),
        )
    else:
        # Nothing classified: fall back to a point mass at the raw mean.
        measure = DiscreteMeasure((flat.mean(axis=1).reshape(2, 2),), (1.0,))
    return YoungEstimate(
        measure=measure,
        off_support_fraction=off,
        barycenter=flat.mean(axis=1).reshape(2, 2),
        classified_fractions=tuple(classified),
    )


def measure_to_csv(mu: DiscreteMeasure) -> str:
    lines = ["a11,a12,a21,a22,weight"]
    for a, w in zip(mu.atoms, mu.weights):
        af = np.asarray(a, dtype=float).ravel()
        lines.append(",".join(repr(float(v)) for v in af) + f",{float(w)!r}")
    return "\n".join(lines) + "\n"


def laminate_to_text(lam: Laminate) -> str:
    """Indented tree dump: matrix, mass and split weight per node."""
    lines: list[str] = []

    def fmt(mat) -> str:
        flat = np.asarray(mat).ravel()
        return "[" + " ".join(str(v) for v in flat) + "]"

    def walk(node: LaminateNode, indent: int):
        head = " " * indent + fmt(node.matrix) + f" mass={node.weight}"
        if not node.is_leaf:
            head += f" lam={node.lam}"
        lines.append(head)
        if not node.is_leaf:
            walk(node.left, indent + 2)
            walk(node.right, indent + 2)

    walk(lam.root, 0)
    return "\n".join(lines) + "\n"
