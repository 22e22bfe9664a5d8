"""Atomic probability measures on the intensity interval [-1, 1]."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .errors import BadParameter, NoAdmissibleSubset

NORMALIZATION_TOL = 1e-12
MAX_SUBSET_ATOMS = 20


@dataclass(frozen=True)
class IntensityMeasure:
    """Weighted atoms ``sum_i w_i delta_{alpha_i}`` with strictly increasing alphas.

    Use :meth:`from_atoms` to build one from unsorted or duplicated input;
    the raw constructor validates but does not canonicalize.
    """

    alphas: tuple[float, ...]
    weights: tuple[float, ...]
    normalized: bool = True

    def __post_init__(self):
        if len(self.alphas) != len(self.weights):
            raise BadParameter("alphas and weights differ in length")
        for a, w in zip(self.alphas, self.weights):
            if not (-1.0 <= a <= 1.0) or not math.isfinite(a):
                raise BadParameter(f"alpha {a} outside [-1, 1]")
            if not (w > 0.0) or not math.isfinite(w):
                raise BadParameter(f"weight {w} must be positive")
        if any(b <= a for a, b in zip(self.alphas, self.alphas[1:])):
            raise BadParameter("alphas must be strictly increasing")
        if self.normalized:
            if not self.alphas:
                raise BadParameter("a probability measure needs at least one atom")
            if abs(math.fsum(self.weights) - 1.0) > NORMALIZATION_TOL:
                raise BadParameter(f"weights sum to {math.fsum(self.weights)!r}, not 1")

    @classmethod
    def from_atoms(cls, atoms: Iterable[tuple[float, float]], normalized=True):
        """Canonicalize ``(alpha, weight)`` pairs: sort and merge duplicate alphas."""
        merged: dict[float, float] = {}
        for a, w in atoms:
            a, w = float(a), float(w)
            if w <= 0.0:
                raise BadParameter(f"weight {w} must be positive")
            merged[a] = merged.get(a, 0.0) + w
        keys = sorted(merged)
        return cls(tuple(keys), tuple(merged[k] for k in keys), normalized)

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.alphas, self.weights))

    @property
    def total(self) -> float:
        return math.fsum(self.weights)

    def __len__(self):
        return len(self.alphas)

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.alphas, dtype=float), np.asarray(self.weights, dtype=float)

    def support_hits_endpoint(self) -> bool:
        """True when 1 or -1 is an atom (supp P meets {-1, 1})."""
        return 1.0 in self.alphas or -1.0 in self.alphas


def integrate(P: IntensityMeasure, f: Callable[[float], float]) -> float:
    """Return ``sum_i w_i f(alpha_i)``."""
    return math.fsum(w * f(a) for a, w in P.atoms)


def restrict(P: IntensityMeasure, sign: str) -> IntensityMeasure:
    """Restrict to I+ = [0, 1] (``'+'``) or I- = [-1, 0) (``'-'``), unnormalized."""
    if sign == "+":
        keep = [(a, w) for a, w in P.atoms if a >= 0.0]
    elif sign == "-":
        keep = [(a, w) for a, w in P.atoms if a < 0.0]
    else:
        raise BadParameter(f"sign must be '+' or '-', got {sign!r}")
    return IntensityMeasure(
        tuple(a for a, _ in keep), tuple(w for _, w in keep), normalized=False
    )


def _subset_ratio(atoms):
    mass = math.fsum(w for _, w in atoms)
    moment = math.fsum(a * w for a, w in atoms)
    if moment * moment == 0.0:  # underflowed moments give no usable bound
        return None
    return 8.0 * math.pi * mass / moment**2


def best_constant_terms(P: IntensityMeasure):
    """Yield ``(subset, ratio)`` for every admissible atom subset of I+ and of I-."""
    for sign in ("+", "-"):
        side = restrict(P, sign).atoms
        if len(side) > MAX_SUBSET_ATOMS:
            raise BadParameter(
                f"{len(side)} atoms on side {sign}; subset enumeration capped at {MAX_SUBSET_ATOMS}"
            )
        for k in range(1, len(side) + 1):
            for subset in itertools.combinations(side, k):
                ratio = _subset_ratio(subset)
                if ratio is not None:
                    yield subset, ratio


def best_constant_J(P: IntensityMeasure) -> float:
    """Infimum of 8 pi P(K) / (int_K alpha dP)^2 over atom subsets K of one sign."""
    return best_constant_subset(P)[1]


def best_constant_subset(P: IntensityMeasure):
    """Like :func:`best_constant_J` but also return the minimizing subset."""
    best = None
    for subset, ratio in best_constant_terms(P):
        if best is None or ratio < best[1]:
            best = (subset, ratio)
    if best is None:
        raise NoAdmissibleSubset("every atom subset has zero first moment")
    return best


def preset(name: str, **params) -> IntensityMeasure:
    """Named measures: ``dirac_one``, ``two_mass(t)``, ``uniform_quadrature(n)``."""
    if name == "dirac_one":
        return IntensityMeasure((1.0,), (1.0,))
    if name == "two_mass":
        t = float(params.get("t", 0.5))
        if not (0.0 <= t <= 1.0):
            raise BadParameter("t not in [0,1]")
        if t == 1.0:
            return IntensityMeasure((1.0,), (1.0,))
        if t == 0.0:
            return IntensityMeasure((-1.0,), (1.0,))
        return IntensityMeasure((-1.0, 1.0), (1.0 - t, t))
    if name == "uniform_quadrature":
        n = params.get("n", 1)
        if int(n) != n or n < 1:
            raise BadParameter("n must be a positive integer")
        n = int(n)
        # midpoints of n equal cells on [-1, 1]
        alphas = tuple(-1.0 + (2 * i + 1) / n for i in range(n))
        return IntensityMeasure(alphas, (1.0 / n,) * n)
    raise BadParameter(f"unknown measure preset {name!r}")


def dumps(P: IntensityMeasure) -> str:
    return "".join(f"{a!r} {w!r}\n" for a, w in P.atoms)


def loads(text: str) -> IntensityMeasure:
    atoms = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise BadParameter(f"line {lineno}: expected 'alpha weight'")
        try:
            atoms.append((float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise BadParameter(f"line {lineno}: {exc}") from None
    return IntensityMeasure.from_atoms(atoms)


def save(P: IntensityMeasure, path) -> None:
    Path(path).write_text(dumps(P), encoding="ascii")


def load(path) -> IntensityMeasure:
    return loads(Path(path).read_text(encoding="ascii"))
