"""Concentration diagnostics: bubbles, peaks, ball masses and quantization."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import meanfield as mf
from .errors import BadParameter, BadRadius, OverlappingBalls, Unsupported
from .field import TorusGrid
from .meanfield import ProblemSpec

SCHEMA_VERSION = 1
MIN_MASS = 4 * math.pi
DEFAULT_RADII = (0.5, 0.35, 0.25)


class UnderResolvedWarning(UserWarning):
    pass


@dataclass(frozen=True)
class BubbleSpec:
    center: tuple[float, float]
    scale: float
    sign: int = 1

    def __post_init__(self):
        if not self.scale > 0:
            raise BadParameter("bubble scale must be positive")
        if self.sign not in (1, -1):
            raise BadParameter("bubble sign must be +1 or -1")


def max_resolved_scale(grid: TorusGrid) -> float:
    return grid.N / (4 * grid.L) * 2 * math.pi


def grid_center(grid: TorusGrid) -> tuple[float, float]:
    """Cell center nearest the middle of the domain."""
    c = float(grid.axis[grid.N // 2])
    return (c, c)


def liouville_density(grid: TorusGrid, spec: BubbleSpec) -> np.ndarray:
    """``8 mu^2 / (1 + mu^2 d^2)^2`` with ``d`` the torus distance to the center."""
    d = grid.distance(spec.center)
    mu2 = spec.scale**2
    return 8 * mu2 / (1 + mu2 * d**2) ** 2


def liouville_bubble(grid: TorusGrid, spec: BubbleSpec) -> np.ndarray:
    """Mean-zero ``sign * log(8 mu^2 / (1 + mu^2 d^2)^2)``."""
    if spec.scale > max_resolved_scale(grid):
        warnings.warn(
            f"bubble scale {spec.scale} exceeds resolvable scale {max_resolved_scale(grid):.3g}",
            UnderResolvedWarning,
            stacklevel=2,
        )
    d = grid.distance(spec.center)
    u = math.log(8 * spec.scale**2) - 2 * np.log1p(spec.scale**2 * d**2)
    u = u - np.mean(u)
    return spec.sign * u


def detect_peaks(grid: TorusGrid, v, threshold: float):
    """Strict local maxima above ``threshold`` and minima below ``-threshold``.

    Peaks are cell-center coordinates, sorted lexicographically.
    """
    v = grid.check(v)
    neighbours = [
        np.roll(np.roll(v, di, axis=0), dj, axis=1)
        for di in (-1, 0, 1)
        for dj in (-1, 0, 1)
        if (di, dj) != (0, 0)
    ]
    nb = np.stack(neighbours)
    is_max = np.all(v > nb, axis=0) & (v > threshold)
    is_min = np.all(v < nb, axis=0) & (v < -threshold)
    ax = grid.axis

    def points(mask):
        return sorted((float(ax[i]), float(ax[j])) for i, j in zip(*np.nonzero(mask)))

    return points(is_max), points(is_min)


def ball_mass(grid: TorusGrid, density, p, r: float) -> float:
    if not (0 < r < grid.L / 2):
        raise BadRadius(f"radius {r} not in (0, L/2)")
    mask = grid.distance(p) < r
    return float(np.sum(density[mask]) * grid.cell_area)


def extrapolate_r2(radii, masses) -> float:
    """Least-squares line in r^2, evaluated at r = 0."""
    radii = np.asarray(radii, dtype=float)
    masses = np.asarray(masses, dtype=float)
    if len(radii) == 1:
        return float(masses[0])
    slope, intercept = np.polyfit(radii**2, masses, 1)
    return float(intercept)


@dataclass
class BlowupReport:
    alphas: list[float]
    weights: list[float]
    peaks_plus: list[tuple[float, float]]
    peaks_minus: list[tuple[float, float]]
    n_plus: list[float]
    n_minus: list[float]
    zeta_atoms: list[list[tuple[float, float]]]
    quantization_residual: list[float]
    s_plus_field: np.ndarray
    s_minus_field: np.ndarray
    k_estimate: list[np.ndarray]
    c0_estimate: float
    radii: list[float]
    peak_values: list[float] = dc_field(default_factory=list)

    @property
    def peaks(self):
        return list(self.peaks_plus) + list(self.peaks_minus)

    def to_dict(self, grid: TorusGrid | None = None) -> dict:
        d = {
            "schema": "mflab.blowup_report",
            "schema_version": SCHEMA_VERSION,
            "alphas": list(self.alphas),
            "weights": list(self.weights),
            "peaks_plus": [list(p) for p in self.peaks_plus],
            "peaks_minus": [list(p) for p in self.peaks_minus],
            "n_plus": list(self.n_plus),
            "n_minus": list(self.n_minus),
            "zeta_atoms": [[list(a) for a in z] for z in self.zeta_atoms],
            "quantization_residual": list(self.quantization_residual),
            "k_estimate": [float(np.max(k)) for k in self.k_estimate],
            "c0_estimate": self.c0_estimate,
            "radii": list(self.radii),
            "peak_values": list(self.peak_values),
        }
        if grid is not None:
            d["s_plus_mass"] = grid.integrate(self.s_plus_field)
            d["s_minus_mass"] = grid.integrate(self.s_minus_field)
        return d

    def to_json(self, grid: TorusGrid | None = None) -> str:
        return json.dumps(self.to_dict(grid), indent=2, sort_keys=True)

    def mass_table_csv(self) -> str:
        rows = ["peak,sign,x1,x2,alpha,zeta_mass,n_plus,n_minus,quantization_residual"]
        signs = ["+"] * len(self.peaks_plus) + ["-"] * len(self.peaks_minus)
        for k, (p, s) in enumerate(zip(self.peaks, signs)):
            for a, m in self.zeta_atoms[k]:
                rows.append(
                    f"{k},{s},{p[0]!r},{p[1]!r},{a!r},{m!r},{self.n_plus[k]!r},"
                    f"{self.n_minus[k]!r},{self.quantization_residual[k]!r}"
                )
        return "\r\n".join(rows) + "\r\n"


def estimate_masses(spec: ProblemSpec, v, peaks, r_schedule=None) -> BlowupReport:
    """Estimate the concentrated masses at ``peaks = (plus_points, minus_points)``.

    For each peak and atom the ball mass of the product-measure density is
    extrapolated to r = 0 linearly in r^2. The returned ``zeta_atoms`` hold
    measure masses ``w_i * zeta_p(alpha_i)``, so ``n_{+,p}`` is the sum of
    ``|alpha| * mass`` over nonnegative alphas.
    """
    grid = spec.grid
    v = grid.check(v)
    if r_schedule is None:
        r_schedule = [r * grid.L / (2 * math.pi) for r in DEFAULT_RADII]
    radii = sorted((float(r) for r in r_schedule), reverse=True)
    for r in radii:
        if not (0 < r < grid.L / 2):
            raise BadRadius(f"radius {r} not in (0, L/2)")
    plus, minus = [tuple(p) for p in peaks[0]], [tuple(p) for p in peaks[1]]
    plus.sort()
    minus.sort()
    all_peaks = plus + minus
    rmax = radii[0]
    for i in range(len(all_peaks)):
        for j in range(i + 1, len(all_peaks)):
            if grid.torus_distance(all_peaks[i], all_peaks[j]) < 2 * rmax:
                raise OverlappingBalls(
                    f"peaks {all_peaks[i]} and {all_peaks[j]} closer than {2 * rmax}"
                )

    alphas, weights = spec.measure.as_arrays()
    mus = mf.mu_product_densities(spec, v)
    nu_plus, nu_minus = mf.nu_densities(spec, v)
    v_over_alpha = mf.potential_over_alpha(spec, v)

    n_plus, n_minus, zetas, qres, values = [], [], [], [], []
    for p in all_peaks:
        atoms = []
        for a, w, dens in zip(alphas, weights, mus):
            masses = [ball_mass(grid, dens, p, r) for r in radii]
            z = max(extrapolate_r2(radii, masses), 0.0)
            atoms.append((float(a), float(w * z)))
        npl = math.fsum(abs(a) * m for a, m in atoms if a >= 0)
        nmi = math.fsum(abs(a) * m for a, m in atoms if a < 0)
        total = math.fsum(m for _, m in atoms)
        moment = math.fsum(a * m for a, m in atoms)
        zetas.append(atoms)
        n_plus.append(npl)
        n_minus.append(nmi)
        qres.append(8 * math.pi * total - moment**2)
        values.append(float(v[grid.cell_index(p)]))

    outside = np.ones_like(v, dtype=bool)
    for p in all_peaks:
        outside &= grid.distance(p) >= rmax
    s_plus = np.where(outside, nu_plus, 0.0)
    s_minus = np.where(outside, nu_minus, 0.0)
    k_fields = [np.full_like(v, a * q) for a, q in zip(alphas, v_over_alpha)]
    c0 = math.fsum(
        w * a * grid.integrate(m) for a, w, m in zip(alphas, weights, mus)
    ) / grid.area

    return BlowupReport(
        alphas=alphas.tolist(),
        weights=weights.tolist(),
        peaks_plus=plus,
        peaks_minus=minus,
        n_plus=n_plus,
        n_minus=n_minus,
        zeta_atoms=zetas,
        quantization_residual=qres,
        s_plus_field=s_plus,
        s_minus_field=s_minus,
        k_estimate=k_fields,
        c0_estimate=c0,
        radii=radii,
        peak_values=values,
    )


@dataclass(frozen=True)
class QuantizationFamily:
    """Two-atom solutions of ``8 pi (c+ + c-) = (a+ c+ + a- c-)^2``."""

    alpha_plus: float
    alpha_minus: float

    def residual(self, c_plus, c_minus) -> float:
        return 8 * math.pi * (c_plus + c_minus) - (
            self.alpha_plus * c_plus + self.alpha_minus * c_minus
        ) ** 2

    def minus_masses(self, c_plus: float) -> list[float]:
        """Nonnegative ``c-`` completing ``c+`` (zero, one or two roots)."""
        if c_plus < 0:
            raise BadParameter("c_plus must be nonnegative")
        ap, am = self.alpha_plus, self.alpha_minus
        A = am**2
        B = 2 * ap * am * c_plus - 8 * math.pi
        C = ap**2 * c_plus**2 - 8 * math.pi * c_plus
        if A == 0:
            roots = [] if B == 0 else [-C / B]
        else:
            disc = B * B - 4 * A * C
            if disc < 0:
                return []
            sq = math.sqrt(disc)
            # cancellation-free pair of roots
            q = -0.5 * (B + math.copysign(sq, B))
            roots = [q / A, C / q] if q != 0 else [0.0]
        return sorted({max(r, 0.0) for r in roots if r >= -1e-12 * max(1.0, abs(c_plus))})

    def n_values(self, c_plus, c_minus) -> tuple[float, float]:
        """``(n_+, n_-)`` contributions ``|alpha| c`` on each side."""
        parts = {+1: 0.0, -1: 0.0}
        for a, c in ((self.alpha_plus, c_plus), (self.alpha_minus, c_minus)):
            parts[1 if a >= 0 else -1] += abs(a) * c
        return parts[1], parts[-1]


@dataclass(frozen=True)
class SingleAtomQuantization:
    alpha: float
    mass: float
    n: float


def quantization_solve(support):
    """Masses compatible with ``8 pi int zeta = (int alpha zeta)^2``.

    One atom gives ``c = 8 pi / alpha^2``; two atoms give a
    :class:`QuantizationFamily` parameterized by the mass at the first atom.
    """
    alphas = [float(a) for a in support]
    if len(alphas) == 1:
        a = alphas[0]
        if a == 0.0 or not (-1 <= a <= 1):
            raise BadParameter("single-atom support needs alpha in [-1, 1] \\ {0}")
        c = 8 * math.pi / a**2
        return SingleAtomQuantization(a, c, abs(a) * c)
    if len(alphas) == 2:
        if alphas[0] == alphas[1]:
            raise BadParameter("two-atom support needs distinct alphas")
        return QuantizationFamily(alphas[0], alphas[1])
    raise Unsupported(
        f"{len(alphas)}-atom supports have no closed form; evaluate quantization_residual instead"
    )


def quantization_residual(atoms) -> float:
    """``8 pi sum c_i - (sum alpha_i c_i)^2`` for ``(alpha, mass)`` pairs."""
    total = math.fsum(c for _, c in atoms)
    moment = math.fsum(a * c for a, c in atoms)
    return 8 * math.pi * total - moment**2


@dataclass
class VanishingProbe:
    sup_k: list[list[float]]  # [report][atom]
    decay_factor: list[float]  # per atom, first / last
    slopes: list[float] | None
    hypothesis_met: bool
    consistent_with_vanishing: bool

    def to_csv(self, scales=None) -> str:
        rows = ["report,scale,atom,sup_k"]
        for r, row in enumerate(self.sup_k):
            s = "" if scales is None else repr(float(scales[r]))
            for i, val in enumerate(row):
                rows.append(f"{r},{s},{i},{val!r}")
        return "\r\n".join(rows) + "\r\n"


def residual_vanishing_probe(grid: TorusGrid, reports, scales=None, min_decay=10.0) -> VanishingProbe:
    """Tabulate ``sup |k_n|`` away from the peaks along a concentrating sequence.

    ``consistent_with_vanishing`` requires every atom's sup to drop by at
    least ``min_decay`` between the first and last report, the support of P
    to meet {-1, 1}, and some final positive peak with ``n_{+,p} > 4 pi``
    that is not also a negative peak.
    """
    if len(reports) < 3:
        raise BadParameter("need at least three reports")
    table = []
    for rep in reports:
        outside = np.ones((grid.N, grid.N), dtype=bool)
        for p in rep.peaks:
            outside &= grid.distance(p) >= max(rep.radii)
        row = []
        for k in rep.k_estimate:
            vals = np.abs(k[outside])
            row.append(float(np.max(vals)) if vals.size else 0.0)
        table.append(row)
    arr = np.asarray(table)
    with np.errstate(divide="ignore", invalid="ignore"):
        decay = np.where(arr[-1] > 0, arr[0] / arr[-1], np.inf)
    slopes = None
    if scales is not None:
        ls = np.log(np.asarray(scales, dtype=float))
        slopes = [float(np.polyfit(ls, np.log(arr[:, i]), 1)[0]) for i in range(arr.shape[1])]
    final = reports[-1]
    alphas = final.alphas
    endpoint = 1.0 in alphas or -1.0 in alphas
    minus = set(map(tuple, final.peaks_minus))
    mass_ok = any(
        n > MIN_MASS and tuple(p) not in minus
        for p, n in zip(final.peaks_plus, final.n_plus)
    )
    hyp = bool(endpoint and mass_ok)
    decays = bool(np.all(decay >= min_decay))
    return VanishingProbe(arr.tolist(), decay.tolist(), slopes, hyp, bool(hyp and decays))


@dataclass
class ConcentrationVerdict:
    concentrating: bool
    peak_values: list[float]
    final_masses: list[float]
    minimum_mass_ok: bool


def concentration_verdict(reports, slack=0.1) -> ConcentrationVerdict:
    """Sequence-level verdict: the largest |peak value| grows along the reports.

    A single field never yields a verdict; at least two reports are needed.
    """
    if len(reports) < 2:
        raise BadParameter("a concentration verdict needs a sequence of reports")
    tops = [max((abs(x) for x in r.peak_values), default=0.0) for r in reports]
    growing = all(b > a for a, b in zip(tops, tops[1:]))
    final = reports[-1]
    masses = [max(a, b) for a, b in zip(final.n_plus, final.n_minus)]
    ok = bool(masses) and all(m >= MIN_MASS * (1 - slack) for m in masses)
    return ConcentrationVerdict(growing and bool(masses), tops, masses, ok)
