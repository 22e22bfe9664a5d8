"""Right-hand sides, residuals, functionals and diagnostic densities.

Two potentials are supported:

* ``SAWADA_SUZUKI``: ``V1(alpha, v) = alpha / int_Omega exp(alpha v)``
* ``NERI``: ``V2(alpha, v) = alpha / iint exp(alpha v) P(dalpha) dx``

Everything is expressed through the per-atom log-partition
``log int_Omega exp(alpha_i v)``, evaluated with a max shift so that
concentrated fields do not overflow.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import BadParameter, DensityOverflow
from .field import TorusGrid
from .measure import IntensityMeasure


class Variant(str, enum.Enum):
    SAWADA_SUZUKI = "sawada_suzuki"
    NERI = "neri"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("-", "_")
        aliases = {"ss": cls.SAWADA_SUZUKI, "sawadasuzuki": cls.SAWADA_SUZUKI, "j": cls.SAWADA_SUZUKI,
                   "k": cls.NERI}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise BadParameter(f"unknown variant {name!r}") from None


@dataclass(frozen=True)
class ProblemSpec:
    variant: Variant
    lam: float
    measure: IntensityMeasure
    grid: TorusGrid
    padded: bool = False  # evaluate exponentials on a 3/2-refined grid

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise BadParameter("lambda must be positive")

    def with_lambda(self, lam) -> "ProblemSpec":
        return ProblemSpec(self.variant, lam, self.measure, self.grid, self.padded)

    def with_variant(self, variant) -> "ProblemSpec":
        return ProblemSpec(variant, self.lam, self.measure, self.grid, self.padded)


@dataclass
class AssumptionReport:
    c1_prime: float
    c2_prime: float
    jensen_ok: bool
    sign_ok: bool
    partitions: list[float] = dc_field(default_factory=list)

    def to_text(self) -> str:
        return (
            f"c1_prime = {self.c1_prime!r}\n"
            f"c2_prime = {self.c2_prime!r}\n"
            f"jensen_ok = {str(self.jensen_ok).lower()}\n"
            f"sign_ok = {str(self.sign_ok).lower()}\n"
        )


# -- core evaluation ---------------------------------------------------------


class _Evaluation:
    """Per-atom quantities shared by every operation for one (spec, v)."""

    def __init__(self, spec: ProblemSpec, v):
        grid = spec.grid
        v = grid.check(v)
        if not np.all(np.isfinite(v)):
            raise DensityOverflow("field has non-finite samples")
        self.spec = spec
        if spec.padded:
            self.qgrid, self.qv = grid.refine(v)
        else:
            self.qgrid, self.qv = grid, v
        alphas, weights = spec.measure.as_arrays()
        self.alphas, self.weights = alphas, weights
        # log int exp(alpha_i v), max-shifted
        logz = np.empty(len(alphas))
        for i, a in enumerate(alphas):
            av = a * self.qv
            m = float(np.max(av))
            s = float(np.sum(np.exp(av - m)))
            logz[i] = m + math.log(s * self.qgrid.cell_area)
        if not np.all(np.isfinite(logz)):
            raise DensityOverflow("partition integral is not finite")
        self.log_partition = logz
        if spec.variant is Variant.SAWADA_SUZUKI:
            self.log_norm = logz.copy()
        else:
            shift = float(np.max(logz))
            total = float(np.sum(weights * np.exp(logz - shift)))
            self.log_norm = np.full(len(alphas), shift + math.log(total))
        # V(alpha_i, v) / alpha_i
        self.v_over_alpha = np.exp(-self.log_norm)

    def density(self, i) -> np.ndarray:
        """lambda * (V/alpha) * exp(alpha_i v) on the computational grid."""
        a = self.alphas[i]
        out = self.spec.lam * np.exp(a * self.qv - self.log_norm[i])
        if not np.all(np.isfinite(out)):
            raise DensityOverflow(f"density for alpha={a} is not finite")
        return out

    def to_grid(self, f) -> np.ndarray:
        if self.spec.padded:
            return self.spec.grid.coarsen(self.qgrid, f)
        return f


def _evaluate(spec, v):
    return _Evaluation(spec, v)


def log_partitions(spec: ProblemSpec, v) -> np.ndarray:
    """``log int_Omega exp(alpha_i v) dx`` for every atom."""
    return _evaluate(spec, v).log_partition.copy()


def potential_over_alpha(spec: ProblemSpec, v) -> np.ndarray:
    """``V(alpha_i, v) / alpha_i`` per atom (one shared value for Neri)."""
    return _evaluate(spec, v).v_over_alpha.copy()


def potential(spec: ProblemSpec, v) -> np.ndarray:
    ev = _evaluate(spec, v)
    return ev.alphas * ev.v_over_alpha


def mu_product_densities(spec: ProblemSpec, v) -> list[np.ndarray]:
    """Per-atom densities of the product measure, ``lambda (V/alpha) e^{alpha v}``."""
    ev = _evaluate(spec, v)
    return [ev.to_grid(ev.density(i)) for i in range(len(ev.alphas))]


def rhs(spec: ProblemSpec, v) -> np.ndarray:
    ev = _evaluate(spec, v)
    return _rhs(ev)


def _rhs(ev: _Evaluation) -> np.ndarray:
    acc = np.zeros_like(ev.qv)
    for i, (a, w) in enumerate(zip(ev.alphas, ev.weights)):
        if a != 0.0:
            acc += (w * a) * ev.density(i)
    acc = ev.to_grid(acc)
    return acc - np.mean(acc)


def residual(spec: ProblemSpec, v) -> np.ndarray:
    """``-Lap v - rhs``; zero exactly at discrete solutions."""
    return -spec.grid.laplacian(v) - rhs(spec, v)


def functional_gradient(spec: ProblemSpec, v) -> np.ndarray:
    """L2 gradient of :func:`functional` on mean-zero fields (equals the residual)."""
    return residual(spec, v)


def functional(spec: ProblemSpec, v) -> float:
    """J_lambda for Sawada-Suzuki, K_lambda for Neri."""
    ev = _evaluate(spec, v)
    return _functional(ev, v)


def _functional(ev, v) -> float:
    spec = ev.spec
    energy = 0.5 * spec.grid.dirichlet_energy(v)
    if spec.variant is Variant.SAWADA_SUZUKI:
        log_term = math.fsum(w * z for w, z in zip(ev.weights, ev.log_partition))
    else:
        log_term = float(ev.log_norm[0])
    return energy - spec.lam * log_term


def evaluate_all(spec: ProblemSpec, v):
    """``(functional, residual)`` sharing one partition evaluation."""
    ev = _evaluate(spec, v)
    res = -spec.grid.laplacian(v) - _rhs(ev)
    return _functional(ev, v), res


def nu_densities(spec: ProblemSpec, v) -> tuple[np.ndarray, np.ndarray]:
    """``nu_+`` over I+ = [0, 1] and ``nu_-`` over I- = [-1, 0)."""
    ev = _evaluate(spec, v)
    plus = np.zeros_like(ev.qv)
    minus = np.zeros_like(ev.qv)
    for i, (a, w) in enumerate(zip(ev.alphas, ev.weights)):
        if a == 0.0:
            continue
        target = plus if a > 0 else minus
        target += (w * abs(a)) * ev.density(i)
    return ev.to_grid(plus), ev.to_grid(minus)


def u_pm_decomposition(spec: ProblemSpec, v) -> tuple[np.ndarray, np.ndarray]:
    """``(G * nu_+, G * nu_-)``; their difference reproduces a solution ``v``."""
    plus, minus = nu_densities(spec, v)
    g = spec.grid
    return g.green_convolve(plus), g.green_convolve(minus)


def green_lower_bound(grid: TorusGrid) -> float:
    """``A = -min G`` for the discrete Green's function."""
    return -float(np.min(grid.green_function()))


def check_assumptions(spec: ProblemSpec, v, slack=1e-10) -> AssumptionReport:
    ev = _evaluate(spec, v)
    area = spec.grid.area
    partitions = np.exp(ev.log_partition)
    c1 = float(np.max(np.abs(ev.v_over_alpha)))
    # int_I int_Omega |V| e^{alpha v} dx P(dalpha)
    c2 = math.fsum(
        w * abs(a) * vo * z
        for a, w, vo, z in zip(ev.alphas, ev.weights, ev.v_over_alpha, partitions)
    )
    jensen_ok = bool(np.all(partitions >= area * (1.0 - slack)))
    sign_ok = bool(np.all(ev.alphas * (ev.alphas * ev.v_over_alpha) >= 0.0))
    return AssumptionReport(c1, c2, jensen_ok, sign_ok, partitions.tolist())


def monotonicity_check(grid: TorusGrid, v, alphas, slack=1e-10) -> bool:
    """True iff ``alpha -> int exp(alpha v)`` is nondecreasing on the sorted ``alphas``."""
    alphas = [float(a) for a in alphas]
    if any(b < a for a, b in zip(alphas, alphas[1:])):
        raise BadParameter("alphas must be sorted ascending")
    v = grid.check(v)
    values = [grid.integrate(np.exp(a * v)) for a in alphas]
    return all(b >= a * (1.0 - slack) for a, b in zip(values, values[1:]))
