"""Empirical Trudinger-Moser thresholds from concentrating bubble families.

A functional is called unbounded-looking at a given lambda when its value
keeps falling as the bubble scale grows: the slope of value versus log(mu)
between the two largest usable scales is below ``-slope_tol``. Bounded-
looking verdicts are evidence only, never a proof.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import meanfield as mf
from .blowup import BubbleSpec, grid_center, liouville_bubble
from .errors import BadParameter, DensityOverflow, NoBracket
from .field import TorusGrid
from .meanfield import ProblemSpec, Variant
from .measure import best_constant_subset

BOUNDED = "bounded-looking"
UNBOUNDED = "unbounded-looking"
INDETERMINATE = "indeterminate"

DEFAULT_SLOPE_TOL = 0.05


def probe_family(grid: TorusGrid, mu_list, direction: str = "+", center=None) -> list[np.ndarray]:
    """Mean-zero Liouville bubbles at each scale in ``mu_list`` (increasing)."""
    mu_list = [float(m) for m in mu_list]
    if any(b <= a for a, b in zip(mu_list, mu_list[1:])):
        raise BadParameter("mu_list must be strictly increasing")
    if direction not in ("+", "-"):
        raise BadParameter("direction must be '+' or '-'")
    sign = 1 if direction == "+" else -1
    center = grid_center(grid) if center is None else center
    return [liouville_bubble(grid, BubbleSpec(center, mu, sign)) for mu in mu_list]


def family_direction(spec: ProblemSpec) -> str:
    """Sign of the bubble family that exposes the threshold for ``spec``.

    For J (Sawada-Suzuki) this is the side of the minimizing atom subset in
    the best-constant formula; for K (Neri) it is whichever endpoint of
    [-1, 1] carries an atom, preferring +1.
    """
    P = spec.measure
    if spec.variant is Variant.SAWADA_SUZUKI:
        subset, _ = best_constant_subset(P)
        return "+" if subset[0][0] >= 0 else "-"
    if 1.0 in P.alphas:
        return "+"
    if -1.0 in P.alphas:
        return "-"
    return "+" if max(P.alphas) >= -min(P.alphas) else "-"


@dataclass
class SweepResult:
    lambdas: list[float]
    scales: list[float]
    values: list[list[float]]  # [lambda][member], nan for skipped members
    family_infima: list[float]
    slopes: list[float]
    verdicts: list[str]
    skipped: list[int] = dc_field(default_factory=list)

    def to_csv(self) -> str:
        rows = ["lambda,mu,value,slope,verdict"]
        for lam, vals, slope, verdict in zip(self.lambdas, self.values, self.slopes, self.verdicts):
            for mu, val in zip(self.scales, vals):
                rows.append(f"{lam!r},{mu!r},{val!r},{slope!r},{verdict}")
        return "\r\n".join(rows) + "\r\n"


def _verdict(slope, slope_tol):
    if not math.isfinite(slope):
        return INDETERMINATE
    return UNBOUNDED if slope < -slope_tol else BOUNDED


def sweep(spec: ProblemSpec, lambdas, family, scales, slope_tol=DEFAULT_SLOPE_TOL) -> SweepResult:
    """Evaluate the functional of ``spec`` on every family member for every lambda.

    The functional is affine in lambda, so the Dirichlet energy and the log
    term are computed once per member and combined per lambda.
    """
    family = list(family)
    scales = [float(s) for s in scales]
    if not family:
        raise BadParameter("family must be nonempty")
    if len(scales) != len(family):
        raise BadParameter("one scale per family member required")
    lambdas = [float(x) for x in lambdas]
    energy = np.full(len(family), np.nan)
    logterm = np.full(len(family), np.nan)
    skipped = []
    unit = spec.with_lambda(1.0)
    for j, v in enumerate(family):
        try:
            value = mf.functional(unit, v)
        except DensityOverflow:
            skipped.append(j)
            continue
        energy[j] = 0.5 * spec.grid.dirichlet_energy(v)
        logterm[j] = energy[j] - value
    ok = [j for j in range(len(family)) if j not in skipped]
    values, infima, slopes, verdicts = [], [], [], []
    for lam in lambdas:
        vals = energy - lam * logterm
        values.append(vals.tolist())
        infima.append(float(np.nanmin(vals)) if ok else math.nan)
        if len(ok) >= 2:
            a, b = ok[-2], ok[-1]
            slope = (vals[b] - vals[a]) / (math.log(scales[b]) - math.log(scales[a]))
        else:
            slope = math.nan
        slopes.append(float(slope))
        verdicts.append(_verdict(slope, slope_tol))
    return SweepResult(lambdas, scales, values, infima, slopes, verdicts, skipped)


def threshold_estimate(spec: ProblemSpec, lambda_bracket, family, scales,
                       slope_tol=DEFAULT_SLOPE_TOL, rel_width=0.01) -> float:
    """Bisect lambda to ``rel_width`` relative width on the verdict change."""
    lo, hi = sorted(float(x) for x in lambda_bracket)
    if not lo > 0:
        raise BadParameter("bracket must be positive")
    res = sweep(spec, [lo, hi], family, scales, slope_tol)
    v_lo, v_hi = res.verdicts
    if v_lo == v_hi or INDETERMINATE in (v_lo, v_hi):
        raise NoBracket(f"both ends of ({lo}, {hi}) are {v_lo}/{v_hi}")
    while (hi - lo) > rel_width * 0.5 * (hi + lo):
        mid = 0.5 * (lo + hi)
        verdict = sweep(spec, [mid], family, scales, slope_tol).verdicts[0]
        if verdict == v_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def default_scales(grid: TorusGrid, count: int = 4) -> list[float]:
    """Doubling scales ending at half the resolvable bubble scale."""
    top = grid.N / (4 * grid.L) * 2 * math.pi / 2
    return [top / 2**k for k in reversed(range(count))]


def automatic_family(spec: ProblemSpec, scales=None):
    scales = default_scales(spec.grid) if scales is None else list(scales)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        family = probe_family(spec.grid, scales, family_direction(spec))
    return family, scales
