import itertools
import math

import pytest
from hypothesis import given, settings, strategies as st

from mflab import measure as ms
from mflab.errors import BadParameter, NoAdmissibleSubset
from mflab.measure import IntensityMeasure


def brute_force_best(P):
    """Independent re-enumeration of the subset infimum."""
    best = math.inf
    for side in ([x for x in P.atoms if x[0] >= 0], [x for x in P.atoms if x[0] < 0]):
        for k in range(1, len(side) + 1):
            for sub in itertools.combinations(side, k):
                mass = sum(w for _, w in sub)
                mom = sum(a * w for a, w in sub)
                if mom * mom != 0:
                    best = min(best, 8 * math.pi * mass / mom**2)
    return best


def test_integrate_examples():
    assert ms.integrate(ms.preset("dirac_one"), lambda a: a) == 1.0
    assert ms.integrate(ms.preset("two_mass", t=0.5), lambda a: a) == 0.0
    assert ms.integrate(ms.preset("two_mass", t=0.7), lambda a: a * a) == pytest.approx(1.0, abs=1e-15)


def test_restrict_examples():
    assert len(ms.restrict(ms.preset("dirac_one"), "-")) == 0
    plus = ms.restrict(ms.preset("two_mass", t=0.5), "+")
    assert plus.atoms == [(1.0, 0.5)]
    zero = IntensityMeasure.from_atoms([(0.0, 0.5), (-0.5, 0.5)])
    assert ms.restrict(zero, "+").atoms == [(0.0, 0.5)]
    assert ms.restrict(zero, "-").atoms == [(-0.5, 0.5)]


def test_best_constant_examples():
    assert ms.best_constant_J(ms.preset("dirac_one")) == 8 * math.pi
    assert ms.best_constant_J(ms.preset("two_mass", t=0.75)) == pytest.approx(32 * math.pi / 3, rel=1e-14)
    P = IntensityMeasure.from_atoms([(1.0, 0.5), (0.5, 0.5)])
    assert ms.best_constant_J(P) == pytest.approx(128 * math.pi / 9, rel=1e-14)


def test_best_constant_two_mass_matches_closed_form():
    for t in (0.1, 0.3, 0.5, 0.8):
        P = ms.preset("two_mass", t=t)
        assert ms.best_constant_J(P) == pytest.approx(8 * math.pi * min(1 / t, 1 / (1 - t)), rel=1e-13)


def test_best_constant_needs_nonzero_moment():
    with pytest.raises(NoAdmissibleSubset):
        ms.best_constant_J(IntensityMeasure((0.0,), (1.0,)))


def test_presets():
    assert ms.preset("dirac_one").atoms == [(1.0, 1.0)]
    assert ms.preset("two_mass", t=0.5).atoms == [(-1.0, 0.5), (1.0, 0.5)]
    assert ms.preset("two_mass", t=1.0).atoms == [(1.0, 1.0)]
    assert ms.preset("two_mass", t=0.0).atoms == [(-1.0, 1.0)]
    assert ms.preset("uniform_quadrature", n=2).atoms == [(-0.5, 0.5), (0.5, 0.5)]
    for bad in ({"name": "two_mass", "t": 1.3}, {"name": "uniform_quadrature", "n": 0}):
        with pytest.raises(BadParameter):
            ms.preset(**bad)
    with pytest.raises(BadParameter):
        ms.preset("nope")


def test_validation_and_canonical_form():
    with pytest.raises(BadParameter):
        IntensityMeasure((1.5,), (1.0,))
    with pytest.raises(BadParameter):
        IntensityMeasure((0.0,), (0.9,))
    with pytest.raises(BadParameter):
        IntensityMeasure((0.5, 0.0), (0.5, 0.5))
    P = IntensityMeasure.from_atoms([(0.5, 0.25), (-1.0, 0.5), (0.5, 0.25)])
    assert P.atoms == [(-1.0, 0.5), (0.5, 0.5)]


def test_text_round_trip(tmp_path):
    P = ms.preset("uniform_quadrature", n=7)
    path = tmp_path / "m.txt"
    ms.save(P, path)
    assert ms.load(path) == P
    assert ms.loads("# header\n1 0.25\n-1 0.75\n").atoms == [(-1.0, 0.75), (1.0, 0.25)]
    with pytest.raises(BadParameter):
        ms.loads("1 0.5 3\n")


atoms_st = st.lists(
    st.tuples(st.floats(-1, 1, allow_nan=False), st.floats(0.01, 1.0)),
    min_size=1, max_size=7,
)


def _normalize(raw):
    total = sum(w for _, w in raw)
    merged = {}
    for a, w in raw:
        merged[a] = merged.get(a, 0.0) + w / total
    keys = sorted(merged)
    weights = [merged[k] for k in keys]
    weights[-1] = 1.0 - math.fsum(weights[:-1])
    return IntensityMeasure(tuple(keys), tuple(weights))


@settings(max_examples=150, deadline=None)
@given(atoms_st)
def test_measure_invariants(raw):
    try:
        P = _normalize(raw)
    except BadParameter:
        return
    assert ms.integrate(P, lambda a: 1.0) == pytest.approx(1.0, abs=1e-12)
    assert ms.restrict(P, "+").total + ms.restrict(P, "-").total == pytest.approx(1.0, abs=1e-12)
    if brute_force_best(P) < math.inf:
        best = ms.best_constant_J(P)
        assert best == pytest.approx(brute_force_best(P), rel=1e-12)
        for subset, ratio in ms.best_constant_terms(P):
            assert best <= ratio
