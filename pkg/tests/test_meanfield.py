import math

import numpy as np
import pytest
from scipy import integrate as sint
from scipy.special import i0

from conftest import random_band_limited
from mflab import meanfield as mf
from mflab.errors import BadParameter, DensityOverflow
from mflab.field import TorusGrid
from mflab.measure import IntensityMeasure, preset
from mflab.meanfield import ProblemSpec, Variant

AREA = 4 * math.pi**2
MEASURES = [
    preset("dirac_one"),
    preset("two_mass", t=0.3),
    preset("uniform_quadrature", n=5),
]


def make(grid, measure, variant="sawada_suzuki", lam=3.0, padded=False):
    return ProblemSpec(variant, lam, measure, grid, padded)


def richardson_fd(f, eps):
    """Fourth-order central difference of a scalar function at 0."""
    d1 = (f(eps) - f(-eps)) / (2 * eps)
    d2 = (f(eps / 2) - f(-eps / 2)) / eps
    return (4 * d2 - d1) / 3


def test_variant_parse():
    assert Variant.parse("ss") is Variant.SAWADA_SUZUKI
    assert Variant.parse("K") is Variant.NERI
    with pytest.raises(BadParameter):
        Variant.parse("other")
    with pytest.raises(BadParameter):
        make(TorusGrid(2 * math.pi, 16), preset("dirac_one"), lam=0.0)


@pytest.mark.parametrize("variant", list(Variant))
@pytest.mark.parametrize("measure", MEASURES)
def test_zero_field(grid32, variant, measure):
    spec = make(grid32, measure, variant, lam=2.5)
    v = grid32.zeros()
    np.testing.assert_allclose(mf.rhs(spec, v), 0.0, atol=1e-14)
    np.testing.assert_allclose(mf.residual(spec, v), 0.0, atol=1e-14)
    assert mf.functional(spec, v) == pytest.approx(-2.5 * math.log(AREA), rel=1e-13)
    up, um = mf.u_pm_decomposition(spec, v)
    np.testing.assert_allclose(up, 0.0, atol=1e-12)
    np.testing.assert_allclose(um, 0.0, atol=1e-12)
    rep = mf.check_assumptions(spec, v)
    assert rep.c1_prime == pytest.approx(1 / AREA, rel=1e-13)
    assert rep.c2_prime == pytest.approx(sum(abs(a) * w for a, w in measure.atoms), rel=1e-12)
    assert rep.jensen_ok and rep.sign_ok


def test_zero_field_densities(grid32):
    spec = make(grid32, preset("dirac_one"), lam=1.0)
    v = grid32.zeros()
    plus, minus = mf.nu_densities(spec, v)
    np.testing.assert_allclose(plus, 1 / AREA, rtol=1e-13)
    np.testing.assert_allclose(minus, 0.0)
    (mu,) = mf.mu_product_densities(spec, v)
    np.testing.assert_allclose(mu, 1 / AREA, rtol=1e-13)


def test_residual_spot_value():
    g = TorusGrid(2 * math.pi, 64)
    x1, _ = g.coords
    v = np.cos(x1)
    spec = make(g, preset("dirac_one"), lam=1.0)
    line, _ = sint.quad(lambda t: math.exp(math.cos(t)), 0, 2 * math.pi, epsabs=1e-13, epsrel=1e-13)
    Z = 2 * math.pi * line
    assert Z == pytest.approx(AREA * i0(1.0), rel=1e-13)
    expected = np.cos(x1) - (np.exp(np.cos(x1)) / Z - 1 / AREA)
    res = mf.residual(spec, v)
    np.testing.assert_allclose(res, expected, atol=1e-12)
    x = g.axis
    # the grid is cell-centred, so evaluate the closed form at the first sample
    spot = math.cos(x[0]) - (math.exp(math.cos(x[0])) / Z - 1 / AREA)
    assert res[0, 0] == pytest.approx(spot, abs=1e-12)


def test_single_atom_reduces_to_classical_equation(grid32, rng):
    v = random_band_limited(grid32, rng)
    spec = make(grid32, preset("dirac_one"), lam=4.0)
    Z = grid32.integrate(np.exp(v))
    expected = 4.0 * (np.exp(v) / Z - 1 / AREA)
    np.testing.assert_allclose(mf.rhs(spec, v), expected, atol=1e-12)


@pytest.mark.parametrize("padded", [False, True])
def test_single_atom_variants_agree(grid32, rng, padded):
    v = random_band_limited(grid32, rng)
    a = make(grid32, preset("dirac_one"), "sawada_suzuki", padded=padded)
    b = a.with_variant("neri")
    np.testing.assert_allclose(mf.rhs(a, v), mf.rhs(b, v), atol=1e-14, rtol=0)
    assert mf.functional(a, v) == pytest.approx(mf.functional(b, v), abs=1e-14)
    np.testing.assert_allclose(mf.functional_gradient(a, v), mf.functional_gradient(b, v), atol=1e-14, rtol=0)


@pytest.mark.parametrize("variant", list(Variant))
def test_symmetric_measure_gives_even_functional(grid32, rng, variant):
    spec = make(grid32, preset("two_mass", t=0.5), variant)
    for _ in range(5):
        v = random_band_limited(grid32, rng)
        assert mf.functional(spec, v) == pytest.approx(mf.functional(spec, -v), abs=1e-12)
        p, m = mf.nu_densities(spec, v)
        p2, m2 = mf.nu_densities(spec, -v)
        np.testing.assert_allclose(p, m2, rtol=1e-13, atol=1e-15)
        np.testing.assert_allclose(m, p2, rtol=1e-13, atol=1e-15)


@pytest.mark.parametrize("variant", list(Variant))
@pytest.mark.parametrize("measure", MEASURES)
@pytest.mark.parametrize("padded", [False, True])
def test_gradient_matches_finite_differences(grid32, variant, measure, padded):
    rng = np.random.default_rng(7)
    spec = make(grid32, measure, variant, lam=5.0, padded=padded)
    for _ in range(4):
        v = random_band_limited(grid32, rng, amplitude=2.0)
        phi = random_band_limited(grid32, rng, amplitude=1.0)
        grad = mf.functional_gradient(spec, v)
        exact = grid32.inner(grad, phi)
        fd = richardson_fd(lambda e: mf.functional(spec, v + e * phi), 1e-3)
        assert abs(exact - fd) / grid32.norm(phi) <= 1e-6


@pytest.mark.parametrize("variant", list(Variant))
@pytest.mark.parametrize("measure", MEASURES)
def test_densities_and_bounds(grid32, rng, variant, measure):
    lam = 3.0
    spec = make(grid32, measure, variant, lam=lam)
    A = mf.green_lower_bound(grid32)
    assert A > 0
    for _ in range(5):
        v = random_band_limited(grid32, rng, amplitude=3.0)
        assert abs(float(np.mean(mf.rhs(spec, v)))) < 1e-12
        plus, minus = mf.nu_densities(spec, v)
        assert np.all(plus >= 0) and np.all(minus >= 0)
        assert grid32.integrate(plus) + grid32.integrate(minus) <= lam * (1 + 1e-12)
        mus = mf.mu_product_densities(spec, v)
        assert all(np.all(m >= 0) for m in mus)
        total = sum(w * grid32.integrate(m) for (a, w), m in zip(measure.atoms, mus))
        assert total <= (lam + 1) * (1 + 1e-12)
        recon = sum(w * abs(a) * m for (a, w), m in zip(measure.atoms, mus))
        np.testing.assert_allclose(recon, plus + minus, atol=1e-12)
        up, um = mf.u_pm_decomposition(spec, v)
        assert np.min(up) >= -A * lam and np.min(um) >= -A * lam


def test_assumption_bounds_on_random_fields(grid32, rng):
    for measure in MEASURES:
        ss = make(grid32, measure, "sawada_suzuki")
        ne = ss.with_variant("neri")
        for _ in range(10):
            v = random_band_limited(grid32, rng, amplitude=4.0)
            r1 = mf.check_assumptions(ss, v)
            r2 = mf.check_assumptions(ne, v)
            assert r1.jensen_ok and r1.sign_ok and r2.jensen_ok and r2.sign_ok
            assert r1.c1_prime <= (1 + 1e-10) / AREA
            assert r2.c1_prime <= (1 + 1e-10) / AREA
            assert r2.c2_prime <= 1 + 1e-10
    text = r1.to_text()
    assert "jensen_ok = true" in text


def test_monotonicity_examples():
    g = TorusGrid(2 * math.pi, 64)
    x1, _ = g.coords
    alphas = [0.25, 0.5, 0.75, 1.0]
    assert mf.monotonicity_check(g, g.zeros(), alphas)
    assert mf.monotonicity_check(g, np.cos(x1), alphas)
    values = [g.integrate(np.exp(a * np.cos(x1))) for a in alphas]
    np.testing.assert_allclose(values, AREA * i0(alphas), rtol=1e-13)
    assert all(b > a for a, b in zip(values, values[1:]))
    with pytest.raises(BadParameter):
        mf.monotonicity_check(g, g.zeros(), [0.5, 0.25])


def test_u_pm_reproduces_solution():
    from mflab.solver import SolverOptions, newton_solve

    g = TorusGrid(2 * math.pi, 32)
    x1, _ = g.coords
    spec = make(g, preset("two_mass", t=0.7), "neri", lam=20.0)
    sol = newton_solve(spec, 0.3 * np.cos(x1), SolverOptions(tol=1e-10))
    assert sol.converged
    up, um = mf.u_pm_decomposition(spec, sol.v)
    assert g.norm(sol.v - (up - um)) <= 1e-8


def test_overflow_is_reported(grid32):
    x1, _ = grid32.coords
    spec = make(grid32, preset("dirac_one"))
    v = np.cos(x1)
    v[0, 0] = np.inf
    with pytest.raises(DensityOverflow):
        mf.rhs(spec, v)


def test_zero_intensity_atom_is_inert(grid32, rng):
    P = IntensityMeasure.from_atoms([(0.0, 0.5), (1.0, 0.5)])
    spec = make(grid32, P, "sawada_suzuki", lam=2.0)
    v = random_band_limited(grid32, rng)
    ref = make(grid32, preset("dirac_one"), "sawada_suzuki", lam=1.0)
    np.testing.assert_allclose(mf.rhs(spec, v), mf.rhs(ref, v), atol=1e-13)
