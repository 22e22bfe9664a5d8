import math

import numpy as np
import pytest

from mflab.field import TorusGrid

_ACCEPTANCE = []


def random_band_limited(grid, rng, kmax=6, amplitude=2.0):
    """Mean-zero real field built from Fourier modes with |k|_inf <= kmax."""
    N = grid.N
    coeff = np.zeros((N, N // 2 + 1), dtype=complex)
    k1 = np.fft.fftfreq(N, 1.0 / N)
    k2 = np.fft.rfftfreq(N, 1.0 / N)
    mask = (np.abs(k1)[:, None] <= kmax) & (np.abs(k2)[None, :] <= kmax)
    coeff[mask] = rng.standard_normal(mask.sum()) + 1j * rng.standard_normal(mask.sum())
    coeff[0, 0] = 0.0
    f = np.fft.irfft2(coeff, s=(N, N))
    f -= f.mean()
    return amplitude * f / np.max(np.abs(f))


@pytest.fixture
def grid32():
    return TorusGrid(2 * math.pi, 32)


@pytest.fixture
def grid64():
    return TorusGrid(2 * math.pi, 64)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


def bubble_report(grid, mu, variant="sawada_suzuki", measure=None, lam_scale=1.0):
    """Report for a synthetic bubble whose density equals the Liouville profile.

    With lam = integrate(density) the single-atom density lam e^v / int e^v is
    exactly the unit Liouville density; ``lam_scale`` shrinks it for controls.
    """
    from mflab.blowup import (
        BubbleSpec, detect_peaks, estimate_masses, grid_center, liouville_bubble, liouville_density,
    )
    from mflab.measure import preset
    from mflab.meanfield import ProblemSpec

    bubble = BubbleSpec(grid_center(grid), float(mu))
    v = liouville_bubble(grid, bubble)
    lam = lam_scale * grid.integrate(liouville_density(grid, bubble))
    spec = ProblemSpec(variant, lam, measure or preset("dirac_one"), grid)
    peaks = detect_peaks(grid, v, threshold=5.0)
    return spec, v, estimate_masses(spec, v, peaks)
