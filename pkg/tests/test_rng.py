import math

import numpy as np

from mflab import rng
from mflab.field import TorusGrid


def test_splitmix64_reference_stream():
    state, out = 0, []
    for _ in range(4):
        state, z = rng.splitmix64(state)
        out.append(z)
    assert out == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F, 0xF88BB8A8724C81EC]


def test_xoshiro_reference_streams():
    g = rng.Xoshiro256(0)
    assert [g.next_u64() for _ in range(3)] == [0x99EC5F36CB75F2B4, 0xBF6E1F784956452A, 0x1A5F849D4933E6E0]
    g = rng.Xoshiro256(42)
    assert [g.next_u64() for _ in range(3)] == [0x15780B2E0C2EC716, 0x6104D9866D113A7E, 0xAE17533239E499A1]


def test_uniform_and_normal_ranges():
    g = rng.Xoshiro256(7)
    u = np.array([g.uniform() for _ in range(4000)])
    assert u.min() >= 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 0.02
    z = np.array([g.normal() for _ in range(4000)])
    assert abs(z.mean()) < 0.06 and abs(z.std() - 1) < 0.05


def test_random_field_is_reproducible_and_mean_zero():
    grid = TorusGrid(2 * math.pi, 32)
    a = rng.random_band_limited(grid, rng.Xoshiro256(5), kmax=3, amplitude=0.7)
    b = rng.random_band_limited(grid, rng.Xoshiro256(5), kmax=3, amplitude=0.7)
    c = rng.random_band_limited(grid, rng.Xoshiro256(6), kmax=3, amplitude=0.7)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert abs(float(np.mean(a))) < 1e-15
    assert float(np.max(np.abs(a))) == np.float64(0.7)
