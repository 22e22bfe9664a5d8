"""Spectral scalar fields on the flat square torus [0, L)^2.

Fields are plain ``(N, N)`` float arrays sampled at cell centers; axis 0
is x1 and axis 1 is x2. All operators live on :class:`TorusGrid`.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import BadParameter

MEAN_ZERO_TOL = 1e-10
MAGIC = b"MFE1"


@dataclass(frozen=True)
class TorusGrid:
    side_length: float = 2 * math.pi
    resolution: int = 64

    def __post_init__(self):
        if not (self.side_length > 0 and math.isfinite(self.side_length)):
            raise BadParameter("side_length must be positive")
        n = self.resolution
        if int(n) != n or n < 8:
            raise BadParameter("resolution must be an integer >= 8")
        if n % 2:
            raise BadParameter("resolution must be even")

    @property
    def L(self) -> float:
        return self.side_length

    @property
    def N(self) -> int:
        return self.resolution

    @property
    def h(self) -> float:
        return self.side_length / self.resolution

    @property
    def cell_area(self) -> float:
        return self.h**2

    @property
    def area(self) -> float:
        return self.side_length**2

    @cached_property
    def axis(self) -> np.ndarray:
        return (np.arange(self.N) + 0.5) * self.h

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        x1, x2 = np.meshgrid(self.axis, self.axis, indexing="ij")
        return x1, x2

    @cached_property
    def _k(self):
        k1 = 2 * np.pi * np.fft.fftfreq(self.N, d=self.h)
        k2 = 2 * np.pi * np.fft.rfftfreq(self.N, d=self.h)
        K1, K2 = np.meshgrid(k1, k2, indexing="ij")
        ksq = K1**2 + K2**2
        inv = np.zeros_like(ksq)
        inv[ksq > 0] = 1.0 / ksq[ksq > 0]
        # odd derivatives drop the Nyquist rows/columns
        nyq = self.N // 2
        D1 = 1j * K1.copy()
        D1[nyq, :] = 0.0
        D2 = 1j * K2.copy()
        D2[:, nyq] = 0.0
        return ksq, inv, D1, D2

    def zeros(self) -> np.ndarray:
        return np.zeros((self.N, self.N))

    def check(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != (self.N, self.N):
            raise BadParameter(f"field shape {f.shape} does not match grid N={self.N}")
        return f

    # -- quadrature -------------------------------------------------------

    def integrate(self, f) -> float:
        """Cell-area weighted sum; exact for band-limited periodic integrands."""
        return float(np.sum(f) * self.cell_area)

    def mean(self, f) -> float:
        return float(np.mean(f))

    def inner(self, f, g) -> float:
        return float(np.sum(f * g) * self.cell_area)

    def norm(self, f) -> float:
        """L2(Omega) norm."""
        return math.sqrt(self.inner(f, f))

    def project_mean_zero(self, f) -> np.ndarray:
        return f - np.mean(f)

    def is_mean_zero(self, f, tol=MEAN_ZERO_TOL) -> bool:
        return abs(self.integrate(f)) <= tol * max(self.norm(f), 1e-300)

    # -- spectral operators -------------------------------------------------

    def laplacian(self, f) -> np.ndarray:
        ksq = self._k[0]
        return np.fft.irfft2(-ksq * np.fft.rfft2(f), s=(self.N, self.N))

    def solve_poisson(self, g) -> np.ndarray:
        """Mean-zero ``u`` with ``-Lap u = g - mean(g)``."""
        inv = self._k[1]
        return np.fft.irfft2(inv * np.fft.rfft2(g), s=(self.N, self.N))

    def green_convolve(self, density) -> np.ndarray:
        """``G * density`` for the mean-zero Green's function of -Lap."""
        return self.solve_poisson(density)

    def gradient(self, f) -> tuple[np.ndarray, np.ndarray]:
        _, _, D1, D2 = self._k
        fh = np.fft.rfft2(f)
        s = (self.N, self.N)
        return np.fft.irfft2(D1 * fh, s=s), np.fft.irfft2(D2 * fh, s=s)

    def dirichlet_energy(self, f) -> float:
        """``int |grad f|^2`` computed as ``<f, -Lap f>`` (consistent with :meth:`laplacian`)."""
        return self.inner(f, -self.laplacian(f))

    def green_function(self, p=None) -> np.ndarray:
        """Discrete G(., p) for the cell containing ``p`` (default: cell 0)."""
        spike = self.zeros()
        i, j = (0, 0) if p is None else self.cell_index(p)
        spike[i, j] = 1.0 / self.cell_area
        return self.solve_poisson(spike)

    # -- geometry -------------------------------------------------------------

    def cell_index(self, p) -> tuple[int, int]:
        i = int(math.floor((p[0] % self.L) / self.h)) % self.N
        j = int(math.floor((p[1] % self.L) / self.h)) % self.N
        return i, j

    def distance(self, p) -> np.ndarray:
        """Torus (minimum-image) distance from every cell center to ``p``."""
        x1, x2 = self.coords
        L = self.L
        d1 = np.abs(x1 - p[0]) % L
        d2 = np.abs(x2 - p[1]) % L
        d1 = np.minimum(d1, L - d1)
        d2 = np.minimum(d2, L - d2)
        return np.hypot(d1, d2)

    def torus_distance(self, p, q) -> float:
        d = [abs(a - b) % self.L for a, b in zip(p, q)]
        return math.hypot(*(min(x, self.L - x) for x in d))

    # -- resampling -------------------------------------------------------

    def refine(self, f, factor: float = 1.5):
        """Spectrally interpolate ``f`` onto a grid ``factor`` times finer.

        Returns ``(fine_grid, fine_values)``. Nyquist content is dropped.
        """
        M = int(round(self.N * factor))
        M += M % 2
        fine = TorusGrid(self.L, M)
        return fine, _resample(f, self.N, M)

    def coarsen(self, fine_grid: "TorusGrid", f) -> np.ndarray:
        """Spectral truncation of a fine-grid field back onto this grid."""
        return _resample(f, fine_grid.N, self.N)


def _resample(f, n_in, n_out):
    fh = np.fft.fft2(f)
    keep = min(n_in, n_out) // 2
    out = np.zeros((n_out, n_out), dtype=complex)
    idx_in = np.r_[0:keep, n_in - keep + 1 : n_in]
    idx_out = np.r_[0:keep, n_out - keep + 1 : n_out]
    out[np.ix_(idx_out, idx_out)] = fh[np.ix_(idx_in, idx_in)]
    return np.real(np.fft.ifft2(out)) * (n_out / n_in) ** 2


# -- serialization ------------------------------------------------------------


def write_field(path, grid: TorusGrid, f) -> None:
    """MFE1 container: magic, N (u64 LE), L (f64 LE), then N^2 f64 LE row-major."""
    f = grid.check(f)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Qd", grid.N, grid.L))
        fh.write(np.ascontiguousarray(f, dtype="<f8").tobytes(order="C"))


def read_field(path) -> tuple[TorusGrid, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise BadParameter(f"{path}: not an MFE1 field file")
    n, L = struct.unpack("<Qd", data[4:20])
    body = data[20:]
    if len(body) != 8 * n * n:
        raise BadParameter(f"{path}: payload length {len(body)} does not match N={n}")
    grid = TorusGrid(L, int(n))
    return grid, np.frombuffer(body, dtype="<f8").reshape(n, n).astype(float)


def write_field_csv(path, grid: TorusGrid, f) -> None:
    x1, x2 = grid.coords
    with open(path, "w", newline="") as fh:
        fh.write("x1,x2,value\r\n")
        for a, b, v in zip(x1.ravel(), x2.ravel(), np.asarray(f).ravel()):
            fh.write(f"{float(a)!r},{float(b)!r},{float(v)!r}\r\n")
