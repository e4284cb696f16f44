"""Truncated Fourier representation on a periodic box.

Coefficients are stored in centered order, index ``i`` holding the mode
``k = i - n//2``, so that ``xi_k = k * dxi`` runs from ``-n/2`` to ``n/2-1``.
The forward transform carries ``dx`` and the inverse carries ``dxi / 2pi``::

    v_hat(xi) = sum_j f(x_j) exp(-i x_j xi) dx
    f(x)      = sum_k v_hat(xi_k) exp(i x xi_k) dxi / (2 pi)
"""
from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class FrequencyGrid:
    """``n`` modes (even) on the box ``[-L/2, L/2)``."""

    n: int
    L: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2 or self.n % 2:
            raise ValueError(f"n must be an even integer >= 2, got {self.n}")
        if not np.isfinite(self.L) or self.L <= 0:
            raise ValueError(f"L must be positive, got {self.L}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "L", float(self.L))

    @property
    def dxi(self) -> float:
        return 2 * np.pi / self.L

    @property
    def dx(self) -> float:
        return self.L / self.n

    @property
    def measure(self) -> float:
        """Quadrature weight ``dxi / 2pi`` of one frequency sample."""
        return 1.0 / self.L

    @cached_property
    def k(self) -> np.ndarray:
        return np.arange(-(self.n // 2), self.n // 2)

    @cached_property
    def xi(self) -> np.ndarray:
        return self.k * self.dxi

    @cached_property
    def x(self) -> np.ndarray:
        return -self.L / 2 + self.dx * np.arange(self.n)

    def index_of(self, k):
        """Array index of integer mode(s) ``k``; -1 where off the grid."""
        k = np.asarray(k)
        i = k + self.n // 2
        return np.where((i >= 0) & (i < self.n), i, -1)

    def padded(self, factor: int = 3) -> "FrequencyGrid":
        """Same box, ``factor`` times as many modes."""
        return FrequencyGrid(self.n * factor, self.L)

    def to_dict(self) -> dict:
        return {"n": self.n, "L": self.L}


def japanese(xi):
    return np.sqrt(1.0 + np.asarray(xi, dtype=float) ** 2)


def sobolev_weight(xi, s: float):
    """<xi>^s."""
    return japanese(xi) ** s


@dataclass(frozen=True, eq=False)
class SpectralField:
    grid: FrequencyGrid
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} coefficients, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        c = c.copy()
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.n, dtype=complex))

    @classmethod
    def single_mode(cls, grid, k: int, amplitude: complex = 1.0):
        c = np.zeros(grid.n, dtype=complex)
        i = int(grid.index_of(k))
        if i < 0:
            raise ValueError(f"mode {k} is not on the grid")
        c[i] = amplitude
        return cls(grid, c)

    def _check_same_grid(self, other):
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")

    def __add__(self, other):
        self._check_same_grid(other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check_same_grid(other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return SpectralField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(self.grid, -self.coeffs)

    def conj(self):
        """Coefficients of the conjugate function: conj(v_hat(-xi)), truncated."""
        c = np.zeros_like(self.coeffs)
        # k -> -k; mode -n/2 has no partner on the grid
        c[1:] = np.conj(self.coeffs[1:][::-1])
        return SpectralField(self.grid, c)

    def __repr__(self):
        return f"SpectralField(n={self.grid.n}, L={self.grid.L:g})"


def hs_norm(field: SpectralField, s: float) -> float:
    g = field.grid
    w = sobolev_weight(g.xi, 2 * s)
    return float(np.sqrt(np.sum(w * np.abs(field.coeffs) ** 2) * g.measure))


def hs_inner(a: SpectralField, b: SpectralField, s: float) -> complex:
    a._check_same_grid(b)
    g = a.grid
    return complex(np.sum(sobolev_weight(g.xi, 2 * s) * a.coeffs * np.conj(b.coeffs)) * g.measure)


def free_propagate(field: SpectralField, t: float) -> SpectralField:
    """S(t) = exp(i t d_x^2): multiply by exp(-i xi^2 t)."""
    xi = field.grid.xi
    return SpectralField(field.grid, field.coeffs * np.exp(-1j * xi**2 * t))


def _sign(grid):
    return np.where(grid.k % 2 == 0, 1.0, -1.0)


def to_physical(field: SpectralField, grid: FrequencyGrid | None = None) -> np.ndarray:
    """Samples at ``grid.x``. A finer ``grid`` on the same box zero-pads."""
    src = field.grid
    if grid is None:
        grid = src
    if grid.L != src.L or grid.n < src.n:
        raise ValueError("target grid must share L and have at least as many modes")
    c = np.zeros(grid.n, dtype=complex)
    off = (grid.n - src.n) // 2
    c[off:off + src.n] = field.coeffs
    c = c * _sign(grid)
    c = np.fft.ifftshift(c)
    return np.fft.ifft(c) / grid.dx


def to_spectral(samples, grid: FrequencyGrid, target: FrequencyGrid | None = None) -> SpectralField:
    """Inverse of :func:`to_physical`; optionally truncate to a coarser ``target``."""
    f = np.asarray(samples, dtype=complex)
    if f.shape != (grid.n,):
        raise ValueError(f"expected {grid.n} samples, got shape {f.shape}")
    c = np.fft.fftshift(np.fft.fft(f)) * grid.dx * _sign(grid)
    if target is None:
        return SpectralField(grid, c)
    if target.L != grid.L or target.n > grid.n:
        raise ValueError("target grid must share L and have at most as many modes")
    off = (grid.n - target.n) // 2
    return SpectralField(target, c[off:off + target.n])


def derivative(field: SpectralField) -> SpectralField:
    return SpectralField(field.grid, 1j * field.grid.xi * field.coeffs)


def _gauge_phase(samples, grid: FrequencyGrid) -> np.ndarray:
    """G(x) = int_{-L/2}^x |f|^2 at the sample points.

    The trigonometric interpolant of the sampled |f|^2 is integrated exactly:
    its mean gives the linear part, the rest a periodic antiderivative.  Only
    the sampled modulus enters, so the forward and inverse maps share G.
    """
    dens = np.abs(samples) ** 2
    c = np.fft.fft(dens) / grid.n
    xi = 2 * np.pi * np.fft.fftfreq(grid.n, d=grid.dx)
    anti = np.zeros_like(c)
    anti[1:] = c[1:] / (1j * xi[1:])
    anti[grid.n // 2] = 0.0  # Nyquist: no real antiderivative
    F = np.fft.ifft(anti).real * grid.n
    return c[0].real * (grid.x - grid.x[0]) + F - F[0]


def gauge_forward(u: SpectralField) -> SpectralField:
    """w = exp(-i int_{-inf}^x |u|^2) u, the integral taken from the left edge."""
    g = u.grid
    f = to_physical(u)
    return to_spectral(np.exp(-1j * _gauge_phase(f, g)) * f, g)


def gauge_inverse(w: SpectralField) -> SpectralField:
    """Inverse of :func:`gauge_forward` (|w| = |u| pointwise)."""
    g = w.grid
    f = to_physical(w)
    return to_spectral(np.exp(1j * _gauge_phase(f, g)) * f, g)


def edge_decay(field: SpectralField, fraction: float = 0.05) -> float:
    """Largest |f(x)| on the outer ``fraction`` of the box on each side."""
    f = np.abs(to_physical(field))
    m = max(1, int(round(fraction * field.grid.n)))
    return float(max(f[:m].max(), f[-m:].max()))


def write_field(path, field: SpectralField) -> None:
    """CSV: a ``n,L`` header row, then ``k,re,im`` rows in centered order."""
    g = field.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "L"])
        w.writerow([g.n, repr(g.L)])
        w.writerow(["k", "re", "im"])
        for k, c in zip(g.k, field.coeffs):
            w.writerow([int(k), repr(float(c.real)), repr(float(c.imag))])


def read_field(path) -> SpectralField:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 3 or rows[0] != ["n", "L"] or rows[2] != ["k", "re", "im"]:
        raise ValueError(f"{path}: not a field file")
    grid = FrequencyGrid(int(rows[1][0]), float(rows[1][1]))
    body = rows[3:]
    if len(body) != grid.n:
        raise ValueError(f"{path}: expected {grid.n} modes, found {len(body)}")
    ks = np.array([int(r[0]) for r in body])
    if not np.array_equal(ks, grid.k):
        raise ValueError(f"{path}: modes out of order")
    c = np.array([float(r[1]) + 1j * float(r[2]) for r in body])
    return SpectralField(grid, c)


def gaussian_field(grid: FrequencyGrid, amplitude: float = 1.0, width: float = 2.0, x0: float = 0.0):
    """amplitude * exp(-(x-x0)^2 / width^2), sampled and transformed."""
    x = grid.x
    return to_spectral(amplitude * np.exp(-((x - x0) ** 2) / width**2), grid)


def random_field(grid: FrequencyGrid, s: float, rng: np.random.Generator,
                 damping: float = 0.51, window: float | None = None) -> SpectralField:
    """Unit-H^s sample: i.i.d. complex Gaussians times <xi>^(-s-damping).

    With ``window`` the physical field is multiplied by exp(-x^2/window^2)
    before normalising, which keeps the sample localised when the box grows.
    """
    z = rng.standard_normal(grid.n) + 1j * rng.standard_normal(grid.n)
    f = SpectralField(grid, z * sobolev_weight(grid.xi, -s - damping))
    if window is not None:
        f = to_spectral(to_physical(f) * np.exp(-grid.x**2 / window**2), grid)
    return f * (1.0 / hs_norm(f, s))


def rng_stream(seed: int, *keys) -> np.random.Generator:
    """Independent counter-based stream for ``(seed, *keys)``.

    String keys are hashed stably so streams do not depend on run order.
    """
    ints = [int(seed)]
    for key in keys:
        if isinstance(key, str):
            ints.append(int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little"))
        else:
            ints.append(int(key))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(ints)))
