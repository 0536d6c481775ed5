"""Uniform-grid signals, Fourier transforms and spectral convolution.

Transform convention (used by every other module, never re-derived there)::

    forward:  g_hat(w) = int g(x) exp(+2 pi i w x) dx
    inverse:  g(x)     = int g_hat(w) exp(-2 pi i w x) dw

Frequencies are in cycles per unit length.  Under this convention
differentiation in x is multiplication by ``-2 pi i w``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Uniform grid ``x_j = x_min + j * spacing`` for ``j = 0 .. n-1``."""

    x_min: float
    x_max: float
    n: int

    @property
    def spacing(self) -> float:
        return (self.x_max - self.x_min) / self.n

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.spacing * np.arange(self.n)

    @property
    def freqs(self) -> np.ndarray:
        """Frequency axis in FFT order (cycles per unit)."""
        return np.fft.fftfreq(self.n, d=self.spacing)

    @property
    def dfreq(self) -> float:
        return 1.0 / self.length

    @property
    def nyquist(self) -> float:
        return 0.5 / self.spacing


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def make_grid(x_min: float, x_max: float, n: int) -> Grid:
    """Build a grid whose interior strictly contains the search region [0, 1].

    Raises
    ------
    ValueError
        If ``n`` is not a power of two (or is below 16), the bounds are
        reversed, or [0, 1] is not strictly inside ``(x_min, x_max)``.
    """
    if isinstance(n, bool) or int(n) != n or not _is_power_of_two(int(n)):
        raise ValueError(f"grid size must be a power of two, got {n}")
    if n < 16:
        raise ValueError(f"grid size must be at least 16, got {n}")
    if not x_min < x_max:
        raise ValueError(f"reversed grid bounds: x_min={x_min} >= x_max={x_max}")
    if not (x_min < 0.0 and x_max > 1.0):
        raise ValueError(f"[0, 1] must lie strictly inside ({x_min}, {x_max})")
    return Grid(float(x_min), float(x_max), int(n))


# Left padding 4 is ample for Gaussian-tailed test functions; the right side
# carries the exponential tail of Kf for kernels supported on x > 0.
DEFAULT_GRID = Grid(-4.5, 13.5, 2**15)


@dataclass(frozen=True, eq=False)
class SampledSignal:
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 1 or values.shape[0] != self.grid.n:
            raise ValueError(
                f"expected {self.grid.n} samples, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("signal contains non-finite values")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    def real(self) -> "SampledSignal":
        return SampledSignal(self.grid, np.real(self.values))

    def norm2(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.spacing))

    def norm1(self) -> float:
        return float(np.sum(np.abs(self.values)) * self.grid.spacing)

    def to_csv(self, path: str | Path) -> None:
        """Write ``x,value`` rows with 17 significant digits."""
        if self.is_complex:
            raise ValueError("CSV export supports real-valued signals only")
        with open(path, "w", newline="") as fh:
            fh.write("x,value\n")
            for xi, vi in zip(self.x, self.values):
                fh.write(f"{xi:.17g},{vi:.17g}\n")

    @classmethod
    def from_csv(cls, path: str | Path) -> "SampledSignal":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["x", "value"]:
                raise ValueError(f"{path}: expected header 'x,value', got {header}")
            rows = [(float(a), float(b)) for a, b in reader]
        if len(rows) < 2:
            raise ValueError(f"{path}: too few rows")
        x = np.array([r[0] for r in rows])
        step = (x[-1] - x[0]) / (len(x) - 1)
        grid = make_grid(x[0], x[0] + step * len(x), len(x))
        return cls(grid, np.array([r[1] for r in rows]))


@dataclass(frozen=True, eq=False)
class SpectralSignal:
    """Complex amplitudes on ``grid.freqs`` (FFT order)."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != (self.grid.n,):
            raise ValueError(
                f"expected {self.grid.n} amplitudes, got shape {values.shape}"
            )
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def freqs(self) -> np.ndarray:
        return self.grid.freqs

    def energy(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.dfreq)


def sample_spectrum(grid: Grid, func: Callable[[np.ndarray], np.ndarray]) -> SpectralSignal:
    """Evaluate an analytic transform on the grid's frequency axis."""
    return SpectralSignal(grid, func(grid.freqs))


def forward_ft(s: SampledSignal) -> SpectralSignal:
    """Riemann-sum approximation of ``int g(x) exp(2 pi i w x) dx``.

    The phase factor for ``x_min != 0`` is applied here so callers always
    see the transform of the function on its true axis.
    """
    grid = s.grid
    w = grid.freqs
    # sum_j g_j exp(+2 pi i k j / n) == n * ifft(g)
    core = grid.n * np.fft.ifft(s.values)
    return SpectralSignal(grid, grid.spacing * np.exp(2j * np.pi * w * grid.x_min) * core)


def inverse_ft(S: SpectralSignal) -> SampledSignal:
    """Dual of :func:`forward_ft`; returns complex samples."""
    grid = S.grid
    w = grid.freqs
    vals = grid.dfreq * np.fft.fft(S.values * np.exp(-2j * np.pi * w * grid.x_min))
    return SampledSignal(grid, vals)


def convolve(f: SampledSignal, kernel) -> SampledSignal:
    """Spectral convolution ``(K f)(x) = int K(x - y) f(y) dy``.

    ``kernel`` is either an object with an analytic ``khat`` (see
    :mod:`cpdeconv.kernels`) or a :class:`SampledSignal` on the same grid.
    The product is taken on the grid's periodic frequency lattice, so
    ``f`` and ``K f`` must be negligible at the grid edges.
    """
    F = forward_ft(f)
    if isinstance(kernel, SampledSignal):
        if kernel.grid != f.grid:
            raise ValueError("signal and kernel are sampled on different grids")
        K = forward_ft(kernel).values
    else:
        K = kernel.khat(f.grid.freqs)
    out = inverse_ft(SpectralSignal(f.grid, K * F.values))
    if not (f.is_complex or (isinstance(kernel, SampledSignal) and kernel.is_complex)):
        return out.real()
    return out
