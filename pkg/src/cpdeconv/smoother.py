"""Band-pass smoothing function phi and its landmark constants.

``phi_hat`` is even, nonnegative and C-infinity, supported on
1/3 <= |w| <= 2/3, and equal to 1 on [1/3 + eta, 2/3 - eta].  The edges use
the standard smooth step ``S(u) = g(u) / (g(u) + g(1 - u))`` with
``g(u) = exp(-1/u)``.

Two evaluation paths are provided:

* :meth:`Smoother.derivative` integrates the compactly supported spectrum with
  panelled Gauss-Legendre quadrature; accurate to ~1e-13 for ``|x| <= 200``.
* :meth:`Smoother.interpolate` reads cubic splines through FFT-sampled tables;
  used in bulk by the quadrature oracle.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, minimize_scalar

from .spectral import Grid, SampledSignal, SpectralSignal, inverse_ft

DEFAULT_ETA = 1.0 / 64.0

# phi decays only sub-exponentially (its spectrum is compactly supported), so
# the tables must be wide: |phi^(k)| < 1e-12 beyond |x| ~ 3000 for eta = 1/64.
SMOOTHER_GRID = Grid(-4096.0, 4096.0, 2**19)

_QUAD_LIMIT = 200.0


class LandmarkError(RuntimeError):
    """A landmark is missing from its bracket; the smoother is malformed."""


def smooth_step(u):
    """C-infinity step: 0 for u <= 0, 1 for u >= 1."""
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
        b = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1.0 - u, 1.0)), 0.0)
    return a / (a + b)


def phi_hat(omega, eta: float = DEFAULT_ETA):
    w = np.abs(np.asarray(omega, dtype=float))
    return smooth_step((w - 1.0 / 3.0) / eta) * smooth_step((2.0 / 3.0 - w) / eta)


@dataclass(frozen=True)
class Landmarks:
    q_star: float
    q_zero: float
    d: float
    r: float
    M: float

    @property
    def q_bar(self) -> float:
        """Outer radius ``q_star + 3d/4`` of the separation annulus."""
        return self.q_star + 0.75 * self.d

    def as_dict(self) -> dict:
        return {"q_star": self.q_star, "q_zero": self.q_zero, "d": self.d, "r": self.r, "M": self.M}


def _quadrature_nodes(eta: float):
    lo, hi = 1.0 / 3.0, 2.0 / 3.0
    edges = np.unique(np.concatenate([
        np.linspace(lo, lo + eta, 9),
        np.linspace(lo + eta, hi - eta, 101),
        np.linspace(hi - eta, hi, 9),
    ]))
    xs, ws = leggauss(24)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (b - a) * xs + 0.5 * (a + b)).ravel()
    weights = (0.5 * (b - a) * ws).ravel()
    return nodes, weights * phi_hat(nodes, eta)


@dataclass(frozen=True, eq=False)
class Smoother:
    eta: float
    grid: Grid
    phi_hat: SpectralSignal = field(repr=False)
    phi: SampledSignal = field(repr=False)
    phi_prime: SampledSignal = field(repr=False)
    phi_second: SampledSignal = field(repr=False)
    landmarks: Landmarks | None = None

    def __post_init__(self):
        nodes, weights = _quadrature_nodes(self.eta)
        object.__setattr__(self, "_nodes", nodes)
        object.__setattr__(self, "_weights", weights)
        object.__setattr__(self, "_splines", {})

    def spectrum(self, omega):
        """Analytic ``phi_hat`` for this eta."""
        return phi_hat(omega, self.eta)

    def derivative(self, x, order: int = 0):
        """``phi^(order)(x)`` by direct quadrature of the inverse transform."""
        x = np.asarray(x, dtype=float)
        if np.any(np.abs(x) > _QUAD_LIMIT):
            raise ValueError(f"quadrature evaluation is limited to |x| <= {_QUAD_LIMIT}")
        flat = x.ravel()
        out = np.empty(flat.size)
        coef = 2.0 * self._weights * (2.0 * np.pi * self._nodes) ** order
        # Re[(-i)^k exp(-i a)] = cos(a + k pi / 2)
        for start in range(0, flat.size, 4096):
            chunk = flat[start:start + 4096]
            arg = 2.0 * np.pi * np.multiply.outer(chunk, self._nodes) + 0.5 * np.pi * order
            out[start:start + 4096] = np.cos(arg) @ coef
        return out.reshape(x.shape) if x.shape else float(out[0])

    def interpolate(self, x, order: int = 0):
        """``phi^(order)(x)`` from the sampled tables; zero outside them."""
        table = {0: self.phi, 1: self.phi_prime, 2: self.phi_second}[order]
        spline = self._splines.get(order)
        if spline is None:
            spline = CubicSpline(table.x, table.values)
            self._splines[order] = spline
        x = np.asarray(x, dtype=float)
        inside = (x >= table.grid.x_min) & (x <= table.x[-1])
        return np.where(inside, spline(np.where(inside, x, 0.0)), 0.0)


def build_smoother(eta: float = DEFAULT_ETA, grid: Grid | None = None) -> Smoother:
    """Construct phi for the given plateau margin and locate its landmarks.

    Raises
    ------
    ValueError
        If ``eta`` is outside (0, 1/32).
    """
    if not 0.0 < eta < 1.0 / 32.0:
        raise ValueError(f"eta must lie in (0, 1/32), got {eta}")
    return _build_cached(float(eta), grid or SMOOTHER_GRID)


@functools.lru_cache(maxsize=8)
def _build_cached(eta: float, grid: Grid) -> Smoother:
    if grid.nyquist <= 2.0 / 3.0:
        raise ValueError("smoother grid too coarse to hold the spectrum")
    w = grid.freqs
    spec = phi_hat(w, eta)
    tables = []
    for order in range(3):
        S = SpectralSignal(grid, spec * (-2j * np.pi * w) ** order)
        tables.append(inverse_ft(S).real())
    s = Smoother(eta, grid, SpectralSignal(grid, spec), *tables)
    object.__setattr__(s, "landmarks", locate_landmarks(s))
    return s


def locate_landmarks(s: Smoother) -> Landmarks:
    """Find q_star, q_zero, d, r and M for a built smoother.

    Scans run at spacing 1e-4 on the spline tables.  q_star is the scan
    argmin of phi' on [3/8, 3/4] refined by a three-point quadratic fit on
    quadrature values; q_zero is the sign change of phi' on [3/4, 3/2]
    bracketed to 1e-12 on the quadrature evaluator.
    """
    if s.grid.spacing > 1e-3 * 64 or s.grid.x_min > -2 or s.grid.x_max < 2:
        raise ValueError("smoother grid must cover [-2, 2]")

    step = 1e-4
    xs = np.arange(3 / 8, 3 / 4 + step / 2, step)
    i = int(np.argmin(s.interpolate(xs, 1)))
    if i == 0 or i == len(xs) - 1:
        raise LandmarkError("minimum of phi' is not interior to [3/8, 3/4]")
    y0, y1, y2 = s.derivative(xs[i - 1:i + 2], 1)
    q_star = float(xs[i] + 0.5 * step * (y0 - y2) / (y0 - 2 * y1 + y2))

    xs = np.arange(3 / 4, 3 / 2 + step / 2, step)
    d1 = s.interpolate(xs, 1)
    flips = np.nonzero(np.diff(np.sign(d1)) != 0)[0]
    if len(flips) != 1:
        raise LandmarkError(f"expected one zero of phi' in [3/4, 3/2], found {len(flips)}")
    k = flips[0]
    lo, hi = xs[k] - step, xs[k + 1] + step
    q_zero = float(brentq(lambda x: s.derivative(x, 1), lo, hi, xtol=1e-12))
    d = q_zero - q_star

    r = _separation_constant(s, q_star, d)
    M = abs(float(s.derivative(0.0, 2)))
    if not r > 0:
        raise LandmarkError(f"q_star is not a separated minimum (r = {r})")
    return Landmarks(q_star, q_zero, d, r, M)


def _separation_constant(s: Smoother, q_star: float, d: float) -> float:
    """inf over |x - q_star| > d/2 of phi'(x) - phi'(q_star).

    Dense 1e-4 scan on [-8, 8] plus the table's local minima elsewhere, each
    candidate polished on the quadrature evaluator.
    """
    base = s.derivative(q_star, 1)
    dense = np.arange(-8.0, 8.0, 1e-4)
    table = s.phi_prime
    outer = np.abs(table.x) > 8.0
    u = np.concatenate([table.x[outer & (table.x < 0)], dense, table.x[outer & (table.x > 0)]])
    v = np.concatenate([table.values[outer & (table.x < 0)], s.interpolate(dense, 1),
                        table.values[outer & (table.x > 0)]])
    far = np.abs(u - q_star) > d / 2
    candidates = [q_star - d / 2, q_star + d / 2]
    # local minima of the table away from q_star, polished exactly
    idx = np.nonzero(far[1:-1] & (v[1:-1] <= v[:-2]) & (v[1:-1] <= v[2:]))[0] + 1
    idx = idx[np.argsort(v[idx])[:8]]
    for j in idx:
        a, b = u[j - 1], u[j + 1]
        if abs(u[j]) > _QUAD_LIMIT - 1:
            candidates.append(u[j])
            continue
        res = minimize_scalar(lambda x: s.derivative(x, 1), bounds=(a, b), method="bounded",
                              options={"xatol": 1e-10})
        if abs(res.x - q_star) > d / 2:
            candidates.append(res.x)
    vals = [s.derivative(c, 1) if abs(c) <= _QUAD_LIMIT else s.interpolate(c, 1)
            for c in candidates]
    return float(min(vals) - base)
