"""Probe functionals, their deconvolution estimates, and separation diagnostics.

The probe of order k at bandwidth h is::

    ell_h(t) = h^-(k+1) int f(x) phi^(k)((x - t)/h) dx

k = 2 is the second-derivative probe whose zero crossing marks the jump;
k = 1 is the smoothed first derivative used by the baseline estimator.

Its transform is ``(-2 pi i w)^k exp(2 pi i w t) phi_hat(w h)``, so the weight
``gamma_t`` with ``<Kf, gamma_t> = ell_h(t)`` has transform
``P(w) exp(2 pi i w t)`` with ``P(w) = (-2 pi i w)^k phi_hat(w h) / khat(-w)``,
and ``gamma_t(x) = Gamma(x - t)`` for ``Gamma`` the inverse transform of P.
Every t therefore shares a single profile.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.signal import CZT

from .kernels import Kernel
from .observation import ObservationPath
from .smoother import Smoother
from .spectral import Grid, SampledSignal, SpectralSignal, inverse_ft
from .testbed import ChangePointFunction

KINDS = ("estimated", "exact", "baseline_estimated", "baseline_exact")
_SQRT2PI = math.sqrt(2.0 * math.pi)


class BandwidthError(ValueError):
    """phi_hat(w h) reaches beyond the grid's Nyquist frequency."""


@dataclass(frozen=True, eq=False)
class ProbeCurve:
    h: float
    t: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    kind: str = "estimated"
    eps: float | None = None
    seed: int | None = None

    def __post_init__(self):
        t = np.array(self.t, dtype=float)
        v = np.array(self.values, dtype=float)
        if self.kind not in KINDS:
            raise ValueError(f"unknown curve kind {self.kind!r}")
        if t.ndim != 1 or t.shape != v.shape:
            raise ValueError("t and values must be 1-d arrays of equal length")
        if not np.all(np.isfinite(v)):
            raise ValueError("curve values must be finite")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("t grid must be strictly increasing")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", v)

    @property
    def curve_id(self) -> str:
        return f"{self.kind}:h={self.h:.6g}:eps={self.eps}:seed={self.seed}"

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        with open(path, "w") as fh:
            fh.write("t,value\n")
            for a, b in zip(self.t, self.values):
                fh.write(f"{a:.17g},{b:.17g}\n")
        meta = {"h": self.h, "kind": self.kind, "eps": self.eps, "seed": self.seed}
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2))

    @classmethod
    def from_csv(cls, path: str | Path) -> "ProbeCurve":
        path = Path(path)
        meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(meta["h"], data[:, 0], data[:, 1], meta["kind"], meta.get("eps"), meta.get("seed"))


def _check_band(grid: Grid, h: float) -> None:
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    if 2.0 / (3.0 * h) >= grid.nyquist:
        raise BandwidthError(
            f"h={h:.4g} puts the probe band above the grid Nyquist {grid.nyquist:.4g}; "
            f"need h > {4.0 * grid.spacing / 3.0:.4g}"
        )


def profile_spectrum(kernel: Kernel, s: Smoother, h: float, omega, order: int = 2):
    """``(-2 pi i w)^order phi_hat(w h) / khat(-w)``."""
    w = np.asarray(omega, dtype=float)
    out = np.zeros(w.shape, dtype=complex)
    band = (np.abs(w) * h > 1.0 / 3.0) & (np.abs(w) * h < 2.0 / 3.0)
    wb = w[band]
    out[band] = (-2j * np.pi * wb) ** order * s.spectrum(wb * h) / kernel.khat(-wb)
    return out


def gamma_profile(kernel: Kernel, s: Smoother, h: float, grid: Grid, order: int = 2) -> SampledSignal:
    """The shared profile ``Gamma_h`` with ``gamma_t(x) = Gamma_h(x - t)``.

    Sampled with the spacing and size of ``grid`` on an axis centred at 0.
    The tails decay slowly for small eta, so the window should span several
    hundred h to keep wrap-around below 1e-5 of the peak.
    """
    _check_band(grid, h)
    centred = Grid(-grid.length / 2, grid.length / 2, grid.n)
    P = profile_spectrum(kernel, s, h, centred.freqs, order)
    return inverse_ft(SpectralSignal(centred, P))


def _band_rule(h: float, panels: int = 32, nodes: int = 24):
    """Gauss-Legendre nodes/weights on the positive probe band [1/(3h), 2/(3h)]."""
    x, wq = leggauss(nodes)
    edges = np.linspace(1.0 / (3.0 * h), 2.0 / (3.0 * h), panels + 1)
    a, b = edges[:-1, None], edges[1:, None]
    return (0.5 * (b - a) * x + 0.5 * (a + b)).ravel(), (0.5 * (b - a) * wq).ravel()


def sigma_z(kernel: Kernel, s: Smoother, h: float, eps: float, order: int = 2) -> float:
    """Standard deviation of ``Z_h(t) = ell~_h(t) - ell_h(t)``: ``eps ||Gamma_h||_2``."""
    w, wq = _band_rule(h, panels=64)
    P = profile_spectrum(kernel, s, h, w, order)
    return float(eps * math.sqrt(2.0 * np.sum(wq * np.abs(P) ** 2)))


def t_lattice(h: float, lo: float, hi: float) -> np.ndarray:
    """Nodes ``j dt`` in [lo, hi] with ``dt = 1/ceil(50/h) <= h/50``, so 0 and 1 are nodes."""
    per_unit = math.ceil(50.0 / h)
    j0 = math.ceil(lo * per_unit - 1e-9)
    j1 = math.floor(hi * per_unit + 1e-9)
    return np.arange(j0, j1 + 1) / per_unit


@dataclass(frozen=True, eq=False)
class ProbePlan:
    """Precomputed multiplier and chirp-z transform for one (grid, kernel, smoother, h, order).

    ``evaluate`` maps increments (1-d, or 2-d with one path per row) to the
    estimated curve on ``t``.  With ``R_k`` the zero-padded DFT of the
    increments, ``ell~(t) = 2 dw Re sum_k P(w_k) R_k exp(2 pi i w_k (t - x_min))``.
    """

    grid: Grid
    h: float
    order: int
    t: np.ndarray = field(repr=False)
    M: int = 0
    k_lo: int = 0
    coef: np.ndarray = field(default=None, repr=False)
    czt: CZT = field(default=None, repr=False)

    @classmethod
    def build(cls, grid: Grid, kernel: Kernel, s: Smoother, h: float,
              span: tuple[float, float], order: int = 2) -> "ProbePlan":
        _check_band(grid, h)
        lo, hi = span
        if not (grid.x_min < lo and hi < grid.x_max):
            raise ValueError(f"t span {span} must lie inside the grid ({grid.x_min}, {grid.x_max})")
        t = t_lattice(h, lo, hi)
        # periodic wrap must be negligible: pad past the window plus the profile tails
        M = 2 * grid.n
        while M * grid.spacing < grid.length + 600.0 * h:
            M *= 2
        dw = 1.0 / (M * grid.spacing)
        k_lo = max(1, math.floor(1.0 / (3.0 * h * dw)))
        k_hi = min(M // 2, math.ceil(2.0 / (3.0 * h * dw)))
        w = np.arange(k_lo, k_hi + 1) * dw
        P = profile_spectrum(kernel, s, h, w, order)
        coef = 2.0 * dw * P * np.exp(2j * np.pi * w * (t[0] - grid.x_min))
        dt = t[1] - t[0] if t.size > 1 else 0.0
        # CZT returns X_j = sum_k x_k W^(k j) for A = 1
        transform = CZT(k_hi - k_lo + 1, m=t.size, w=np.exp(2j * np.pi * dw * dt), a=1.0)
        phase0 = np.exp(2j * np.pi * k_lo * dw * (t - t[0]))
        t.setflags(write=False)
        plan = cls(grid, float(h), order, t, M, k_lo, coef, transform)
        object.__setattr__(plan, "_phase0", phase0)
        return plan

    def evaluate(self, increments: np.ndarray) -> np.ndarray:
        R = np.fft.rfft(increments, n=self.M, axis=-1)
        band = R[..., self.k_lo:self.k_lo + self.coef.size] * self.coef
        return np.real(self._phase0 * self.czt(band, axis=-1))

    def curve(self, path: ObservationPath) -> ProbeCurve:
        if path.grid != self.grid:
            raise ValueError("path grid does not match the probe plan")
        kind = "estimated" if self.order == 2 else "baseline_estimated"
        return ProbeCurve(self.h, self.t, self.evaluate(path.increments), kind, path.eps, path.seed)


def default_span(s: Smoother, h: float) -> tuple[float, float]:
    """[-q_bar h, 1 + q_bar h]: the search region widened for the refine stage."""
    qb = s.landmarks.q_bar
    return (-qb * h, 1.0 + qb * h)


def probe_estimate(path: ObservationPath, kernel: Kernel, s: Smoother, h: float,
                   t_grid=None, order: int = 2) -> ProbeCurve:
    """``ell~_h(t) = sum_i Gamma_h(x_i - t) dY_i`` on the h/50 lattice.

    ``t_grid`` may be ``(lo, hi)`` for the span; it defaults to
    :func:`default_span`.
    """
    span = default_span(s, h) if t_grid is None else (min(t_grid), max(t_grid))
    return ProbePlan.build(path.grid, kernel, s, h, span, order).curve(path)


def baseline_probe(source, kernel: Kernel, s: Smoother, h: float, t_grid=None,
                   mode: str = "estimated") -> ProbeCurve:
    """First-derivative probe ``w_h(t) = h^-2 int f(x) phi'((x - t)/h) dx``.

    ``source`` is an :class:`ObservationPath` for ``mode="estimated"`` and a
    :class:`ChangePointFunction` for ``mode="exact"``.
    """
    if mode == "estimated":
        return probe_estimate(source, kernel, s, h, t_grid, order=1)
    if mode == "exact":
        lo, hi = (0.0, 1.0) if t_grid is None else (min(t_grid), max(t_grid))
        t = t_lattice(h, lo, hi) if t_grid is None or len(t_grid) == 2 else np.asarray(t_grid)
        return ProbeCurve(h, t, probe_exact(source, s, h, t, order=1), "baseline_exact")
    raise ValueError(f"mode must be 'estimated' or 'exact', got {mode!r}")


def probe_exact(f: ChangePointFunction, s: Smoother, h: float, t, order: int = 2):
    """Oracle value of ``h^-(k+1) int f(x) phi^(k)((x - t)/h) dx`` in x-space.

    The indicator part of the jump template is integrated in closed form,
    ``-a h^-k phi^(k-1)((theta - t)/h)``; the Gaussian-CDF part is integrated
    by parts onto its density.  The remaining smooth integrands are Gaussian
    windowed and handled by the trapezoid rule at spacing <= h/10.
    """
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    t = np.asarray(t, dtype=float)
    flat = np.atleast_1d(t).ravel()
    a, th, sig = f.a_jump, f.theta, f.sigma
    out = -a * h**-order * s.interpolate((th - flat) / h, order - 1)

    pieces = [(th, sig, None)] + [(b.center, b.width, b) for b in f.bumps]
    for centre, width, bump in pieces:
        step = min(h, width) / 10.0
        x = np.arange(centre - 12 * width, centre + 12 * width + step / 2, step)
        if bump is None:
            dens = a * h**-order * np.exp(-0.5 * ((x - th) / sig) ** 2) / (sig * _SQRT2PI)
            k = order - 1
        else:
            dens = h ** -(order + 1) * bump(x)
            k = order
        wts = dens * step
        wts[0] *= 0.5
        wts[-1] *= 0.5
        chunk = max(1, 2**20 // x.size)
        for i in range(0, flat.size, chunk):
            U = (x[None, :] - flat[i:i + chunk, None]) / h
            out[i:i + chunk] += s.interpolate(U, k) @ wts
    return out.reshape(t.shape) if t.ndim else float(out[0])


def probe_exact_spectral(f: ChangePointFunction, s: Smoother, h: float, t, order: int = 2):
    """Independent oracle from the analytic transform of f::

        ell_h(t) = int (-2 pi i w)^k phi_hat(w h) f_hat(w)^* ... dw

    integrated over the compact probe band by Gauss-Legendre panels.
    """
    t = np.asarray(t, dtype=float)
    flat = np.atleast_1d(t).ravel()
    span = max(abs(f.theta), *(abs(b.center) + 12 * b.width for b in f.bumps), 1.0) + np.abs(flat).max()
    # about one oscillation of exp(-2 pi i w (t - x)) per panel
    w, wq = _band_rule(h, panels=max(32, math.ceil(span / (3.0 * h))))
    # <f, psi_t> = int f_hat(w) conj(psi_hat_t(w)) dw, both halves of the band
    base = wq * f.spectrum(w) * np.conj((-2j * np.pi * w) ** order) * s.spectrum(w * h)
    out = np.empty(flat.size)
    chunk = max(1, 2**21 // w.size)
    for i in range(0, flat.size, chunk):
        ph = np.exp(-2j * np.pi * np.multiply.outer(flat[i:i + chunk], w))
        out[i:i + chunk] = 2.0 * np.real(ph @ base)
    return out.reshape(t.shape) if t.ndim else float(out[0])


def exact_curve(f: ChangePointFunction, s: Smoother, h: float,
                span: tuple[float, float] | None = None, order: int = 2) -> ProbeCurve:
    span = default_span(s, h) if span is None else span
    t = t_lattice(h, *span)
    kind = "exact" if order == 2 else "baseline_exact"
    return ProbeCurve(h, t, probe_exact(f, s, h, t, order), kind)


def separation_profile(f: ChangePointFunction, s: Smoother, h: float, delta: float,
                       n_points: int = 2001) -> dict:
    """``inf_{delta < |t - theta| < q_bar h} |ell_h(t)| - |ell_h(theta)|``.

    Evaluated on ``n_points`` equispaced points per side of the annulus,
    endpoints included (the infimum over the open set equals the minimum over
    its closure by continuity).
    """
    qb = s.landmarks.q_bar
    if not 0.0 < delta < qb * h:
        raise ValueError(f"delta={delta} must lie in (0, q_bar h = {qb * h:.6g})")
    r = np.linspace(delta, qb * h, n_points)
    t = np.concatenate([f.theta - r[::-1], f.theta + r])
    vals = np.abs(probe_exact(f, s, h, t))
    centre = abs(probe_exact(f, s, h, f.theta))
    i = int(np.argmin(vals))
    return {"inf_gap": float(vals[i] - centre), "t_at_inf": float(t[i]), "centre": centre}
