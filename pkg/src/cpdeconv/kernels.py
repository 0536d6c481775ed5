"""Convolution kernels with polynomially decaying spectra.

Two families are supported:

* ``green(b_1, .., b_k)``: ``K = v_1 * .. * v_k`` with
  ``khat(w) = prod_j (1 - 2 pi i w / b_j)^-1`` and ill-posedness index k.
  Under the forward convention ``exp(+2 pi i w x)`` the factor with parameter
  b is the transform of ``|b| exp(-b x)`` on the half-line ``sign(b) x > 0``.
* ``gamma(beta)``: the gamma density of shape ``beta <= 1/2``, not in L2,
  with ``khat(w) = (1 - 2 pi i w)^-beta``.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import gammaln

from .spectral import SampledSignal, SpectralSignal, forward_ft, inverse_ft

AUDIT_OMEGA_MAX = 1e3
AUDIT_SAMPLES = 512


class AssumptionKError(ValueError):
    """|khat| is not sandwiched by (1 + w^2)^(-beta/2) on the audited band."""


@dataclass(frozen=True, eq=False)
class Kernel:
    family: str
    params: tuple
    beta: float
    khat: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    k_time: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    kappa_low: float = float("nan")
    kappa_high: float = float("nan")

    @property
    def kernel_id(self) -> str:
        return f"{self.family}({','.join(f'{p:g}' for p in self.params)})"

    def to_spec(self) -> dict:
        if self.family == "green":
            return {"family": "green", "b": list(self.params)}
        return {"family": "gamma", "beta": self.params[0]}


def _with_audit(kernel: Kernel) -> Kernel:
    kl, kh = audit_assumption_K(kernel, AUDIT_OMEGA_MAX, AUDIT_SAMPLES)
    object.__setattr__(kernel, "kappa_low", kl)
    object.__setattr__(kernel, "kappa_high", kh)
    return kernel


def _series_inverse_power(A: float, B: float, m: int, order: int) -> np.ndarray:
    """Taylor coefficients of (A + B u)^-m up to u^(order-1)."""
    k = np.arange(order)
    # binom(-m, k) = (-1)^k binom(m+k-1, k)
    logc = gammaln(m + k) - gammaln(m) - gammaln(k + 1)
    return A ** (-m) * (-B / A) ** k * np.exp(logc)


def _green_partial_fractions(b: tuple) -> list:
    """Return ``(b_l, n, c)`` with ``khat = sum c (1 - s/b_l)^-n``, s = 2 pi i w."""
    mult = Counter(b)
    terms = []
    for bl, ml in mult.items():
        series = np.zeros(ml)
        series[0] = 1.0
        for bj, mj in mult.items():
            if bj == bl:
                continue
            # with u = 1 - s/b_l the factor (1 - s/b_j)^-m_j becomes
            # ((1 - b_l/b_j) + u b_l/b_j)^-m_j
            factor = _series_inverse_power(1.0 - bl / bj, bl / bj, mj, ml)
            series = np.convolve(series, factor)[:ml]
        for n in range(1, ml + 1):
            terms.append((bl, n, series[ml - n]))
    return terms


def green_kernel(b) -> Kernel:
    """Convolution of k one-sided exponentials; beta = k.

    Raises
    ------
    ValueError
        If ``b`` is empty or has a zero entry.
    """
    b = tuple(float(v) for v in b)
    if not b:
        raise ValueError("green kernel needs at least one parameter")
    if any(v == 0.0 or not math.isfinite(v) for v in b):
        raise ValueError(f"green kernel parameters must be finite and nonzero, got {b}")

    def khat(omega):
        s = 2j * np.pi * np.asarray(omega, dtype=float)
        out = np.ones(s.shape, dtype=complex)
        for bj in b:
            out = out / (1.0 - s / bj)
        return out

    terms = _green_partial_fractions(b)

    def k_time(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for bl, n, c in terms:
            side = np.sign(bl) * x > 0
            xs = np.where(side, x, 0.0)
            val = c * abs(bl) ** n * np.abs(xs) ** (n - 1) * np.exp(-bl * xs) / math.factorial(n - 1)
            out += np.where(side, val, 0.0)
            if n == 1:
                # midpoint of the one-sided limits at the origin
                out += np.where(x == 0, 0.5 * c * abs(bl), 0.0)
        return out

    return _with_audit(Kernel("green", b, float(len(b)), khat, k_time))


def gamma_kernel(beta: float) -> Kernel:
    """Gamma(beta, 1) density; singular at 0 and outside L2 for beta <= 1/2."""
    beta = float(beta)
    if not 0.0 < beta <= 0.5:
        raise ValueError(f"gamma kernel needs 0 < beta <= 1/2, got {beta}")

    def khat(omega):
        # principal branch; 1 - 2 pi i w never crosses the negative real axis
        return (1.0 - 2j * np.pi * np.asarray(omega, dtype=float)) ** (-beta)

    lg = math.lgamma(beta)

    def k_time(x):
        x = np.asarray(x, dtype=float)
        pos = x > 0
        xs = np.where(pos, x, 1.0)
        return np.where(pos, np.exp((beta - 1.0) * np.log(xs) - xs - lg), 0.0)

    return _with_audit(Kernel("gamma", (beta,), beta, khat, k_time))


def kernel_from_spec(spec: dict) -> Kernel:
    """Build a kernel from ``{"family": "green", "b": [...]}`` or
    ``{"family": "gamma", "beta": ...}``."""
    family = spec.get("family")
    if family == "green":
        return green_kernel(spec["b"])
    if family == "gamma":
        return gamma_kernel(spec["beta"])
    raise ValueError(f"unknown kernel family {family!r}")


def audit_assumption_K(kernel: Kernel, omega_max: float = AUDIT_OMEGA_MAX,
                       n_samples: int = AUDIT_SAMPLES) -> tuple[float, float]:
    """Tightest ``(kappa_low, kappa_high)`` on a log-spaced band up to omega_max.

    The sandwich can only fail asymptotically, so a wrong ``beta`` is flagged
    by the log-log slope of ``|khat| (1 + w^2)^(beta/2)`` over the top decade.

    Raises
    ------
    AssumptionKError
        If that slope exceeds 0.1 in magnitude or a constant is not positive
        and finite.
    """
    if not omega_max >= 50.0:
        raise ValueError(f"omega_max must be at least 50 to resolve the tail, got {omega_max}")
    if n_samples < 16:
        raise ValueError("need at least 16 audit samples")
    omega = np.concatenate([[0.0], np.logspace(-3, np.log10(omega_max), n_samples - 1)])
    ratio = np.abs(kernel.khat(omega)) * (1.0 + omega**2) ** (kernel.beta / 2)
    lo, hi = float(ratio.min()), float(ratio.max())
    if not (lo > 0 and math.isfinite(hi)):
        raise AssumptionKError(f"{kernel.kernel_id}: degenerate sandwich ({lo}, {hi})")
    top = omega >= omega_max / 10
    slope = np.polyfit(np.log(omega[top]), np.log(ratio[top]), 1)[0]
    if abs(slope) > 0.1:
        raise AssumptionKError(
            f"{kernel.kernel_id}: |khat| (1+w^2)^(beta/2) has tail slope {slope:.3f}; "
            f"beta={kernel.beta} does not match the spectral decay"
        )
    return lo, hi


def invert(kernel: Kernel, Kf: SampledSignal) -> SampledSignal:
    """Recover f from Kf by dividing by khat.

    For a green kernel this is the differential operator
    ``prod_j (1 + b_j^-1 d/dx)``, applied spectrally.
    """
    F = forward_ft(Kf)
    out = inverse_ft(SpectralSignal(Kf.grid, F.values / kernel.khat(Kf.grid.freqs)))
    return out if Kf.is_complex else out.real()
