"""Test functions with one known jump, and class-membership checks.

Every function has the form ``f(x) = s(x) + a_jump * T(x - theta)`` where
``T(x) = 1{x >= 0} - Phi_sigma(x)`` and ``s`` is a sum of Gaussian bumps.
T jumps by exactly 1 at 0 while its one-sided derivatives of all orders
agree, so ``g_f = s' - a_jump * phi_sigma(. - theta)`` is smooth and a single
template serves every smoothness class.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import brentq
from scipy.special import ndtr

from .spectral import DEFAULT_GRID, Grid, SampledSignal

_SQRT2PI = math.sqrt(2.0 * math.pi)


class MembershipError(ValueError):
    """The constructed function does not belong to the requested class."""


@dataclass(frozen=True)
class ClassSpec:
    kind: str
    a: float
    L: float
    m: float | None = None
    nu: float | None = None

    def __post_init__(self):
        if self.kind not in ("Fm", "Anu"):
            raise ValueError(f"class kind must be 'Fm' or 'Anu', got {self.kind!r}")
        if not (self.a > 0 and self.L > 0):
            raise ValueError(f"class needs a > 0 and L > 0, got a={self.a}, L={self.L}")
        if self.kind == "Fm" and not (self.m is not None and self.m >= 1):
            raise ValueError(f"Fm class needs m >= 1, got {self.m}")
        if self.kind == "Anu" and not (self.nu is not None and self.nu > 0):
            raise ValueError(f"Anu class needs nu > 0, got {self.nu}")

    @classmethod
    def from_dict(cls, d: dict, a: float | None = None) -> "ClassSpec":
        return cls(d["kind"], float(d.get("a", a)), float(d["L"]),
                   m=d.get("m"), nu=d.get("nu"))

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "a": self.a, "L": self.L}
        if self.kind == "Fm":
            out["m"] = self.m
        else:
            out["nu"] = self.nu
        return out


@dataclass(frozen=True)
class Bump:
    center: float
    amp: float
    width: float

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f"bump width must be positive, got {self.width}")

    def __call__(self, x):
        return self.amp * np.exp(-0.5 * ((x - self.center) / self.width) ** 2)

    def derivative(self, x):
        u = (x - self.center) / self.width
        return -self.amp * u / self.width * np.exp(-0.5 * u * u)

    def spectrum(self, omega):
        w = np.asarray(omega, dtype=float)
        return (self.amp * self.width * _SQRT2PI
                * np.exp(-2 * np.pi**2 * self.width**2 * w**2 + 2j * np.pi * w * self.center))


@dataclass(frozen=True)
class MembershipReport:
    jump_ok: bool
    smooth_budget_used: float
    passed: bool


@dataclass(frozen=True, eq=False)
class ChangePointFunction:
    theta: float
    a_jump: float
    sigma: float
    bumps: tuple = ()
    class_spec: ClassSpec | None = None
    grid: Grid = field(default=DEFAULT_GRID, repr=False)

    def smooth(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for b in self.bumps:
            out = out + b(x)
        return out

    def template(self, x):
        """``T(x - theta)`` with T right-continuous at the jump."""
        u = np.asarray(x, dtype=float) - self.theta
        return np.where(u >= 0, 1.0, 0.0) - ndtr(u / self.sigma)

    def __call__(self, x):
        return self.smooth(x) + self.a_jump * self.template(x)

    def g(self, x):
        """Continuous extension of f' across theta."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for b in self.bumps:
            out = out + b.derivative(x)
        u = (x - self.theta) / self.sigma
        return out - self.a_jump * np.exp(-0.5 * u * u) / (self.sigma * _SQRT2PI)

    def spectrum(self, omega):
        """Analytic transform of f."""
        w = np.asarray(omega, dtype=float)
        out = np.zeros(w.shape, dtype=complex)
        for b in self.bumps:
            out = out + b.spectrum(w)
        nz = w != 0
        ws = np.where(nz, w, 1.0)
        T = np.where(nz, -np.expm1(-2 * np.pi**2 * self.sigma**2 * ws**2) / (-2j * np.pi * ws), 0.0)
        return out + self.a_jump * np.exp(2j * np.pi * w * self.theta) * T

    def g_spectrum(self, omega):
        """Analytic transform of g_f; contains no delta from the jump."""
        w = np.asarray(omega, dtype=float)
        out = np.zeros(w.shape, dtype=complex)
        for b in self.bumps:
            out = out + (-2j * np.pi * w) * b.spectrum(w)
        return out - self.a_jump * np.exp(-2 * np.pi**2 * self.sigma**2 * w**2
                                          + 2j * np.pi * w * self.theta)

    def sampled(self, grid: Grid | None = None) -> SampledSignal:
        grid = grid or self.grid
        return SampledSignal(grid, self(grid.x))

    def smooth_sampled(self, grid: Grid | None = None) -> SampledSignal:
        grid = grid or self.grid
        return SampledSignal(grid, self.smooth(grid.x))

    def to_spec(self) -> dict:
        out = {"theta": self.theta, "a": self.a_jump, "sigma": self.sigma,
               "bumps": [{"center": b.center, "amp": b.amp, "width": b.width} for b in self.bumps]}
        if self.class_spec is not None:
            out["class"] = self.class_spec.to_dict()
        return out

    @property
    def function_id(self) -> str:
        blob = json.dumps(self.to_spec(), sort_keys=True).encode()
        return "cpf-" + hashlib.sha256(blob).hexdigest()[:12]


def _spectral_band(f: ChangePointFunction) -> float:
    """Frequency beyond which every Gaussian factor of g_hat is below 1e-20."""
    w = min([f.sigma] + [b.width for b in f.bumps])
    return math.sqrt(46.0 / (2 * math.pi**2)) / w


def budget_integral(f: ChangePointFunction, spec: ClassSpec, n: int = 40001) -> float:
    """Left-hand side of the class condition, on the same scale as L.

    For Fm this is ``int |g_hat| |w|^(m-1) dw``; for Anu it is the square root
    of ``int |g_hat|^2 exp(2 nu |w|) dw`` so that both compare against L.
    """
    W = _spectral_band(f)
    if spec.kind == "Anu":
        # the exponential weight shifts the Gaussian peak outwards
        W = W + spec.nu / (2 * math.pi**2 * min([f.sigma] + [b.width for b in f.bumps]) ** 2)
    w = np.linspace(-W, W, n)
    G = np.abs(f.g_spectrum(w))
    if spec.kind == "Fm":
        integrand = G * np.abs(w) ** (spec.m - 1)
    else:
        integrand = G**2 * np.exp(2 * spec.nu * np.abs(w))
    peak = integrand.max()
    if not np.isfinite(peak) or max(integrand[0], integrand[-1]) > 1e-12 * max(peak, 1e-300):
        raise MembershipError("class integral does not converge on the spectral band")
    val = float(trapezoid(integrand, w))
    return math.sqrt(val) if spec.kind == "Anu" else val


def check_class_membership(f: ChangePointFunction, spec: ClassSpec) -> MembershipReport:
    used = budget_integral(f, spec)
    jump_ok = abs(f.a_jump) >= spec.a
    return MembershipReport(jump_ok, used, bool(jump_ok and used <= spec.L))


def make_jump_function(theta: float, a_jump: float, sigma: float, bumps=(),
                       class_spec: ClassSpec | None = None,
                       grid: Grid = DEFAULT_GRID) -> ChangePointFunction:
    """Build ``s + a_jump T(. - theta)`` and verify its class membership.

    Raises
    ------
    ValueError
        On theta outside [0, 1], nonpositive sigma, a jump below the class
        threshold, or non-negligible tails at the grid edges.
    MembershipError
        If the smooth budget of the class is exceeded.
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if a_jump == 0:
        raise ValueError("a_jump must be nonzero")
    bumps = tuple(b if isinstance(b, Bump) else Bump(**b) for b in bumps)
    f = ChangePointFunction(float(theta), float(a_jump), float(sigma), bumps, class_spec, grid)
    edges = f(np.array([grid.x_min, grid.x_max]))
    if np.max(np.abs(edges)) > 1e-10 * max(1.0, abs(a_jump)):
        raise ValueError(f"f is not negligible at the grid edges: {edges}")
    if class_spec is not None:
        if abs(a_jump) < class_spec.a:
            raise ValueError(f"|a_jump|={abs(a_jump)} is below the class threshold a={class_spec.a}")
        report = check_class_membership(f, class_spec)
        if not report.passed:
            raise MembershipError(
                f"class budget exceeded: {report.smooth_budget_used:.6g} > L={class_spec.L}"
            )
    return f


def function_from_spec(spec: dict, grid: Grid = DEFAULT_GRID) -> ChangePointFunction:
    cls = spec.get("class")
    class_spec = ClassSpec.from_dict(cls, a=abs(spec["a"])) if cls else None
    return make_jump_function(spec["theta"], spec["a"], spec.get("sigma", 0.5),
                              spec.get("bumps", ()), class_spec, grid)


def make_hard_function(theta: float, a_jump: float, sigma: float, class_spec: ClassSpec,
                       fill: float = 0.95, center: float = -1.0, amp: float | None = None,
                       grid: Grid = DEFAULT_GRID) -> ChangePointFunction:
    """Near-budget member: one Gaussian bump whose width is tuned so the class
    integral equals ``fill * L``.

    Raises
    ------
    ValueError
        If the template alone already exceeds ``fill * L`` or no width in
        [0.05, 2] reaches the target.
    """
    amp = 0.4 * a_jump if amp is None else amp
    target = fill * class_spec.L

    def excess(width):
        f = ChangePointFunction(theta, a_jump, sigma, (Bump(center, amp, width),), None, grid)
        return budget_integral(f, class_spec) - target

    base = ChangePointFunction(theta, a_jump, sigma, (), None, grid)
    if budget_integral(base, class_spec) >= target:
        raise ValueError("the jump template alone exceeds the requested budget")
    lo, hi = 0.05, 2.0
    if excess(lo) * excess(hi) > 0:
        raise ValueError(f"no bump width in [{lo}, {hi}] fills {fill:.0%} of L={class_spec.L}")
    width = brentq(excess, lo, hi, xtol=1e-10)
    return make_jump_function(theta, a_jump, sigma, (Bump(center, amp, width),),
                              class_spec, grid)
