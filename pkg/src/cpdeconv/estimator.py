"""Two-stage change-point estimator and the first-derivative baseline.

Stage 1 localizes the jump between the argmin and argmax of the estimated
second-derivative probe on [0, 1]; stage 2 takes the zero crossing of the
probe inside that interval.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .kernels import Kernel
from .observation import ObservationPath
from .probe import ProbeCurve, ProbePlan, default_span
from .smoother import Smoother
from .spectral import Grid
from .testbed import ClassSpec

RULES = ("regular_fm", "singular", "regular_anu", "manual")


class RuleMismatchError(ValueError):
    """The bandwidth rule does not apply to this ill-posedness index."""


@dataclass(frozen=True)
class BandwidthConfig:
    rule: str = "regular_fm"
    C1s: float = 0.5
    C3s: float = 1.0
    C6s: float = 1.0
    manual_h: float | None = None

    def __post_init__(self):
        if self.rule not in RULES:
            raise ValueError(f"unknown bandwidth rule {self.rule!r}; expected one of {RULES}")
        if not (self.C1s > 0 and self.C3s > 0 and self.C6s > 0):
            raise ValueError("bandwidth constants must be positive")
        if self.rule == "manual" and not (self.manual_h is not None and self.manual_h > 0):
            raise ValueError("manual rule needs a positive manual_h")

    def check_beta(self, beta: float) -> None:
        """Raise :class:`RuleMismatchError` unless the rule's rate result covers beta."""
        if self.rule in ("regular_fm", "regular_anu") and not beta > 0.5:
            raise RuleMismatchError(f"rule {self.rule} needs beta > 1/2, got beta={beta}")
        if self.rule == "singular" and not 0 < beta <= 0.5:
            raise RuleMismatchError(f"rule singular needs 0 < beta <= 1/2, got beta={beta}")


def bandwidth(cfg: BandwidthConfig, eps: float, beta: float, L: float | None = None,
              m: float | None = None, nu: float | None = None, kind: str = "Fm") -> float:
    """Bandwidth for the configured rule.

    * regular_fm: ``C1s (eps/L)^(2/(2m+2beta+1))``
    * singular: ``C (eps sqrt(ln 1/eps))^(2/(2beta+1))`` with ``C = C3s`` for
      Fm classes and ``C6s`` for Anu classes
    * regular_anu: ``(nu/3) / (ln(L/eps) - (beta+1/2) ln(ln(L/eps)/nu))``

    Raises
    ------
    RuleMismatchError
        If the rule does not apply to ``beta``.
    ValueError
        On eps outside (0, 1), missing class parameters, or a nonpositive
        denominator in the analytic-class rule.
    """
    if cfg.rule == "manual":
        return float(cfg.manual_h)
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    cfg.check_beta(beta)
    if cfg.rule == "regular_fm":
        if L is None or m is None:
            raise ValueError("regular_fm needs L and m")
        return cfg.C1s * (eps / L) ** (2.0 / (2.0 * m + 2.0 * beta + 1.0))
    if cfg.rule == "singular":
        C = cfg.C3s if kind == "Fm" else cfg.C6s
        return C * (eps * math.sqrt(math.log(1.0 / eps))) ** (2.0 / (2.0 * beta + 1.0))
    if L is None or nu is None:
        raise ValueError("regular_anu needs L and nu")
    lg = math.log(L / eps)
    if lg <= 0 or lg / nu <= 0:
        raise ValueError(f"regular_anu needs L/eps > 1, got L={L}, eps={eps}")
    denom = lg - (beta + 0.5) * math.log(lg / nu)
    if not denom > 0:
        raise ValueError(f"regular_anu denominator is {denom:.4g} <= 0; L/eps too small")
    return (nu / 3.0) / denom


def bandwidth_for_class(cfg: BandwidthConfig, eps: float, beta: float, spec: ClassSpec) -> float:
    return bandwidth(cfg, eps, beta, L=spec.L, m=spec.m, nu=spec.nu, kind=spec.kind)


def _in_unit(t: np.ndarray) -> np.ndarray:
    return (t >= -1e-12) & (t <= 1.0 + 1e-12)


def localize(curve: ProbeCurve) -> tuple[float, float, tuple[float, float]]:
    """Argmin and argmax of the curve over [0, 1]; ties go to the smallest t.

    Returns ``(t_hat_star, t_hat_upper_star, (lo, hi))``.
    """
    return _localize_values(curve.t, curve.values)


def _localize_values(t: np.ndarray, v: np.ndarray):
    sel = np.nonzero(_in_unit(t))[0]
    if sel.size == 0:
        raise ValueError("curve does not cover [0, 1]")
    vs = v[sel]
    ts = float(t[sel[np.argmin(vs)]])
    tu = float(t[sel[np.argmax(vs)]])
    return ts, tu, (min(ts, tu), max(ts, tu))


def _vertex(t: np.ndarray, y: np.ndarray, i: int) -> float:
    """Vertex of the parabola through (i-1, i, i+1) when it is a local minimum."""
    if 0 < i < len(y) - 1:
        y0, y1, y2 = y[i - 1], y[i], y[i + 1]
        den = y0 - 2.0 * y1 + y2
        if den > 0:
            off = 0.5 * (y0 - y2) / den
            if abs(off) <= 1.0:
                return float(t[i] + off * (t[i + 1] - t[i]))
    return float(t[i])


def _signed_root(t: np.ndarray, v: np.ndarray, i: int) -> float | None:
    """Root nearest to node i of the parabola through the signed values at i-1, i, i+1."""
    if not 0 < i < len(v) - 1:
        return None
    y0, y1, y2 = v[i - 1], v[i], v[i + 1]
    A = 0.5 * (y0 - 2.0 * y1 + y2)
    B = 0.5 * (y2 - y0)
    C = y1
    if A == 0.0:
        if B == 0.0:
            return None
        roots = [-C / B]
    else:
        disc = B * B - 4.0 * A * C
        if disc < 0:
            return None
        sq = math.sqrt(disc)
        # numerically stable pair
        q = -0.5 * (B + math.copysign(sq, B))
        roots = [q / A] + ([C / q] if q != 0 else [])
    roots = [r for r in roots if abs(r) <= 1.0]
    if not roots:
        return None
    r = min(roots, key=abs)
    return float(t[i] + r * (t[i + 1] - t[i]))


def refine(curve: ProbeCurve, A_hat: tuple[float, float]) -> float:
    """Argmin of ``|curve|`` over A_hat, refined below the lattice spacing.

    The discrete argmin (ties to the smallest t) is refined to the zero of
    the parabola through the signed neighbouring values; where no such zero
    exists, to the vertex of the parabola through ``|curve|``.  The result is
    clamped to A_hat.

    Raises
    ------
    ValueError
        If A_hat is not inside the curve's t span.
    """
    return _refine_values(curve.t, curve.values, A_hat)


def _refine_values(t: np.ndarray, v: np.ndarray, A_hat) -> float:
    lo, hi = A_hat
    tol = 1e-9 * max(1.0, abs(t[0]), abs(t[-1]))
    if lo < t[0] - tol or hi > t[-1] + tol or lo > hi:
        raise ValueError(f"A_hat={A_hat} lies outside the curve span [{t[0]}, {t[-1]}]")
    sel = np.nonzero((t >= lo - tol) & (t <= hi + tol))[0]
    av = np.abs(v)
    i = int(sel[np.argmin(av[sel])])
    if lo == hi:
        return float(lo)
    root = _signed_root(t, v, i)
    th = root if root is not None else _vertex(t, av, i)
    return float(min(max(th, lo), hi))


def baseline_argmax(curve: ProbeCurve) -> float:
    """Argmax of ``|w~_h|`` over [0, 1] with parabolic refinement."""
    return _baseline_values(curve.t, curve.values)


def _baseline_values(t: np.ndarray, v: np.ndarray) -> float:
    sel = np.nonzero(_in_unit(t))[0]
    av = np.abs(v)
    i = int(sel[np.argmax(av[sel])])
    th = _vertex(t, -av, i)
    return float(min(max(th, t[sel[0]]), t[sel[-1]]))


@dataclass(frozen=True)
class EstimateReport:
    h: float
    t_hat_star: float
    t_hat_upper_star: float
    A_hat: tuple
    theta_tilde: float
    probe_curve_id: str
    baseline_theta: float | None = None

    def __post_init__(self):
        lo, hi = self.A_hat
        if not lo <= self.theta_tilde <= hi:
            raise AssertionError(f"theta_tilde={self.theta_tilde} escaped A_hat={self.A_hat}")

    @property
    def width(self) -> float:
        return abs(self.t_hat_upper_star - self.t_hat_star)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["A_hat"] = list(self.A_hat)
        d["width"] = self.width
        return d


class ChangePointEstimator:
    """Reusable two-stage estimator at a fixed bandwidth.

    Probe plans are built once; :meth:`estimate_many` handles a batch of
    paths (rows of increments) in one transform.
    """

    def __init__(self, grid: Grid, kernel: Kernel, s: Smoother, h: float,
                 baseline: bool = False):
        self.grid, self.kernel, self.s, self.h = grid, kernel, s, float(h)
        span = default_span(s, h)
        self.plan = ProbePlan.build(grid, kernel, s, h, span, order=2)
        self.base_plan = ProbePlan.build(grid, kernel, s, h, (0.0, 1.0), order=1) if baseline else None

    def _report(self, values: np.ndarray, base_values, curve_id: str) -> EstimateReport:
        t = self.plan.t
        ts, tu, A = _localize_values(t, values)
        th = _refine_values(t, values, A)
        bth = None if base_values is None else _baseline_values(self.base_plan.t, base_values)
        return EstimateReport(self.h, ts, tu, A, th, curve_id, bth)

    def estimate(self, path: ObservationPath) -> EstimateReport:
        curve = self.plan.curve(path)
        base = None if self.base_plan is None else self.base_plan.evaluate(path.increments)
        return self._report(curve.values, base, curve.curve_id)

    def estimate_many(self, increments: np.ndarray) -> list[EstimateReport]:
        vals = self.plan.evaluate(increments)
        base = None if self.base_plan is None else self.base_plan.evaluate(increments)
        return [self._report(vals[i], None if base is None else base[i], f"batch:{i}")
                for i in range(vals.shape[0])]


def estimate_changepoint(path: ObservationPath, kernel: Kernel, s: Smoother,
                         cfg: BandwidthConfig, class_spec: ClassSpec | None = None,
                         baseline: bool = False) -> EstimateReport:
    """Full pipeline on one path: bandwidth, probe, localize, refine.

    Raises
    ------
    ValueError
        If ``class_spec`` is missing for a class-dependent rule, or from any
        component.
    """
    if cfg.rule == "manual":
        h = cfg.manual_h
    else:
        if class_spec is None:
            raise ValueError(f"rule {cfg.rule} needs a class specification")
        h = bandwidth_for_class(cfg, path.eps, kernel.beta, class_spec)
    return ChangePointEstimator(path.grid, kernel, s, h, baseline).estimate(path)
