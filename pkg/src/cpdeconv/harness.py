"""Monte Carlo risk sweeps, rate-exponent fits and result persistence."""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .estimator import BandwidthConfig, ChangePointEstimator, RuleMismatchError, bandwidth_for_class
from .kernels import kernel_from_spec
from .observation import noise, noiseless_response
from .smoother import DEFAULT_ETA, build_smoother
from .spectral import DEFAULT_GRID, Grid, make_grid
from .testbed import ClassSpec, function_from_spec, make_hard_function

SCHEMA_VERSION = 1
RISK_HEADER = ["eps", "h", "rmse", "rmse_stderr", "baseline_rmse", "n_reps"]
_BOOTSTRAP = 1000
_BATCH = 50

_CLASS_SCHEMA = {
    "type": "object",
    "required": ["kind", "L"],
    "properties": {
        "kind": {"enum": ["Fm", "Anu"]},
        "L": {"type": "number", "exclusiveMinimum": 0},
        "a": {"type": "number", "exclusiveMinimum": 0},
        "m": {"type": "number", "minimum": 1},
        "nu": {"type": "number", "exclusiveMinimum": 0},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "scenarios"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "grid": {
            "type": "object",
            "required": ["x_min", "x_max", "n"],
            "properties": {"x_min": {"type": "number"}, "x_max": {"type": "number"},
                           "n": {"type": "integer"}},
        },
        "eta": {"type": "number", "exclusiveMinimum": 0},
        "scenarios": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "function", "kernel", "rule", "eps_list", "n_reps"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
                    "function": {
                        "type": "object",
                        "required": ["theta", "a", "class"],
                        "properties": {
                            "theta": {"type": "number", "minimum": 0, "maximum": 1},
                            "a": {"type": "number"},
                            "sigma": {"type": "number", "exclusiveMinimum": 0},
                            "class": _CLASS_SCHEMA,
                            "bumps": {"type": "array", "items": {
                                "type": "object", "required": ["center", "amp", "width"],
                                "properties": {"center": {"type": "number"}, "amp": {"type": "number"},
                                               "width": {"type": "number", "exclusiveMinimum": 0}}}},
                            "hard": {"type": "object", "properties": {
                                "fill": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                                "center": {"type": "number"}, "amp": {"type": "number"}}},
                        },
                    },
                    "kernel": {"oneOf": [
                        {"type": "object", "required": ["family", "b"],
                         "properties": {"family": {"const": "green"},
                                        "b": {"type": "array", "minItems": 1, "items": {"type": "number"}}}},
                        {"type": "object", "required": ["family", "beta"],
                         "properties": {"family": {"const": "gamma"},
                                        "beta": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.5}}},
                    ]},
                    "rule": {
                        "type": "object", "required": ["rule"],
                        "properties": {"rule": {"enum": ["regular_fm", "singular", "regular_anu", "manual"]},
                                       "C1s": {"type": "number", "exclusiveMinimum": 0},
                                       "C3s": {"type": "number", "exclusiveMinimum": 0},
                                       "C6s": {"type": "number", "exclusiveMinimum": 0},
                                       "manual_h": {"type": "number", "exclusiveMinimum": 0}},
                    },
                    "eps_list": {"type": "array", "minItems": 1,
                                 "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}},
                    "n_reps": {"type": "integer", "minimum": 30},
                    "base_seed": {"type": "integer", "minimum": 0},
                    "baseline": {"type": "boolean"},
                    "fit": {"enum": ["power", "analytic"]},
                    "checks": {"type": "object", "properties": {
                        "slope_min": {"type": "number"}, "slope_max": {"type": "number"},
                        "baseline_worse_at_smallest": {"type": "integer", "minimum": 1},
                        "baseline_slope_gap": {"type": "number"}}},
                },
            },
        },
        "checks": {"type": "array", "items": {
            "type": "object", "required": ["type"],
            "properties": {"type": {"const": "rmse_ratio"}, "numerator": {"type": "string"},
                           "denominator": {"type": "string"}, "eps": {"type": "number"},
                           "min": {"type": "number"}}}},
    },
}


class ConfigError(ValueError):
    """A sweep configuration failed parsing or validation."""


@dataclass(frozen=True)
class Scenario:
    """One experiment: a function, a kernel, a bandwidth rule and an eps ladder."""

    name: str
    function_spec: dict
    kernel_spec: dict
    rule: dict
    eps_list: tuple
    n_reps: int
    base_seed: int = 0
    baseline: bool = False
    fit: str = "power"
    checks: dict = field(default_factory=dict)
    grid: Grid = DEFAULT_GRID
    eta: float = DEFAULT_ETA

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_list)
        if any(not 0 < e < 1 for e in eps):
            raise ConfigError(f"scenario '{self.name}': eps values must lie in (0, 1)")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError(f"scenario '{self.name}': eps_list must be strictly decreasing")
        if self.n_reps < 30:
            raise ConfigError(f"scenario '{self.name}': n_reps must be at least 30")
        object.__setattr__(self, "eps_list", eps)

    @property
    def class_spec(self) -> ClassSpec:
        fs = self.function_spec
        return ClassSpec.from_dict(fs["class"], a=abs(fs["a"]))

    @property
    def config(self) -> BandwidthConfig:
        return BandwidthConfig(**self.rule)

    def build_function(self):
        fs = self.function_spec
        if "hard" in fs and not fs.get("bumps"):
            hd = fs["hard"]
            return make_hard_function(fs["theta"], fs["a"], fs.get("sigma", 0.5), self.class_spec,
                                      fill=hd.get("fill", 0.95), center=hd.get("center", -1.0),
                                      amp=hd.get("amp"), grid=self.grid)
        return function_from_spec(fs, self.grid)

    def build_kernel(self):
        return kernel_from_spec(self.kernel_spec)

    def bandwidth(self, eps: float) -> float:
        return bandwidth_for_class(self.config, eps, self.build_kernel().beta, self.class_spec)


@dataclass(frozen=True)
class RiskRow:
    eps: float
    h: float
    rmse: float
    rmse_stderr: float
    baseline_rmse: float | None
    n_reps: int
    error: str | None = None


@dataclass
class RiskTable:
    scenario: str
    rows: list
    fitted: dict = field(default_factory=dict)

    @property
    def partial(self) -> bool:
        return any(r.error for r in self.rows)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(RISK_HEADER) + "\n")
            for r in self.rows:
                base = "" if r.baseline_rmse is None else f"{r.baseline_rmse:.17g}"
                fh.write(f"{r.eps:.17g},{r.h:.17g},{r.rmse:.17g},{r.rmse_stderr:.17g},{base},{r.n_reps}\n")

    @classmethod
    def from_csv(cls, path: str | Path, scenario: str = "") -> "RiskTable":
        rows = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != RISK_HEADER:
                raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
            for d in reader:
                rows.append(RiskRow(float(d["eps"]), float(d["h"]), float(d["rmse"]),
                                    float(d["rmse_stderr"]),
                                    float(d["baseline_rmse"]) if d["baseline_rmse"] else None,
                                    int(d["n_reps"])))
        return cls(scenario, rows)


def _bootstrap_rmse_se(sq_err: np.ndarray, seed: int) -> float:
    rng = np.random.Generator(np.random.Philox(key=seed))
    idx = rng.integers(0, sq_err.size, size=(_BOOTSTRAP, sq_err.size))
    return float(np.std(np.sqrt(sq_err[idx].mean(axis=1)), ddof=1))


def _run_eps(sc: Scenario, eps: float) -> RiskRow:
    """All replicates at one noise level; seeds are ``base_seed + rep``."""
    f = sc.build_function()
    kernel = sc.build_kernel()
    s = build_smoother(sc.eta)
    h = sc.bandwidth(eps)
    est = ChangePointEstimator(sc.grid, kernel, s, h, baseline=sc.baseline)
    resp = noiseless_response(f, kernel, sc.grid).values * sc.grid.spacing
    scale = eps * math.sqrt(sc.grid.spacing)
    theta, base = [], []
    for start in range(0, sc.n_reps, _BATCH):
        reps = range(start, min(start + _BATCH, sc.n_reps))
        inc = np.stack([resp + scale * noise(sc.base_seed + r, sc.grid.n) for r in reps])
        for rep in est.estimate_many(inc):
            theta.append(rep.theta_tilde)
            base.append(rep.baseline_theta)
    sq = (np.array(theta) - f.theta) ** 2
    seed = (sc.base_seed * 1_000_003 + int(round(eps * 1e9))) % 2**63
    rmse = float(np.sqrt(sq.mean()))
    se = _bootstrap_rmse_se(sq, seed)
    b = float(np.sqrt(np.mean((np.array(base) - f.theta) ** 2))) if sc.baseline else None
    return RiskRow(eps, h, rmse, se, b, sc.n_reps)


def _run_eps_safe(args) -> RiskRow:
    sc, eps = args
    try:
        return _run_eps(sc, eps)
    except Exception as exc:  # recorded per row; the table is flagged partial
        nan = float("nan")
        return RiskRow(eps, nan, nan, nan, None, sc.n_reps, f"{type(exc).__name__}: {exc}")


def _map(tasks: list, jobs: int) -> list:
    if jobs <= 1 or len(tasks) <= 1:
        return [_run_eps_safe(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        # map preserves submission order, so output never depends on scheduling
        return list(pool.map(_run_eps_safe, tasks))


def monte_carlo_risk(sc: Scenario, jobs: int = 1) -> RiskTable:
    """RMSE of the two-stage estimator per eps, with bootstrap standard errors."""
    rows = _map([(sc, e) for e in sc.eps_list], jobs)
    return RiskTable(sc.name, rows)


def _fit_xy(x: np.ndarray, y: np.ndarray, se: np.ndarray, seed: int = 0) -> dict:
    A = np.vstack([x, np.ones_like(x)]).T
    slope, intercept = np.linalg.lstsq(A, y, rcond=None)[0]
    rng = np.random.Generator(np.random.Philox(key=seed))
    sims = y[None, :] + rng.standard_normal((_BOOTSTRAP, y.size)) * se[None, :]
    boot = np.linalg.lstsq(A, sims.T, rcond=None)[0][0]
    lo, hi = np.percentile(boot, [2.5, 97.5])
    return {"slope": float(slope), "intercept": float(intercept), "ci95": [float(lo), float(hi)]}


def fit_rate_exponent(table: RiskTable, form: str = "power", column: str = "rmse",
                      L: float | None = None, nu: float | None = None,
                      beta: float | None = None) -> dict:
    """Least-squares slope of log(risk) against log(eps).

    ``form="analytic"`` regresses against ``log(eps (ln(L/eps)/nu)^(beta-1/2))``
    instead, for which the predicted slope is 1.  The 95% interval comes from
    refitting with each point perturbed by its bootstrap standard error.

    Raises
    ------
    ValueError
        With fewer than 4 usable rows.
    """
    rows = [r for r in table.rows
            if r.error is None and getattr(r, column) is not None
            and np.isfinite(getattr(r, column)) and getattr(r, column) > 0]
    if len(rows) < 4:
        raise ValueError(f"need at least 4 usable rows to fit a rate, got {len(rows)}")
    eps = np.array([r.eps for r in rows])
    y = np.log(np.array([getattr(r, column) for r in rows]))
    if column == "rmse":
        se = np.array([r.rmse_stderr for r in rows]) / np.exp(y)
    else:
        se = np.zeros_like(y)
    if form == "power":
        x = np.log(eps)
    elif form == "analytic":
        if None in (L, nu, beta):
            raise ValueError("analytic form needs L, nu and beta")
        x = np.log(eps * (np.log(L / eps) / nu) ** (beta - 0.5))
    else:
        raise ValueError(f"unknown fit form {form!r}")
    out = _fit_xy(x, y, np.nan_to_num(se), seed=len(rows))
    out["form"] = form
    return out


def _parse_config(raw: dict, source: str = "<config>") -> tuple[list, list]:
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = list(exc.absolute_path)
        label = ""
        if len(where) >= 2 and where[0] == "scenarios":
            sc = raw["scenarios"][where[1]]
            label = f"scenario '{sc.get('name', where[1])}': " if isinstance(sc, dict) else ""
        path = "/".join(str(p) for p in where) or "<root>"
        raise ConfigError(f"{source}: {label}{exc.message} (at {path})") from None

    g = raw.get("grid")
    try:
        grid = make_grid(g["x_min"], g["x_max"], g["n"]) if g else DEFAULT_GRID
    except ValueError as exc:
        raise ConfigError(f"{source}: grid: {exc}") from None
    eta = raw.get("eta", DEFAULT_ETA)

    scenarios, names = [], set()
    for d in raw["scenarios"]:
        name = d["name"]
        if name in names:
            raise ConfigError(f"{source}: duplicate scenario name '{name}'")
        names.add(name)
        try:
            sc = Scenario(name, d["function"], d["kernel"], d["rule"], tuple(d["eps_list"]),
                          d["n_reps"], d.get("base_seed", 0), d.get("baseline", False),
                          d.get("fit", "power"), d.get("checks", {}), grid, eta)
            kernel = sc.build_kernel()
            sc.config.check_beta(kernel.beta)
            sc.class_spec
            for e in sc.eps_list:
                sc.bandwidth(e)
        except (RuleMismatchError, ValueError, KeyError, TypeError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{source}: scenario '{name}': {exc}") from None
        scenarios.append(sc)

    checks = raw.get("checks", [])
    for c in checks:
        for key in ("numerator", "denominator"):
            if c.get(key) not in names:
                raise ConfigError(f"{source}: check refers to unknown scenario {c.get(key)!r}")
    return scenarios, checks


def load_config(path: str | Path) -> tuple[list, list]:
    """Parse and validate a sweep config.

    Raises
    ------
    ConfigError
        With the line and column for JSON syntax errors and the scenario name
        for schema or semantic violations.
    """
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        lines = text.splitlines()
        context = lines[exc.lineno - 1] if 0 < exc.lineno <= len(lines) else ""
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}\n    {context}") from None
    return _parse_config(raw, str(path))


def _scenario_checks(sc: Scenario, table: RiskTable) -> dict:
    results = {}
    ch = sc.checks
    fit = table.fitted.get("rmse")
    if "slope_min" in ch or "slope_max" in ch:
        ok = fit is not None and ch.get("slope_min", -np.inf) <= fit["slope"] <= ch.get("slope_max", np.inf)
        results["slope"] = {"pass": bool(ok), "value": None if fit is None else fit["slope"],
                            "range": [ch.get("slope_min"), ch.get("slope_max")]}
    if "baseline_worse_at_smallest" in ch:
        k = ch["baseline_worse_at_smallest"]
        tail = table.rows[-k:]
        ok = all(r.baseline_rmse is not None and r.baseline_rmse > r.rmse for r in tail)
        results["baseline_worse_at_smallest"] = {
            "pass": bool(ok), "rmse": [r.rmse for r in tail], "baseline_rmse": [r.baseline_rmse for r in tail]}
    if "baseline_slope_gap" in ch:
        bfit = table.fitted.get("baseline_rmse")
        gap = None if (fit is None or bfit is None) else fit["slope"] - bfit["slope"]
        results["baseline_slope_gap"] = {"pass": bool(gap is not None and gap >= ch["baseline_slope_gap"]),
                                         "value": gap, "min": ch["baseline_slope_gap"]}
    return results


def _write_loglog(path: Path, table: RiskTable) -> None:
    fit = table.fitted.get("rmse") or {}
    with open(path, "w") as fh:
        fh.write("log10_eps,log10_rmse,log10_rmse_lo,log10_rmse_hi,log10_baseline_rmse,log10_fit\n")
        for r in table.rows:
            if r.error:
                continue
            lo = math.log10(max(r.rmse - 2 * r.rmse_stderr, 1e-300))
            hi = math.log10(r.rmse + 2 * r.rmse_stderr)
            b = "" if not r.baseline_rmse else f"{math.log10(r.baseline_rmse):.17g}"
            f_ = ""
            if fit.get("form") == "power":
                f_ = f"{(fit['intercept'] + fit['slope'] * math.log(r.eps)) / math.log(10):.17g}"
            fh.write(f"{math.log10(r.eps):.17g},{math.log10(r.rmse):.17g},{lo:.17g},{hi:.17g},{b},{f_}\n")


def run_sweep(config_path: str | Path, out_dir: str | Path, jobs: int = 1) -> int:
    """Run every scenario, write results, and return 0 iff all checks pass."""
    scenarios, checks = load_config(config_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(sc, e) for sc in scenarios for e in sc.eps_list]
    rows = iter(_map(tasks, jobs))

    summary = {"schema_version": SCHEMA_VERSION, "scenarios": {}, "checks": []}
    tables = {}
    all_pass = True
    for sc in scenarios:
        table = RiskTable(sc.name, [next(rows) for _ in sc.eps_list])
        kernel = sc.build_kernel()
        cs = sc.class_spec
        for col in ("rmse", "baseline_rmse") if sc.baseline else ("rmse",):
            try:
                table.fitted[col] = fit_rate_exponent(table, sc.fit if col == "rmse" else "power", col,
                                                      L=cs.L, nu=cs.nu, beta=kernel.beta)
            except ValueError as exc:
                table.fitted[col] = None
                table.fitted[col + "_error"] = str(exc)
        table.to_csv(out / f"risk_{sc.name}.csv")
        _write_loglog(out / f"loglog_{sc.name}.csv", table)
        res = _scenario_checks(sc, table)
        ok = all(r["pass"] for r in res.values()) and not table.partial
        all_pass &= ok
        summary["scenarios"][sc.name] = {
            "fit": table.fitted, "checks": res, "pass": ok,
            "partial": table.partial,
            "errors": {f"{r.eps:g}": r.error for r in table.rows if r.error},
        }
        tables[sc.name] = table

    for c in checks:
        num = {r.eps: r.rmse for r in tables[c["numerator"]].rows}
        den = {r.eps: r.rmse for r in tables[c["denominator"]].rows}
        e = c["eps"]
        ratio = num[e] / den[e] if e in num and e in den and den[e] > 0 else None
        ok = ratio is not None and ratio >= c.get("min", 1.0)
        all_pass &= ok
        summary["checks"].append({**c, "value": ratio, "pass": bool(ok)})

    summary["pass"] = bool(all_pass)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return 0 if all_pass else 1


def default_jobs() -> int:
    return max(1, min(8, os.cpu_count() or 1))
