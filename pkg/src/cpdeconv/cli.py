"""Command-line entry point: ``cpdeconv {sweep,simulate,estimate,landmarks}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .estimator import BandwidthConfig, estimate_changepoint
from .harness import ConfigError, run_sweep
from .kernels import kernel_from_spec
from .observation import PathFormatError, load_path, save_path, simulate_path
from .smoother import DEFAULT_ETA, build_smoother
from .spectral import DEFAULT_GRID, make_grid
from .testbed import ClassSpec, function_from_spec


def _json_arg(value: str) -> dict:
    """Inline JSON, or a path to a JSON file."""
    text = value if value.lstrip().startswith("{") else Path(value).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"invalid JSON: {exc}") from None


def _grid_arg(value: str):
    try:
        x_min, x_max, n = value.split(",")
        return make_grid(float(x_min), float(x_max), int(n))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"grid must be 'x_min,x_max,n': {exc}") from None


def _cmd_sweep(args) -> int:
    return run_sweep(args.config, args.out, jobs=args.jobs)


def _cmd_simulate(args) -> int:
    f = function_from_spec(args.function, args.grid)
    kernel = kernel_from_spec(args.kernel)
    path = simulate_path(f, kernel, args.eps, args.grid, args.seed)
    save_path(path, args.out)
    print(json.dumps(path.metadata()))
    return 0


def _cmd_estimate(args) -> int:
    path = load_path(args.path)
    kernel = kernel_from_spec(args.kernel)
    s = build_smoother(args.eta)
    consts = {k: getattr(args, k) for k in ("C1s", "C3s", "C6s") if getattr(args, k) is not None}
    cfg = BandwidthConfig(args.rule, manual_h=args.h, **consts)
    cls = None
    if args.class_spec is not None:
        cls = ClassSpec.from_dict(args.class_spec, a=args.class_spec.get("a", 1.0))
    report = estimate_changepoint(path, kernel, s, cfg, cls, baseline=args.baseline)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def _cmd_landmarks(args) -> int:
    s = build_smoother(args.eta)
    print(json.dumps({"eta": args.eta, **s.landmarks.as_dict()}, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cpdeconv", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sw = sub.add_parser("sweep", help="run a Monte Carlo risk sweep from a JSON config")
    sw.add_argument("--config", required=True)
    sw.add_argument("--out", required=True)
    sw.add_argument("--jobs", type=int, default=1)
    sw.set_defaults(func=_cmd_sweep)

    si = sub.add_parser("simulate", help="simulate one observation path and save it")
    si.add_argument("--function", type=_json_arg, required=True, help="function spec (JSON or file)")
    si.add_argument("--kernel", type=_json_arg, required=True, help="kernel spec (JSON or file)")
    si.add_argument("--eps", type=float, required=True)
    si.add_argument("--seed", type=int, required=True)
    si.add_argument("--grid", type=_grid_arg, default=DEFAULT_GRID, help="x_min,x_max,n (write --grid=-4.5,13.5,32768 for a negative x_min)")
    si.add_argument("--out", required=True)
    si.set_defaults(func=_cmd_simulate)

    es = sub.add_parser("estimate", help="estimate the change-point from a saved path")
    es.add_argument("--path", required=True)
    es.add_argument("--kernel", type=_json_arg, required=True)
    es.add_argument("--class", dest="class_spec", type=_json_arg, default=None)
    es.add_argument("--rule", choices=["regular_fm", "singular", "regular_anu", "manual"], default="regular_fm")
    es.add_argument("--h", type=float, default=None, help="bandwidth for --rule manual")
    es.add_argument("--C1s", type=float, default=None)
    es.add_argument("--C3s", type=float, default=None)
    es.add_argument("--C6s", type=float, default=None)
    es.add_argument("--eta", type=float, default=DEFAULT_ETA)
    es.add_argument("--baseline", action="store_true", help="also run the first-derivative estimator")
    es.set_defaults(func=_cmd_estimate)

    lm = sub.add_parser("landmarks", help="print the smoother landmark constants")
    lm.add_argument("--eta", type=float, default=DEFAULT_ETA)
    lm.set_defaults(func=_cmd_landmarks)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, PathFormatError, ValueError) as exc:
        print(f"cpdeconv {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
