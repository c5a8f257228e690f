"""Command line entry points: run, validate, kernel, boundary-bench."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .errors import LeraymarchError


def _cmd_run(args) -> int:
    from .config import parse_config
    from .runner import run

    config = parse_config(args.config)
    for note in config.notes:
        print(f"note: {note}")
    summary = run(config, output_dir=args.output_dir)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0 if summary.get("all_checks_pass", True) else 1


def _cmd_validate(args) -> int:
    from .validate import validate

    report = validate(module_filter=args.filter)
    for module, checks in report["modules"].items():
        for check in checks:
            mark = "ok  " if check["ok"] else "FAIL"
            print(f"{mark} {module}.{check['name']}: {check['detail']}")
    print(json.dumps({"all_checks_pass": report["all_checks_pass"]}))
    return 0 if report["all_checks_pass"] else 1


def _cmd_kernel(args) -> int:
    from .kernels import (GaussianKernelSpec, heat_kernel, poisson_kernel,
                          poisson_kernel_grad)

    rows = []
    for line in sys.stdin:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        rows.append([float(tok) for tok in line.replace(",", " ").split()])
    if not rows:
        print("error: no points on stdin", file=sys.stderr)
        return 1
    pts = np.asarray(rows)
    if pts.shape[1] != args.dim:
        print(f"error: expected {args.dim} coordinates per line, "
              f"got {pts.shape[1]}", file=sys.stderr)
        return 1
    header = ",".join(f"x{i}" for i in range(args.dim))
    if args.kind == "poisson":
        vals = poisson_kernel(args.dim, pts)
        print(header + ",K")
        for p, v in zip(pts, vals):
            print(",".join(repr(float(c)) for c in p) + "," + repr(float(v)))
    elif args.kind == "poisson_grad":
        vals = poisson_kernel_grad(args.dim, pts)
        print(header + "," + ",".join(f"dK{i}" for i in range(args.dim)))
        for p, v in zip(pts, vals):
            print(",".join(repr(float(c)) for c in p) + "," +
                  ",".join(repr(float(c)) for c in v))
    else:
        spec = GaussianKernelSpec(args.diffusion, args.elapsed)
        vals = heat_kernel(spec, pts, np.zeros((1, args.dim)))
        print(header + ",N")
        for p, v in zip(pts, vals):
            print(",".join(repr(float(c)) for c in p) + "," + repr(float(v)))
    return 0


def _cmd_boundary_bench(args) -> int:
    from .runner import run_boundary_bench

    summary = run_boundary_bench(args.output_dir)
    for row in summary["benchmarks"]:
        mark = "ok  " if row["pass"] else "FAIL"
        print(f"{mark} {row['case']}: fd_err={row['fd_linf_error']:.3e} "
              f"residual={row['residual']:.3e} "
              f"ratio={row['max_series_ratio_past_1']:.3f}")
    return 0 if summary["all_checks_pass"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leraymarch",
        description="Time-discretized fixed-point solver for incompressible "
                    "flow in pressure-eliminated form")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a configured run")
    p_run.add_argument("config")
    p_run.add_argument("--output-dir", default=None)
    p_run.set_defaults(fn=_cmd_run)

    p_val = sub.add_parser("validate", help="run the oracle/property suite")
    p_val.add_argument("--filter", default=None,
                       help="restrict to one module")
    p_val.set_defaults(fn=_cmd_validate)

    p_ker = sub.add_parser("kernel",
                           help="evaluate kernels at stdin points, CSV out")
    p_ker.add_argument("--kind", choices=("poisson", "poisson_grad", "heat"),
                       default="poisson_grad")
    p_ker.add_argument("--dim", type=int, default=3)
    p_ker.add_argument("--diffusion", type=float, default=1.0)
    p_ker.add_argument("--elapsed", type=float, default=1.0)
    p_ker.set_defaults(fn=_cmd_kernel)

    p_bb = sub.add_parser("boundary-bench",
                          help="run the Robin benchmark suite")
    p_bb.add_argument("--output-dir", default=None)
    p_bb.set_defaults(fn=_cmd_boundary_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except LeraymarchError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
