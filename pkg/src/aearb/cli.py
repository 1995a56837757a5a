"""Command line entry point.

Exit codes: 0 when the run passes, 2 when the certificate fails, 1 on any
error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys

from .bounds import bound_constants, cascade_params, gaussian_tail_bound
from .config import FORMATS, load_config
from .errors import AearbError
from .experiment import run_experiment
from .report import emit_report, human_summary, report_to_json

log = logging.getLogger("aearb")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FAIL = 2


def _human(v) -> str:
    if isinstance(v, float) and v != 0 and math.isfinite(v) and not 1e-3 <= abs(v) < 1e6:
        return f"{v:.6e}"
    return f"{v:.6f}" if isinstance(v, float) else str(v)


def _print(payload: dict, fmt: str):
    if fmt == "json":
        print(json.dumps(payload, indent=2))
    elif fmt == "csv":
        print(",".join(payload))
        print(",".join("" if v is None else repr(v) if isinstance(v, float) else str(v) for v in payload.values()))
    else:
        width = max(len(k) for k in payload)
        for k, v in payload.items():
            print(f"{k.ljust(width)}  {_human(v)}")


def cmd_constants(args) -> int:
    k = bound_constants(args.c1, args.c2, args.delta)
    _print({"gamma1": k.gamma1, "gamma2": k.gamma2, "C_tilde": k.C_tilde, "T0": k.T0}, args.format)
    return EXIT_OK


def cmd_tail_bound(args) -> int:
    bound = gaussian_tail_bound(args.a, args.b)
    exact = 0.5 * math.erfc(args.a * args.b / math.sqrt(2))
    _print({"a": args.a, "b": args.b, "bound": bound, "exact": exact,
            "ratio": bound / exact if exact > 0 else math.inf}, args.format)
    return EXIT_OK


def cmd_cascade(args) -> int:
    k = bound_constants(args.c1, args.c2, args.delta)
    p = cascade_params(k, args.T, args.gamma3)
    payload = {f: getattr(p, f) for f in ("T", "alpha", "eps1", "eps2", "eps1_tilde", "eps2_tilde",
                                          "gamma3", "gamma4", "C", "T_tilde", "beyond_T_tilde")}
    _print(payload, args.format)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    formats = None if args.format is None else (args.format,)
    cfg = cfg.with_overrides(seed=args.seed, out_dir=args.out_dir, formats=formats, chunk_size=args.chunk_size)
    log.info("running %s (config hash %s)", args.config, cfg.config_hash()[:12])
    report = run_experiment(cfg, threads=args.threads)
    written = emit_report(report, cfg.output.formats, cfg.output.directory)
    for path in written:
        log.info("wrote %s", path)
    if args.format == "json":
        sys.stdout.write(report_to_json(report))
    else:
        sys.stdout.write(human_summary(report))
    return EXIT_OK if report.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    common.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it")
    common.add_argument("--out-dir", default=None, help="output directory (overrides the config)")
    common.add_argument("--format", choices=FORMATS, default=None, help="output format")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="aearb", description="Long-horizon exponential arbitrage experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="run an experiment from a YAML config")
    run.add_argument("config")
    run.add_argument("--chunk-size", type=int, default=None)
    run.set_defaults(func=cmd_run)

    c = sub.add_parser("constants", parents=[common], help="bound constants gamma1, gamma2, C_tilde, T0")
    c.add_argument("--c1", type=float, required=True)
    c.add_argument("--c2", type=float, required=True)
    c.add_argument("--delta", type=float, required=True)
    c.set_defaults(func=cmd_constants)

    t = sub.add_parser("tail-bound", parents=[common], help="Gaussian tail bound against the exact tail")
    t.add_argument("--a", type=float, required=True)
    t.add_argument("--b", type=float, required=True)
    t.set_defaults(func=cmd_tail_bound)

    k = sub.add_parser("cascade", parents=[common], help="cascade parameters at horizon T")
    k.add_argument("--c1", type=float, required=True)
    k.add_argument("--c2", type=float, required=True)
    k.add_argument("--delta", type=float, required=True)
    k.add_argument("--T", type=float, required=True)
    k.add_argument("--gamma3", type=float, default=None)
    k.set_defaults(func=cmd_cascade)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command != "run":
        args.format = args.format or "human"
    try:
        return args.func(args)
    except (AearbError, ValueError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
