"""Command-line entry point.

Exit codes: 0 success, 1 validation/config failure, 2 solver failure,
3 envelope or sweep-assertion failure, 64 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

from .config import ConfigError, load_config
from .diagnostics import DiagnosticsRecord, check_envelopes, params_from_meta
from .experiments import (
    SweepAborted,
    ValidationFailed,
    delta_sweep,
    observed_order,
    perturbation_sweep,
    refinement_study,
    run,
)
from .model import ModelInputError
from .scheme import SchemeFailure

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_ENVELOPE, EXIT_USAGE = 0, 1, 2, 3, 64

log = logging.getLogger("haptofv")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def example_config_path() -> Path:
    return Path(str(resources.files("haptofv") / "data" / "example.cfg"))


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="config file (key = value lines)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (u64)")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)

    parser = _Parser(prog="haptofv", parents=[common], description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    sub.add_parser("run", parents=[common], help="single simulation with diagnostics and envelope checks")
    p = sub.add_parser("delta-sweep", parents=[common], help="regularisation limit delta -> 0")
    p.add_argument("--deltas", type=_floats, help="descending positive list, e.g. 1e-1,1e-2,1e-3")
    p = sub.add_parser("perturb-sweep", parents=[common], help="stability under initial perturbations")
    p.add_argument("--epsilons", type=_floats)
    p.add_argument("--mode", choices=["smooth_bump", "seeded_noise"])
    p = sub.add_parser("refine", parents=[common], help="grid refinement self-convergence study")
    p.add_argument("--levels", type=int)
    p = sub.add_parser("check", parents=[common], help="re-run envelope checks on a diagnostics CSV")
    p.add_argument("diagnostics", help="diagnostics.csv written by 'run'")
    return parser


def _load(args):
    path = getattr(args, "config", None)
    cfg = load_config(path if path is not None else example_config_path())
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _out_dir(args, cfg) -> Path:
    out = getattr(args, "out", None) or cfg.out_dir or "out"
    return Path(out)


def _report_sweep(result, quiet: bool):
    if not quiet:
        for name, passed, detail in result.assertions:
            print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
    return EXIT_OK if result.ok else EXIT_ENVELOPE


def _dispatch(args) -> int:
    quiet = getattr(args, "quiet", False)
    if args.command == "check":
        try:
            record = DiagnosticsRecord.from_csv(args.diagnostics)
            params = params_from_meta(record.meta)
        except (OSError, KeyError, ValueError) as exc:
            print(f"error: cannot read diagnostics {args.diagnostics}: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        report = check_envelopes(record, params)
        if not quiet:
            print(report.to_text(), end="")
        return EXIT_OK if report.ok else EXIT_ENVELOPE

    cfg = _load(args)
    out = _out_dir(args, cfg)
    if args.command == "run":
        result = run(cfg, out_dir=out)
        if not quiet:
            print(result.envelopes.to_text(), end="")
            print(f"steps={result.trajectory.steps} boundary_tail={result.tail:.3g} "
                  f"(tolerance {cfg.tail_tolerance:g}){' formal delta=0 run' if result.trajectory.formal else ''}")
        return EXIT_OK if result.envelopes.ok else EXIT_ENVELOPE
    if args.command == "delta-sweep":
        return _report_sweep(delta_sweep(cfg, args.deltas, out_dir=out), quiet)
    if args.command == "perturb-sweep":
        return _report_sweep(perturbation_sweep(cfg, args.epsilons, args.mode, out_dir=out), quiet)
    if args.command == "refine":
        result = refinement_study(cfg, args.levels, out_dir=out)
        if not quiet:
            print(f"observed order (L1 psi): {observed_order(result):.3f}")
        return _report_sweep(result, quiet)
    raise AssertionError(args.command)


def cli_main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if getattr(args, "quiet", False) else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except (ConfigError, ValidationFailed, ModelInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SweepAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        cause = exc.__cause__
        return EXIT_VALIDATION if isinstance(cause, ValidationFailed) else EXIT_SOLVER
    except SchemeFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
