"""Command line entry point.

Exit codes: 0 converged run (or successful simulation), 1 iteration stopped
without converging, 2 bad arguments or configuration, 3 a stage failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

from .carleman import ConvergenceWarning
from .pipeline import FINE_SCALE, RunConfig, StageError, load_report, run, simulate_stage

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_CONFIG, EXIT_STAGE = 0, 1, 2, 3


def _cutoff(value: str):
    if value == "auto":
        return value
    try:
        return int(value)
    except ValueError:
        raise argparse.ArgumentTypeError("cutoff must be an integer or 'auto'") from None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file with RunConfig fields")
    p.add_argument("--out", dest="outdir", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--delta", type=float, help="noise level in [0, 1)")
    p.add_argument("--lambda", dest="lam", type=float, help="Carleman parameter lambda")
    p.add_argument("--beta", type=float)
    p.add_argument("--x0", type=float, nargs=2, metavar=("X", "Y"), help="Carleman pole, outside Omega")
    p.add_argument("--eps", type=float, help="regularization parameter")
    p.add_argument("--weight-range", dest="weight_range", type=float)
    p.add_argument("--cutoff", dest="n_basis", type=_cutoff, help="basis size N or 'auto'")
    p.add_argument("--cutoff-tol", dest="cutoff_tol", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--kappa0", type=float)
    p.add_argument("--stop-norm", dest="stop_norm", choices=("l2", "inf"))
    p.add_argument("--initial", choices=("linear", "zero"))
    p.add_argument("--paper-scale", action="store_true", help=f"simulate on {FINE_SCALE['nx']}x{FINE_SCALE['nx']}")
    p.add_argument("-v", "--verbose", action="store_true")


def _simulation(p: argparse.ArgumentParser) -> None:
    p.add_argument("--phantom")
    p.add_argument("--nx", type=int)
    p.add_argument("--stride", type=int, help="keep every stride-th simulation node in Omega")
    p.add_argument("--Nt", type=int)
    p.add_argument("--c", type=float, help="value of the constant phantom")
    p.add_argument("--a0", type=float, help="damping of the constant phantom")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="timereduction", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", help="simulate noisy boundary data for a phantom")
    _common(p)
    _simulation(p)
    p = sub.add_parser("invert", help="invert boundary data saved by 'simulate'")
    _common(p)
    p.add_argument("--data", dest="data_path", required=True, help="directory holding boundary_p/q.csv and boundary.json")
    p = sub.add_parser("run", help="simulate and invert in one go")
    _common(p)
    _simulation(p)
    p = sub.add_parser("report", help="summarize a finished run")
    p.add_argument("run_dir", type=Path)
    p.add_argument("--json", action="store_true", help="print the raw report")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    base = RunConfig.from_json(args.config) if getattr(args, "config", None) else RunConfig()
    changes = {}
    if args.paper_scale:
        changes.update(FINE_SCALE)
    skip = {"command", "config", "paper_scale", "verbose"}
    for key, value in vars(args).items():
        if key not in skip and value is not None:
            changes[key] = tuple(value) if key == "x0" else value
    if args.command == "invert":
        changes["phantom"] = None
    return base.replace(**changes)


def _print_report(rep: dict) -> None:
    print(f"converged      {rep['converged']}  ({rep['n_iter']} iterations, last step {rep['final_difference']:.2e})")
    if rep.get("contraction_ratio") is not None:
        print(f"decay ratio    {rep['contraction_ratio']:.3f}")
    print(f"basis size     {rep['N']}")
    for name, m in rep.get("metrics", {}).items():
        print(f"{name}: relative L2 {m['relative_l2']:.4f}  sup {m['sup_error']:.4f}")
        for label, inc in m["inclusions"].items():
            extra = f"  localization {inc['localization']:.2f}" if "localization" in inc else ""
            print(f"  {label:<12} max {inc['max']:.4f} (true {inc['true']:g}, error {inc['relative_error']:.2%}){extra}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING, format="%(message)s")

    if args.command == "report":
        try:
            rep = load_report(args.run_dir)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read report in {args.run_dir}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(json.dumps(rep, indent=2, sort_keys=True)) if args.json else _print_report(rep)
        return EXIT_OK if rep["converged"] else EXIT_NOT_CONVERGED

    try:
        config = config_from_args(args).validate()
    except (ValueError, TypeError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            if args.command == "simulate":
                simulate_stage(config)
                print(f"boundary data written to {config.outdir}")
                return EXIT_OK
            report = run(config)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    _print_report(load_report(report.outdir))
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
