"""Command-line entry point: ``drbaseline <subcommand> [--config FILE] [--seed N] ...``.

Exit codes: 0 success, 1 invariant failure, 2 usage or data error, 3 resource error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from drbaseline.errors import CapacityError, DataError, DomainError, NumericError, ParameterError
from drbaseline.experiment import ExperimentConfig, history_series, run
from drbaseline.metrics import ManipulationCurve, single_peak_check
from drbaseline.utility import estimate_params

EXIT_OK, EXIT_INVARIANT, EXIT_USAGE, EXIT_RESOURCE = 0, 1, 2, 3

log = logging.getLogger("drbaseline")


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config).apply_env()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None) is not None:
        cfg.out = args.out
    if getattr(args, "solver", None) is not None:
        cfg.solver = {"exact": "exact", "rollout": "rollout"}[args.solver]
    if getattr(args, "u_check", None) is not None:
        cfg.utility.u_check = args.u_check
    cfg.check()
    return cfg


def cmd_fit_utility(args) -> int:
    cfg = _config(args)
    hist = history_series(cfg)
    params = estimate_params(hist, cfg.utility.omega, cfg.utility.u_check,
                             a_hat_factor=cfg.utility.a_hat_factor)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    d = params.to_dict()
    d.update(n_days=int(hist.size), mean_kwh=float(hist.mean()), max_kwh=float(hist.max()))
    (out / "utility_params.json").write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")
    print(f"rho={params.rho:.4f} gamma={params.gamma:.4f} omega={params.omega:g} "
          f"a_hat={params.a_hat:.4f} u_check={params.u_check:g} "
          f"(n={hist.size}, mean={hist.mean():.3f}, max={hist.max():.3f})")
    return EXIT_OK


def cmd_gen_paths(args) -> int:
    from drbaseline.experiment import build_setup
    from drbaseline.scenarios import write_paths_csv

    cfg = _config(args)
    setup = build_setup(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_paths_csv(setup.paths, out / "paths.csv")
    print(f"wrote {setup.paths.n_paths} paths x {setup.paths.T} days to {out / 'paths.csv'}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config(args)
    manifest = run(cfg)
    for name in sorted(manifest["outputs"]):
        print(f"{Path(cfg.out) / name}")
    print(f"{Path(cfg.out) / 'manifest.json'}")
    return EXIT_OK


def cmd_validate(args) -> int:
    from drbaseline.validate import replay, run_suite

    if args.replay:
        print(replay(args.replay, seed=args.seed or 0))
        return EXIT_OK
    results = run_suite(seed=args.seed or 0, quick=args.quick)
    for res in results:
        print(res.line())
    failed = [r for r in results if r.hard and not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks ok"
          + (f"; {len(failed)} hard failures" if failed else ""))
    return EXIT_INVARIANT if failed else EXIT_OK


def cmd_report(args) -> int:
    cfg = _config(args)
    files = sorted(Path(cfg.out).glob("manipulation_*.csv"))
    if not files:
        raise DataError(f"no manipulation_*.csv files in {cfg.out}")
    for f in files:
        curve = ManipulationCurve.from_csv(f)
        ok, peak = single_peak_check(curve.series("manipulation"))
        print(f"== {f.name}  single-peaked={ok} peak at X={curve.xs[peak - 1]}")
        print(f"{'X':>3} {'bias_no_dr%':>12} {'bias_dr%':>10} {'manip%':>8} {'se%':>6}")
        for x, b0, b1, m, se in curve.rows():
            print(f"{x:>3} {b0:>12.2f} {b1:>10.2f} {m:>8.2f} {se:>6.2f}")
    return EXIT_OK


def _origin(exc: BaseException) -> str:
    """Name of the innermost package module the exception passed through."""
    name = "cli"
    tb = exc.__traceback__
    while tb is not None:
        mod = tb.tb_frame.f_globals.get("__name__", "")
        if mod.startswith("drbaseline."):
            name = mod.split(".", 1)[1]
        tb = tb.tb_next
    return name


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drbaseline", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, solver=False):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int, help="master RNG seed")
        p.add_argument("--out", help="output directory")
        if solver:
            p.add_argument("--solver", choices=["exact", "rollout"])

    p = sub.add_parser("fit-utility", help="estimate utility parameters from history")
    common(p)
    p.add_argument("--u-check", type=float, dest="u_check", help="maximum relative utility")
    p.set_defaults(func=cmd_fit_utility)

    p = sub.add_parser("gen-paths", help="write the scenario path bundle as CSV")
    common(p)
    p.set_defaults(func=cmd_gen_paths)

    p = sub.add_parser("run", help="full pipeline: utility, paths, solver, manipulation curves")
    common(p, solver=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="run the invariant suites")
    p.add_argument("--seed", type=int)
    p.add_argument("--quick", action="store_true", help="smaller samples")
    p.add_argument("--replay", metavar="CHECK:INDEX", help="replay one sample of a soft check")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("report", help="summarize manipulation CSVs in the output directory")
    common(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CapacityError as exc:
        print(f"resource error [{_origin(exc)}]: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (DataError, ParameterError, DomainError, FileNotFoundError) as exc:
        print(f"error [{_origin(exc)}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric error [{_origin(exc)}]: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
