"""Rollout against exact DP on the same paths.

Runs both solvers at the largest Y the exact solver can hold in memory (or
--Y), prints the two manipulation curves side by side, and the paired
rollout-vs-heuristic improvement at --improve-Y.

    python3 scripts/rollout_vs_exact.py --Y 5 --r 0.12
"""

import argparse

import numpy as np

from drbaseline.baselines import DrProgram
from drbaseline.exact_dp import estimate_bytes
from drbaseline.experiment import ExperimentConfig, build_setup, run_curves
from drbaseline.metrics import single_peak_check
from drbaseline.rollout import RolloutConfig, verify_improvement


def largest_exact_y(cfg: ExperimentConfig, upto: int) -> int:
    budget = cfg.memory_budget_mb * 2 ** 20
    ok = [y for y in range(1, upto + 1)
          if y <= cfg.dp_max_Y and estimate_bytes(cfg.horizon, cfg.grids.n_actions, y,
                                                   cfg.grids.z_bins, False) <= budget]
    return max(ok)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--Y", type=int, default=7, help="requested Y; falls back if exact cannot hold it")
    ap.add_argument("--r", type=float, default=0.12)
    ap.add_argument("--paths", type=int, default=100)
    ap.add_argument("--eval-paths", type=int, default=100)
    ap.add_argument("--improve-Y", type=int, default=7)
    ap.add_argument("--seeds", type=int, default=30)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    cfg = ExperimentConfig()
    cfg.program.r, cfg.seed = [args.r], args.seed
    cfg.paths.n_paths, cfg.paths.n_eval_paths = args.paths, args.eval_paths
    Y = min(args.Y, largest_exact_y(cfg, args.Y))
    if Y != args.Y:
        print(f"exact DP cannot hold Y={args.Y}; comparing at Y={Y}")
    cfg.program.Y = Y
    res = {}
    for solver in ("exact", "rollout"):
        cfg.solver = solver
        curves, meta = run_curves(cfg)
        res[solver] = (curves[args.r], meta)
    e, r = res["exact"][0], res["rollout"][0]
    print(f"\nY={Y} r={args.r:g}: manipulation % (se)")
    print(f"{'X':>3} {'exact':>14} {'rollout':>14}")
    for x in e.xs:
        pe, pr = e.points[x], r.points[x]
        print(f"{x:>3} {pe.manipulation:>8.2f} ({pe.stderr:.2f}) {pr.manipulation:>8.2f} ({pr.stderr:.2f})")
    me, mr = e.series("manipulation"), r.series("manipulation")
    print(f"|diff| at X=Y: {abs(me[-1] - mr[-1]):.2f} pp; single-peaked exact="
          f"{single_peak_check(me)[0]} rollout={single_peak_check(mr)[0]}")
    print("theta:", res["rollout"][1]["thetas"])

    cfg.program.Y = args.improve_Y
    st = build_setup(cfg)
    rcfg = RolloutConfig(cfg.paths.n_fit_paths, args.eval_paths, args.seed)
    print(f"\nrollout vs heuristic at Y={args.improve_Y}, {args.seeds} seeds:")
    for X in np.unique([1, (args.improve_Y + 1) // 2, args.improve_Y]):
        rep = verify_improvement(st.model, DrProgram(int(X), args.improve_Y, args.r), st.params,
                                 rcfg, st.grid, n_seeds=args.seeds)
        print(f"  X={X}: {rep.line()}")


if __name__ == "__main__":
    main()
