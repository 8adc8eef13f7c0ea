"""Approximated HighXofY error on AWGN windows.

Prints, per Y and X, the share of windows with |error| < 5% and error
percentiles. With --oracle-bound it also reports the best share any
approximation of the form mean + c * std could reach, with c tuned per (Y, X)
on the same windows.

    python3 scripts/approximation_error.py --paths 20 --csv approx_errors.csv
"""

import argparse
import csv

import numpy as np

from drbaseline.baselines import approximation_errors
from drbaseline.experiment import ExperimentConfig, build_setup


def oracle_share(wins: np.ndarray, X: int, tol: float = 5.0) -> float:
    """Best share of |error| < tol over mean + c * std, c on a fine grid."""
    m, s = wins.mean(axis=1), wins.std(axis=1, ddof=1)
    actual = np.sort(wins, axis=1)[:, -X:].mean(axis=1)
    best = 0.0
    for c in np.linspace(-1.0, 3.0, 801):
        approx = m + c * s
        ok = (approx > 0) & (np.abs(actual - approx) < tol / 100 * approx)
        best = max(best, float(ok.mean()))
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=20)
    ap.add_argument("--snr", type=float, default=3.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--ys", type=int, nargs="+", default=[5, 7, 10])
    ap.add_argument("--csv", help="write per-(Y, X) rows here")
    ap.add_argument("--oracle-bound", action="store_true")
    args = ap.parse_args(argv)

    cfg = ExperimentConfig()
    cfg.paths.n_paths, cfg.snr_db, cfg.seed = args.paths, args.snr, args.seed
    setup = build_setup(cfg)
    cons = setup.paths.consumption
    rows = []
    for Y in args.ys:
        wins = np.lib.stride_tricks.sliding_window_view(cons, Y, axis=1).reshape(-1, Y)
        err = approximation_errors(wins, setup.params.a_hat)
        print(f"Y={Y}: {wins.shape[0]} windows, pooled share |err|<5% = "
              f"{np.mean(np.abs(err) < 5):.3f}")
        for X in range(1, Y + 1):
            e = err[:, X - 1]
            row = {"Y": Y, "X": X, "share_within_5pct": float(np.mean(np.abs(e) < 5)),
                   "p05": float(np.percentile(e, 5)), "median": float(np.median(e)),
                   "p95": float(np.percentile(e, 95))}
            if args.oracle_bound:
                row["oracle_share"] = oracle_share(wins, X)
            rows.append(row)
            print("  " + "  ".join(f"{k}={v:.3f}" if isinstance(v, float) else f"{k}={v}"
                                   for k, v in row.items()))
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            out = csv.DictWriter(fh, fieldnames=list(rows[0]))
            out.writeheader()
            out.writerows(rows)


if __name__ == "__main__":
    main()
