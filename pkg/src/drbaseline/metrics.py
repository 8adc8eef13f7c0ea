"""Baseline bias, manipulation curves and curve-shape diagnostics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from drbaseline.baselines import DrProgram
from drbaseline.errors import DataError
from drbaseline.scenarios import PathBundle
from drbaseline.simulate import BatchPolicy, SimResult, simulate_batch
from drbaseline.utility import UtilityParams

CURVE_COLUMNS = ("X", "bias_no_dr_pct", "bias_dr_pct", "manipulation_pct", "stderr_pct")


@dataclass
class BiasReport:
    bias_percent: float
    n_dr_days: int
    terms: np.ndarray = field(repr=False)


def bias(baselines_on_dr_days: Sequence[float], intrinsic_on_dr_days: Sequence[float]) -> float:
    """Percent by which baselines exceed intrinsic consumption, summed over DR days."""
    return bias_report(baselines_on_dr_days, intrinsic_on_dr_days).bias_percent


def bias_report(baselines_on_dr_days, intrinsic_on_dr_days) -> BiasReport:
    b = np.asarray(baselines_on_dr_days, dtype=float).ravel()
    a = np.asarray(intrinsic_on_dr_days, dtype=float).ravel()
    if b.size != a.size:
        raise DataError("baseline and intrinsic sequences differ in length")
    if b.size == 0:
        raise DataError("no DR days to compute a bias over")
    denom = a.sum()
    if not denom > 0:
        raise DataError("intrinsic consumption on DR days sums to zero")
    terms = b - a
    return BiasReport(float(100.0 * terms.sum() / denom), int(b.size), terms)


@dataclass(frozen=True)
class CurvePoint:
    bias_no_dr: float
    bias_dr: float
    stderr: float = 0.0

    @property
    def manipulation(self) -> float:
        return self.bias_dr - self.bias_no_dr


@dataclass
class ManipulationCurve:
    points: dict[int, CurvePoint]

    @property
    def xs(self) -> list[int]:
        return sorted(self.points)

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(self.points[x], name) for x in self.xs])

    def rows(self) -> list[tuple]:
        return [(x, p.bias_no_dr, p.bias_dr, p.manipulation, p.stderr)
                for x, p in sorted(self.points.items())]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(CURVE_COLUMNS)
            for row in self.rows():
                out.writerow([row[0]] + [repr(float(v)) for v in row[1:]])

    @classmethod
    def from_csv(cls, path: str | Path) -> "ManipulationCurve":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != CURVE_COLUMNS:
                raise DataError(f"{path}: expected columns {CURVE_COLUMNS}")
            pts = {int(r["X"]): CurvePoint(float(r["bias_no_dr_pct"]), float(r["bias_dr_pct"]),
                                           float(r["stderr_pct"])) for r in reader}
        return cls(pts)


def paired_point(strategic: SimResult, intrinsic: SimResult, paths: PathBundle) -> CurvePoint:
    """Pooled biases over all DR days of all paths; stderr of the per-path manipulation."""
    on = paths.dr == 1
    a_b = intrinsic.actions  # intrinsic consumption a^B(z_t)
    b_no = bias(intrinsic.baselines[on], a_b[on])
    b_dr = bias(strategic.baselines[on], a_b[on])
    per_path = []
    for i in range(paths.n_paths):
        m = on[i]
        den = a_b[i, m].sum()
        if den > 0:
            per_path.append(100.0 * (strategic.baselines[i, m] - intrinsic.baselines[i, m]).sum() / den)
    per_path = np.asarray(per_path)
    se = float(per_path.std(ddof=1) / math.sqrt(per_path.size)) if per_path.size > 1 else 0.0
    return CurvePoint(b_no, b_dr, se)


def manipulation_curve(programs: Sequence[DrProgram],
                       policy_strategic: Callable[[DrProgram], BatchPolicy],
                       policy_intrinsic: BatchPolicy, paths: PathBundle,
                       params: UtilityParams) -> ManipulationCurve:
    """Bias with and without strategizing for each program (one per X), same paths."""
    pts = {}
    for prog in programs:
        intr = simulate_batch(policy_intrinsic, paths, prog, params)
        strat = simulate_batch(policy_strategic(prog), paths, prog, params)
        pts[prog.X] = paired_point(strat, intr, paths)
    return ManipulationCurve(pts)


def single_peak_check(curve: Sequence[float], rel_tol: float = 1e-6) -> tuple[bool, int]:
    """Whether ``curve`` rises (weakly) to one peak region and then falls (weakly).

    Returns ``(ok, peak)`` with ``peak`` the 1-based position where the peak
    region starts. Steps smaller than ``rel_tol`` times the curve range count
    as flat.
    """
    v = np.asarray(curve, dtype=float)
    if v.size == 0:
        raise DataError("empty curve")
    eps = rel_tol * float(v.max() - v.min())
    top = v.max()
    in_peak = v >= top - eps
    first = int(np.argmax(in_peak))
    last = v.size - 1 - int(np.argmax(in_peak[::-1]))
    peak = first + 1
    if not in_peak[first:last + 1].all():
        return False, peak
    d = np.diff(v)
    rising = d[:first]
    falling = d[last:]
    ok = bool(np.all(rising >= -eps) and np.all(falling <= eps))
    return ok, peak
