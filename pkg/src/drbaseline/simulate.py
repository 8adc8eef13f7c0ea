"""Forward simulation of consumption policies along scenario paths.

A *batch policy* is a callable ``policy(t, windows, dr, z) -> actions`` acting
on all paths of a bundle at once (``windows`` is (n, Y)). Scalar policies
``policy(t, state) -> action`` can be lifted with :func:`lift`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from drbaseline.baselines import DrProgram, baseline_rows
from drbaseline.mdp import State
from drbaseline.scenarios import PathBundle
from drbaseline.utility import UtilityParams, intrinsic_baseline

BatchPolicy = Callable[[int, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def fast_net_utility(a, z, params: UtilityParams):
    """Unchecked net utility for hot loops (inputs assumed in-domain)."""
    return z * params.gamma * -np.expm1(-a / params.rho) - params.omega * a


@dataclass
class SimResult:
    actions: np.ndarray
    payoffs: np.ndarray
    baselines: np.ndarray
    final_windows: np.ndarray

    @property
    def totals(self) -> np.ndarray:
        return self.payoffs.sum(axis=1)

    def mean_and_se(self) -> tuple[float, float]:
        tot = self.totals
        se = float(tot.std(ddof=1) / math.sqrt(tot.size)) if tot.size > 1 else 0.0
        return float(tot.mean()), se


def simulate_batch(policy: BatchPolicy, paths: PathBundle, program: DrProgram,
                   params: UtilityParams) -> SimResult:
    windows = paths.initial_windows(program.Y)
    n, T = paths.n_paths, paths.T
    actions = np.empty((n, T))
    payoffs = np.empty((n, T))
    baselines = np.empty((n, T))
    for t in range(T):
        dr = paths.dr[:, t]
        z = paths.z[:, t]
        a = np.clip(np.asarray(policy(t, windows, dr, z), dtype=float), 0.0, params.a_hat)
        b = baseline_rows(windows, program, params.a_hat)
        actions[:, t] = a
        baselines[:, t] = b
        payoffs[:, t] = fast_net_utility(a, z, params) + dr * program.r * np.maximum(b - a, 0.0)
        off = dr == 0
        if off.any():
            windows[off] = np.concatenate([a[off, None], windows[off, :-1]], axis=1)
    return SimResult(actions, payoffs, baselines, windows)


def lift(policy: Callable[[int, State], float]) -> BatchPolicy:
    """Batch wrapper for a scalar ``policy(t, state)``."""

    def act(t, windows, dr, z):
        return np.array([policy(t, State(tuple(w), int(y), float(zz)))
                         for w, y, zz in zip(windows, dr, z)])

    return act


def simulate_policy(policy: Callable[[int, State], float] | BatchPolicy, paths: PathBundle,
                    program: DrProgram, params: UtilityParams, *, batch: bool = False
                    ) -> tuple[float, float]:
    """Mean total payoff over paths and its standard error."""
    pol = policy if batch else lift(policy)
    return simulate_batch(pol, paths, program, params).mean_and_se()


def intrinsic_policy(params: UtilityParams) -> BatchPolicy:
    """Consume a^B(z_t) every day, ignoring the program."""

    def act(t, windows, dr, z):
        return np.asarray(intrinsic_baseline(z, params), dtype=float)

    return act
