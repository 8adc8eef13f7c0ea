"""Rollout over a linear non-DR heuristic.

The heuristic consumes ``a^B(z) + theta * max(window)`` on non-DR days and the
closed-form threshold action on DR days. The rollout policy scores each
candidate action by its immediate payoff plus the Monte-Carlo payoff-to-go of
the heuristic, with common random numbers shared by every candidate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from drbaseline.baselines import DrProgram, baseline_rows
from drbaseline.errors import ParameterError
from drbaseline.exact_dp import ActionGrid
from drbaseline.mdp import State
from drbaseline.scenarios import (
    STREAM_FIT,
    STREAM_ROLLOUT,
    PathBundle,
    ScenarioModel,
    rng_for,
)
from drbaseline.simulate import BatchPolicy, fast_net_utility, simulate_batch
from drbaseline.utility import UtilityParams, intrinsic_baseline

FEATURES = ("max", "mean")


@dataclass(frozen=True)
class LinearHeuristic:
    theta: float
    feature: str = "max"

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ParameterError(f"theta must lie in [0, 1], got {self.theta}")
        if self.feature not in FEATURES:
            raise ParameterError(f"unknown feature {self.feature!r}; choose from {FEATURES}")

    def phi(self, windows: np.ndarray) -> np.ndarray:
        return windows.max(axis=-1) if self.feature == "max" else windows.mean(axis=-1)


@dataclass(frozen=True)
class RolloutConfig:
    n_fit_paths: int = 10
    n_eval_paths: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.n_fit_paths < 1 or self.n_eval_paths < 1:
            raise ParameterError("path counts must be >= 1")


def default_theta_grid(step: float = 0.001) -> np.ndarray:
    n = int(round(1.0 / step))
    return np.round(np.linspace(0.0, 1.0, n + 1), 12)


class _DrRule:
    """Vectorized closed-form DR-day threshold action without domain checks."""

    def __init__(self, program: DrProgram, params: UtilityParams):
        self.program, self.params = program, params

    def __call__(self, base: np.ndarray, z: np.ndarray) -> np.ndarray:
        p, r = self.params, self.program.r
        a_b = np.clip(p.rho * np.log(z * p.gamma / (p.rho * p.omega)), 0.0, p.a_hat)
        if r == 0:
            return np.broadcast_to(a_b, np.broadcast_shapes(base.shape, a_b.shape)).copy()
        a_u = np.clip(p.rho * np.log(z * p.gamma / (p.rho * (p.omega + r))), 0.0, p.a_hat)
        b_th = (fast_net_utility(a_b, z, p) - fast_net_utility(a_u, z, p)) / r + a_u
        return np.where(base < b_th, a_b, a_u)


def heuristic_batch(windows: np.ndarray, dr: np.ndarray, z: np.ndarray, h: LinearHeuristic,
                    params: UtilityParams, program: DrProgram) -> np.ndarray:
    a_b = np.clip(params.rho * np.log(z * params.gamma / (params.rho * params.omega)),
                  0.0, params.a_hat)
    non_dr = np.clip(a_b + h.theta * h.phi(windows), 0.0, params.a_hat)
    if not np.any(dr == 1):
        return non_dr
    dr_act = _DrRule(program, params)(baseline_rows(windows, program, params.a_hat), z)
    return np.where(dr == 1, dr_act, non_dr)


def heuristic_action(state: State, h: LinearHeuristic, params: UtilityParams,
                     program: DrProgram) -> float:
    w = np.asarray(state.window, dtype=float)[None, :]
    return float(heuristic_batch(w, np.array([state.dr_flag]), np.array([state.z]), h, params,
                                 program)[0])


def heuristic_policy(h: LinearHeuristic, params: UtilityParams, program: DrProgram) -> BatchPolicy:
    def act(t, windows, dr, z):
        return heuristic_batch(windows, dr, z, h, params, program)

    return act


def _run_heuristic(windows: np.ndarray, cons: np.ndarray, dr: np.ndarray, h_theta: np.ndarray,
                   feature: str, program: DrProgram, params: UtilityParams) -> np.ndarray:
    """Total heuristic payoff along pre-drawn futures.

    ``windows`` has shape (..., E, Y); ``cons``/``dr`` have shape (E, L) and are
    shared by every leading index; ``h_theta`` broadcasts against ``windows[..., 0]``.
    Returns the summed payoff with shape ``windows.shape[:-1]``.
    """
    # window axis first: reductions over Y become elementwise ops on Y arrays
    win = np.ascontiguousarray(np.moveaxis(np.asarray(windows, dtype=float), -1, 0))
    total = np.zeros(win.shape[1:])
    rule = _DrRule(program, params)
    p = params
    r = program.r
    for j in range(cons.shape[1]):
        c = cons[:, j]
        on = dr[:, j] == 1
        z = p.rho * p.omega / p.gamma * np.exp(c / p.rho)
        phi = np.maximum.reduce(win, axis=0) if feature == "max" else win.mean(axis=0)
        a = np.clip(c + h_theta * phi, 0.0, p.a_hat)
        if on.any():
            b = baseline_rows(win[..., on], program, p.a_hat, axis=0)
            a_dr = rule(b, z[on])
            a[..., on] = a_dr
            total[..., on] += r * np.maximum(b - a_dr, 0.0)
        total += fast_net_utility(a, z, p)
        if on.all():
            continue
        if not on.any():
            win[1:] = win[:-1].copy()
            win[0] = a
        else:
            off = ~on
            win[1:, ..., off] = win[:-1, ..., off]
            front = win[0]  # view; indexing it keeps the (..., E) axis order
            front[..., off] = a[..., off]
    return total


def _fit_futures(start_state: State, t0: int, model: ScenarioModel, n: int, seed: int):
    """Futures from ``start_state`` at t0: day t0 is the state itself, later days are sampled."""
    rng = rng_for(seed, STREAM_FIT, t0)
    cons_f, dr_f = model.sample_future(rng, n, t0 + 1, start_state.dr_flag)
    c0 = float(intrinsic_baseline(start_state.z, model.params))
    cons = np.concatenate([np.full((n, 1), c0), cons_f], axis=1)
    dr = np.concatenate([np.full((n, 1), start_state.dr_flag, dtype=np.int8), dr_f], axis=1)
    return cons, dr


def fit_theta(start_state: State, model: ScenarioModel, program: DrProgram,
              params: UtilityParams, config: RolloutConfig, theta_grid=None, *,
              t0: int = 0, feature: str = "max") -> float:
    """Stationary theta maximizing the mean heuristic payoff from ``start_state``.

    Every theta is scored on the same ``n_fit_paths`` futures; ties go to the
    smallest theta.
    """
    grid = default_theta_grid() if theta_grid is None else np.asarray(theta_grid, dtype=float)
    if grid.size == 0:
        raise ParameterError("theta grid is empty")
    if np.any((grid < 0) | (grid > 1)):
        raise ParameterError("theta grid must lie in [0, 1]")
    grid = np.sort(grid)
    cons, dr = _fit_futures(start_state, t0, model, config.n_fit_paths, config.seed)
    E = config.n_fit_paths
    w0 = np.broadcast_to(np.asarray(start_state.window, dtype=float),
                         (grid.size, E, program.Y)).copy()
    totals = _run_heuristic(w0, cons, dr, grid[:, None], feature, program, params).mean(axis=1)
    best = totals.max()
    tol = 1e-12 * max(1.0, abs(best))
    return float(grid[int(np.argmax(totals >= best - tol))])


def candidate_actions(grid: ActionGrid, heuristic: np.ndarray) -> np.ndarray:
    """Sorted per-row candidates: the action grid plus each row's heuristic action."""
    g = np.broadcast_to(grid.as_array(), (heuristic.size, grid.size))
    return np.sort(np.concatenate([g, heuristic[:, None]], axis=1), axis=1)


def rollout_policy(h: LinearHeuristic, model: ScenarioModel, program: DrProgram,
                   params: UtilityParams, config: RolloutConfig, grid: ActionGrid) -> BatchPolicy:
    """Batch rollout policy.

    DR days freeze the window, so the payoff-to-go does not depend on the
    action and the exact one-step argmax is the threshold action. Non-DR days
    score grid-plus-heuristic candidates by simulation; the futures drawn at
    stage t are shared by all candidates and all rows.
    """
    rule = _DrRule(program, params)
    T = model.T

    def act(t, windows, dr, z):
        windows = np.asarray(windows, dtype=float)
        out = np.empty(len(z))
        on = dr == 1
        if on.any():
            out[on] = rule(baseline_rows(windows[on], program, params.a_hat), z[on])
        off = ~on
        if not off.any():
            return out
        w = windows[off]
        zo = z[off]
        heur = heuristic_batch(w, np.zeros(len(zo), dtype=np.int8), zo, h, params, program)
        cand = candidate_actions(grid, heur)  # (B, C)
        score = fast_net_utility(cand, zo[:, None], params)
        if t + 1 < T:
            rng = rng_for(config.seed, STREAM_ROLLOUT, t)
            cons, fdr = model.sample_future(rng, config.n_eval_paths, t + 1, 0)
            nxt = np.concatenate([cand[:, :, None], np.broadcast_to(w[:, None, :-1],
                                  (w.shape[0], cand.shape[1], w.shape[1] - 1))], axis=2)
            E = config.n_eval_paths
            win = np.broadcast_to(nxt[:, :, None, :], nxt.shape[:2] + (E, nxt.shape[2])).copy()
            togo = _run_heuristic(win, cons, fdr, h.theta, h.feature, program, params)
            score = score + togo.mean(axis=-1)
        best = score.max(axis=1, keepdims=True)
        pick = (score >= best - 1e-12 * np.maximum(1.0, np.abs(best))).argmax(axis=1)
        out[off] = cand[np.arange(cand.shape[0]), pick]
        return out

    return act


def rollout_action(state: State, t: int, h: LinearHeuristic, model: ScenarioModel,
                   program: DrProgram, params: UtilityParams, config: RolloutConfig,
                   grid: ActionGrid) -> float:
    pol = rollout_policy(h, model, program, params, config, grid)
    return float(pol(t, np.asarray([state.window], dtype=float), np.array([state.dr_flag]),
                     np.array([state.z]))[0])


@dataclass
class ImprovementReport:
    mean_diff: float
    se: float
    n: int
    heuristic_mean: float
    rollout_mean: float

    @property
    def passed(self) -> bool:
        return self.mean_diff >= -2.0 * self.se

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] rollout improvement: mean(rollout - heuristic) = {self.mean_diff:.6g} "
                f"(se {self.se:.3g}, n={self.n})")


def compare_policies(paths: PathBundle, h: LinearHeuristic, model: ScenarioModel,
                     program: DrProgram, params: UtilityParams, config: RolloutConfig,
                     grid: ActionGrid) -> ImprovementReport:
    """Paired heuristic vs. rollout total payoff along the same outer paths."""
    heur = simulate_batch(heuristic_policy(h, params, program), paths, program, params).totals
    roll = simulate_batch(rollout_policy(h, model, program, params, config, grid), paths,
                          program, params).totals
    d = roll - heur
    se = float(d.std(ddof=1) / math.sqrt(d.size)) if d.size > 1 else 0.0
    return ImprovementReport(float(d.mean()), se, int(d.size), float(heur.mean()),
                             float(roll.mean()))


def verify_improvement(model: ScenarioModel, program: DrProgram, params: UtilityParams,
                       config: RolloutConfig, grid: ActionGrid, *, n_seeds: int = 30,
                       h: LinearHeuristic | None = None, theta_grid=None,
                       outer_seed: int | None = None) -> ImprovementReport:
    """Fit theta (unless ``h`` is given), then compare on ``n_seeds`` outer paths."""
    seed = config.seed if outer_seed is None else outer_seed
    paths = model.paths(n_seeds, seed + 1, program.Y)
    if h is None:
        start = State(tuple(paths.warmup[0, :program.Y]), 0, float(paths.z[0, 0]))
        h = LinearHeuristic(fit_theta(start, model, program, params, config, theta_grid))
    return compare_policies(paths, h, model, program, params, config, grid)
