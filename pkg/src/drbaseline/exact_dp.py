"""Tabular backward induction over the action-grid lattice of consumption windows.

A window of length Y whose entries lie on a G-point action grid is encoded as
the base-G integer of its grid indices, most recent entry most significant.
Every window reachable from a grid-snapped initial window is on this lattice,
so solving over the full lattice covers the reachable set exactly.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from drbaseline.baselines import DrProgram, Method, baseline_rows
from drbaseline.errors import CapacityError, ParameterError
from drbaseline.mdp import DrChain, Horizon, State, ZDistribution
from drbaseline.utility import (
    UtilityParams,
    dr_day_policy,
    intrinsic_baseline,
    net_utility,
    penalized_optimum,
)

log = logging.getLogger(__name__)

DEFAULT_MEMORY_BUDGET_MB = 2048
_TIE_TOL = 1e-12


@dataclass(frozen=True)
class ActionGrid:
    points: tuple[float, ...]

    def __post_init__(self):
        pts = tuple(float(p) for p in self.points)
        object.__setattr__(self, "points", pts)
        if len(pts) < 2:
            raise ParameterError("action grid needs at least two points")
        if pts[0] != 0.0:
            raise ParameterError("action grid must start at 0")
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ParameterError("action grid must be strictly increasing")

    @classmethod
    def uniform(cls, a_hat: float, n: int = 10) -> "ActionGrid":
        return cls(tuple(np.linspace(0.0, a_hat, n)))

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def step(self) -> float:
        return float(np.max(np.diff(self.points)))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.points)

    def index(self, value: float, tol: float = 1e-9) -> int:
        i = int(np.abs(self.as_array() - value).argmin())
        if abs(self.points[i] - value) > tol:
            raise LookupError(f"{value} is not an action-grid point")
        return i

    def snap(self, values) -> np.ndarray:
        """Index of the nearest grid point for each value."""
        g = self.as_array()
        v = np.asarray(values, dtype=float)
        idx = np.searchsorted(g, v).clip(1, g.size - 1)
        left = g[idx - 1]
        right = g[idx]
        return np.where(v - left <= right - v, idx - 1, idx)


def _argmax_smallest(q: np.ndarray) -> np.ndarray:
    """Row-wise index of the smallest action whose value is within tolerance of the max."""
    best = q.max(axis=-1, keepdims=True)
    tol = _TIE_TOL * np.maximum(1.0, np.abs(best))
    return (q >= best - tol).argmax(axis=-1)


def lattice_windows(grid: ActionGrid, Y: int) -> np.ndarray:
    """(G**Y, Y) array of window values in lattice-index order."""
    G = grid.size
    digits = np.indices((G,) * Y).reshape(Y, -1).T
    return grid.as_array()[digits]


def estimate_bytes(T: int, G: int, Y: int, K: int, keep_values: bool) -> int:
    W = G ** Y
    policy = T * W * 2 * K
    values = 8 * W * 2 * K * ((T + 1) if keep_values else 3)
    work = 8 * W * (Y + 4 * G + 4)
    return policy + values + work


@dataclass
class DPTables:
    """Value and policy tables from :func:`solve`.

    ``policy[t, w, y, k]`` is the grid index of the optimal action at stage t
    for lattice window ``w``, DR flag ``y`` and utility scale ``z_dist.values[k]``.
    ``values[t]`` has the same layout (without the leading t) and is kept for
    every stage when ``keep_values`` was set, otherwise only for stage 0.
    """

    program: DrProgram
    params: UtilityParams
    chain: DrChain
    grid: ActionGrid
    z_dist: ZDistribution
    T: int
    policy: np.ndarray
    values: dict[int, np.ndarray]
    baselines: np.ndarray
    initial_window: tuple[float, ...] | None = None
    intrinsic_index: np.ndarray = field(init=False)

    def __post_init__(self):
        pi = net_utility(self.grid.as_array()[None, :], np.asarray(self.z_dist.values)[:, None],
                         self.params)
        self.intrinsic_index = _argmax_smallest(pi)

    @property
    def Y(self) -> int:
        return self.program.Y

    @property
    def n_windows(self) -> int:
        return self.grid.size ** self.Y

    def window_index(self, window: Sequence[float]) -> int:
        if len(window) != self.Y:
            raise LookupError(f"window length {len(window)} != Y={self.Y}")
        idx = 0
        for v in window:
            idx = idx * self.grid.size + self.grid.index(v)
        return idx

    def window_values(self, w: int) -> tuple[float, ...]:
        G = self.grid.size
        digits = []
        for _ in range(self.Y):
            w, d = divmod(w, G)
            digits.append(d)
        return tuple(self.grid.points[d] for d in reversed(digits))

    def snap_indices(self, windows: np.ndarray) -> np.ndarray:
        """Lattice index of the grid-snapped version of each row of ``windows``."""
        digits = self.grid.snap(windows)
        G = self.grid.size
        powers = G ** np.arange(self.Y - 1, -1, -1)
        return digits @ powers

    def _key(self, t: int, state: State) -> tuple[int, int, int]:
        if not 0 <= t < self.T:
            raise LookupError(f"stage {t} outside [0, {self.T})")
        return self.window_index(state.window), state.dr_flag, self.z_dist.index(state.z)

    def action_at(self, t: int, state: State) -> float:
        w, y, k = self._key(t, state)
        return self.grid.points[int(self.policy[t, w, y, k])]

    def value_at(self, t: int, state: State) -> float:
        if t == self.T:
            return 0.0
        if t not in self.values:
            raise LookupError(f"values for stage {t} were not kept")
        w, y, k = self._key(t, state)
        return float(self.values[t][w, y, k])

    def initial_value(self, y0: int = 0, z: float | None = None) -> float:
        """V_0 at the initial window, averaged over z unless one is given."""
        if self.initial_window is None:
            raise LookupError("no initial window was supplied to solve()")
        w = self.window_index(self.initial_window)
        if z is not None:
            return float(self.values[0][w, y0, self.z_dist.index(z)])
        return float(self.values[0][w, y0] @ np.asarray(self.z_dist.probs))

    def overlay_policy(self):
        """Batch policy for simulating paths with continuous intrinsic consumption.

        Non-DR days: the realized intrinsic consumption plus the tabulated
        strategic deviation from the grid intrinsic action, looked up at the
        grid-snapped window and nearest z support point. DR days: the
        closed-form threshold policy on the actual window.
        """
        grid = self.grid.as_array()
        params, program = self.params, self.program

        def act(t: int, windows: np.ndarray, dr: np.ndarray, z: np.ndarray) -> np.ndarray:
            out = np.empty(len(z))
            on = dr == 1
            if on.any():
                b = baseline_rows(windows[on], program, params.a_hat)
                out[on] = dr_day_policy(b, z[on], program.r, params)
            off = ~on
            if off.any():
                w = self.snap_indices(windows[off])
                k = self.z_dist.nearest_index(z[off])
                a_idx = self.policy[t, w, 0, k]
                delta = grid[a_idx] - grid[self.intrinsic_index[k]]
                c = intrinsic_baseline(z[off], params)
                out[off] = np.clip(c + delta, 0.0, params.a_hat)
            return out

        return act


def solve(
    horizon: Horizon | int,
    program: DrProgram,
    params: UtilityParams,
    chain: DrChain,
    grid: ActionGrid,
    z_dist: ZDistribution,
    initial_window: Sequence[float] | None = None,
    *,
    keep_values: bool = True,
    memory_budget_mb: float = DEFAULT_MEMORY_BUDGET_MB,
) -> DPTables:
    """Backward induction from stage T-1 to 0 over the full window lattice."""
    T = horizon.T if isinstance(horizon, Horizon) else Horizon(int(horizon)).T
    Y, G, K = program.Y, grid.size, len(z_dist.values)
    if abs(grid.points[-1] - params.a_hat) > 1e-9:
        raise ParameterError(f"action grid must end at a_hat={params.a_hat}, ends at {grid.points[-1]}")
    need = estimate_bytes(T, G, Y, K, keep_values)
    if need > memory_budget_mb * 2 ** 20:
        raise CapacityError(
            f"exact DP for Y={Y}, {G} actions, T={T} needs ~{need / 2**20:.0f} MiB "
            f"(budget {memory_budget_mb} MiB); use the rollout solver instead"
        )
    if initial_window is not None:
        initial_window = tuple(grid.points[i] for i in grid.snap(initial_window))
        if len(initial_window) != Y:
            raise ParameterError(f"initial window length {len(initial_window)} != Y={Y}")

    g = grid.as_array()
    W = G ** Y
    log.info("solving DP: Y=%d X=%d r=%g method=%s W=%d T=%d", Y, program.X, program.r,
             program.method.value, W, T)
    windows = lattice_windows(grid, Y)
    base = baseline_rows(windows, program, params.a_hat)
    del windows
    shift = np.arange(G)[None, :] * G ** (Y - 1) + (np.arange(W) // G)[:, None]
    zs = np.asarray(z_dist.values)
    pz = np.asarray(z_dist.probs)
    pi = net_utility(g[None, :], zs[:, None], params)  # (K, G)
    P = chain.matrix()

    # DR days freeze the window, so their argmax does not depend on the stage.
    rebate_gain = program.r * np.maximum(base[:, None] - g[None, :], 0.0)
    dr_idx = np.empty((W, K), dtype=np.int64)
    dr_best = np.empty((W, K))
    for k in range(K):
        q = pi[k][None, :] + rebate_gain
        dr_idx[:, k] = _argmax_smallest(q)
        dr_best[:, k] = np.take_along_axis(q, dr_idx[:, k:k + 1], axis=1)[:, 0]
    del rebate_gain

    dtype = np.int8 if G <= 127 else np.int16
    policy = np.empty((T, W, 2, K), dtype=dtype)
    values: dict[int, np.ndarray] = {}
    v_next = np.zeros((W, 2, K))
    if keep_values:
        values[T] = v_next
    for t in range(T - 1, -1, -1):
        ev = (v_next @ pz) @ P.T  # (W, 2): E[V_{t+1} | y_t]
        cont0 = ev[:, 0][shift]
        v_now = np.empty((W, 2, K))
        for k in range(K):
            q = cont0 + pi[k][None, :]
            a = _argmax_smallest(q)
            policy[t, :, 0, k] = a
            v_now[:, 0, k] = np.take_along_axis(q, a[:, None], axis=1)[:, 0]
        policy[t, :, 1, :] = dr_idx
        v_now[:, 1, :] = dr_best + ev[:, 1][:, None]
        if keep_values or t == 0:
            values[t] = v_now
        v_next = v_now

    return DPTables(program=program, params=params, chain=chain, grid=grid, z_dist=z_dist, T=T,
                    policy=policy, values=values, baselines=base,
                    initial_window=initial_window)


def policy_at(tables: DPTables, t: int, state: State) -> float:
    return tables.action_at(t, state)


def bellman_recompute(tables: DPTables, t: int, state: State) -> tuple[float, float]:
    """Independent scalar recomputation of (V_t(s), smallest maximizing action)."""
    from drbaseline.mdp import immediate_payoff, transition_window

    P = tables.chain.matrix()
    best_v, best_a = -np.inf, None
    for a in tables.grid.points:
        nxt = transition_window(state, a)
        cont = 0.0
        for y2 in (0, 1):
            for z2, p in zip(tables.z_dist.values, tables.z_dist.probs):
                cont += P[state.dr_flag, y2] * p * tables.value_at(t + 1, State(nxt, y2, z2))
        v = immediate_payoff(state, a, tables.program, tables.params) + cont
        if best_a is None or v > best_v + _TIE_TOL * max(1.0, abs(best_v)):
            best_v, best_a = v, a
    return best_v, best_a


@dataclass
class CheckReport:
    name: str
    n_checked: int
    n_violations: int
    examples: list = field(default_factory=list)
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.n_violations == 0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.note})" if self.note else ""
        return f"[{status}] {self.name}: {self.n_violations}/{self.n_checked} violations{extra}"


def _neighbor_pairs(G: int, Y: int) -> tuple[np.ndarray, np.ndarray]:
    """All lattice pairs (w, w') where w' raises exactly one coordinate by one grid step."""
    W = G ** Y
    w = np.arange(W)
    lo, hi = [], []
    for i in range(Y):
        p = G ** (Y - 1 - i)
        digit = (w // p) % G
        ok = digit < G - 1
        lo.append(w[ok])
        hi.append(w[ok] + p)
    return np.concatenate(lo), np.concatenate(hi)


def _random_comparable_pairs(G: int, Y: int, n: int, rng: np.random.Generator):
    a = rng.integers(0, G, size=(n, Y))
    b = np.minimum(a + rng.integers(0, G, size=(n, Y)), G - 1)
    powers = G ** np.arange(Y - 1, -1, -1)
    return a @ powers, b @ powers


def verify_consumption_ordering(tables: DPTables, stages: Sequence[int] | None = None) -> CheckReport:
    """DR-day action <= a^B(z) <= non-DR action, within one grid step, at every state."""
    g = tables.grid.as_array()
    step = tables.grid.step
    a_b = np.asarray(intrinsic_baseline(np.asarray(tables.z_dist.values), tables.params))
    stages = range(tables.T) if stages is None else stages
    n = bad = 0
    examples = []
    for t in stages:
        dr = g[tables.policy[t, :, 1, :].astype(np.int64)]
        nd = g[tables.policy[t, :, 0, :].astype(np.int64)]
        viol = (dr > a_b[None, :] + step + 1e-9) | (nd < a_b[None, :] - step - 1e-9)
        n += viol.size
        bad += int(viol.sum())
        if viol.any() and len(examples) < 5:
            w, k = np.argwhere(viol)[0]
            examples.append((t, tables.window_values(int(w)), tables.z_dist.values[k]))
    return CheckReport("DR <= a^B <= non-DR consumption ordering", n, bad, examples)


def verify_value_monotonicity(tables: DPTables, n_random: int = 10_000,
                              seed: int = 0) -> CheckReport:
    """V_t(x, y, z) <= V_t(x', y, z) for comparable x <= x' on every kept stage."""
    G, Y = tables.grid.size, tables.Y
    lo, hi = _neighbor_pairs(G, Y)
    rlo, rhi = _random_comparable_pairs(G, Y, n_random, np.random.default_rng(seed))
    lo = np.concatenate([lo, rlo])
    hi = np.concatenate([hi, rhi])
    n = bad = 0
    examples = []
    for t, v in sorted(tables.values.items()):
        if t == tables.T:
            continue
        diff = v[lo] - v[hi]
        tol = 1e-9 * np.maximum(1.0, np.abs(v[hi]))
        viol = diff > tol
        n += viol.size
        bad += int(viol.sum())
        if viol.any() and len(examples) < 5:
            j = np.argwhere(viol)[0][0]
            examples.append((t, tables.window_values(int(lo[j])), tables.window_values(int(hi[j]))))
    return CheckReport("value monotone in window", n, bad, examples)


def verify_policy_monotone(tables: DPTables) -> CheckReport:
    """Non-DR action non-decreasing in the window (within one grid step).

    Only stated for supermodular baselines: LowXofY and the plain mean (X = Y).
    """
    prog = tables.program
    if not (prog.method is Method.LOW or (prog.X == prog.Y and prog.method is not Method.APPROX_HIGH)):
        raise ParameterError("window-monotone policy needs LowXofY or X == Y (supermodular baseline)")
    g = tables.grid.as_array()
    step = tables.grid.step
    lo, hi = _neighbor_pairs(tables.grid.size, tables.Y)
    n = bad = strict = 0
    examples = []
    for t in range(tables.T):
        a = g[tables.policy[t, :, 0, :].astype(np.int64)]
        drop = a[lo] - a[hi]
        n += drop.size
        strict += int((drop > 1e-9).sum())
        viol = drop > step + 1e-9
        bad += int(viol.sum())
        if viol.any() and len(examples) < 5:
            j, k = np.argwhere(viol)[0]
            examples.append((t, tables.window_values(int(lo[j])), tables.window_values(int(hi[j])),
                             tables.z_dist.values[k]))
    return CheckReport("non-DR action monotone in window", n, bad, examples,
                       note=f"{strict} exact-order violations")


def verify_dr_threshold(tables: DPTables) -> CheckReport:
    """DP DR-day actions vs. the closed-form threshold policy, within one grid step.

    On a coarse grid the DP's switch point between the a^B and a^U branches
    can sit away from the continuous B_th; the note counts violations where
    the DP action is within one step of the other branch.
    """
    g = tables.grid.as_array()
    step = tables.grid.step
    zs = np.asarray(tables.z_dist.values)
    p, r = tables.params, tables.program.r
    closed = dr_day_policy(tables.baselines[:, None], zs[None, :], r, p)
    a_b = np.asarray(intrinsic_baseline(zs, p))[None, :]
    a_u = np.asarray(penalized_optimum(zs, r, p))[None, :]
    n = bad = switched = 0
    examples = []
    for t in range(tables.T):
        a = g[tables.policy[t, :, 1, :].astype(np.int64)]
        viol = np.abs(a - closed) > step + 1e-9
        near = (np.abs(a - a_b) <= step + 1e-9) | (np.abs(a - a_u) <= step + 1e-9)
        n += viol.size
        bad += int(viol.sum())
        switched += int((viol & near).sum())
        if viol.any() and len(examples) < 5:
            w, k = np.argwhere(viol)[0]
            examples.append((t, tables.window_values(int(w)), float(zs[k]), float(a[w, k]),
                             float(closed[w, k])))
    note = f"{switched} on the other branch near the threshold" if bad else ""
    return CheckReport("DR-day action matches threshold policy", n, bad, examples, note)


def verify_grid_dr_optimum(tables: DPTables) -> CheckReport:
    """DP DR-day actions are grid maximizers of the one-day DR payoff.

    DR days freeze the window, so the payoff-to-go cannot depend on the action;
    the grid-restricted threshold policy must be exactly optimal.
    """
    g = tables.grid.as_array()
    zs = np.asarray(tables.z_dist.values)
    p, r = tables.params, tables.program.r
    b = tables.baselines[:, None, None]
    obj = (net_utility(g[None, None, :], zs[None, :, None], p)
           + r * np.maximum(b - g[None, None, :], 0.0))  # (W, K, G)
    best = obj.max(axis=2)
    tol = 1e-9 * np.maximum(1.0, np.abs(best))
    n = bad = 0
    examples = []
    W, K = best.shape
    for t in range(tables.T):
        idx = tables.policy[t, :, 1, :].astype(np.int64)
        got = np.take_along_axis(obj, idx[:, :, None], axis=2)[:, :, 0]
        viol = got < best - tol
        n += viol.size
        bad += int(viol.sum())
        if viol.any() and len(examples) < 5:
            w, k = np.argwhere(viol)[0]
            examples.append((t, tables.window_values(int(w)), float(zs[k]), float(g[idx[w, k]])))
    return CheckReport("DR-day action is the grid one-day optimum", n, bad, examples)


def dump_tables_csv(tables: DPTables, path: str | Path) -> None:
    """Write stage, window, dr_flag, z, value, action rows (values only where kept)."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["stage", "window", "dr_flag", "z", "value", "action"])
        for t in range(tables.T):
            vals = tables.values.get(t)
            for w in range(tables.n_windows):
                win = " ".join(repr(v) for v in tables.window_values(w))
                for y in (0, 1):
                    for k, z in enumerate(tables.z_dist.values):
                        v = repr(float(vals[w, y, k])) if vals is not None else ""
                        a = tables.grid.points[int(tables.policy[t, w, y, k])]
                        out.writerow([t, win, y, repr(z), v, repr(a)])
