"""MDP substrate: state, window transition, DR-event chain, payoff and rebate."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from drbaseline.baselines import DrProgram, baseline
from drbaseline.errors import DomainError, ParameterError
from drbaseline.utility import UtilityParams, net_utility


@dataclass(frozen=True)
class State:
    """(recent non-DR consumption window, DR flag, utility scale)."""

    window: tuple[float, ...]
    dr_flag: int
    z: float

    def __post_init__(self):
        object.__setattr__(self, "window", tuple(float(v) for v in self.window))
        if self.dr_flag not in (0, 1):
            raise ParameterError(f"dr_flag must be 0 or 1, got {self.dr_flag}")
        if len(self.window) < 1:
            raise ParameterError("window must hold at least one value")
        if any(v < 0 for v in self.window):
            raise DomainError(f"negative consumption in window {self.window}")
        if not self.z > 0:
            raise DomainError(f"utility scale must be positive, got {self.z}")


@dataclass(frozen=True)
class DrChain:
    """Two-state DR-event Markov chain: p0 = P(DR | non-DR), p1 = P(DR | DR)."""

    p0: float = 0.2
    p1: float = 0.4

    def __post_init__(self):
        for name in ("p0", "p1"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"{name} must lie in [0, 1], got {v}")

    def matrix(self) -> np.ndarray:
        return np.array([[1.0 - self.p0, self.p0], [1.0 - self.p1, self.p1]])

    def stationary_dr_fraction(self) -> float:
        denom = self.p0 + 1.0 - self.p1
        if denom == 0:
            # p0 = 0 and p1 = 1: both states absorbing, no unique stationary law.
            raise ParameterError("chain has no unique stationary distribution")
        return self.p0 / denom


@dataclass(frozen=True)
class Horizon:
    T: int

    def __post_init__(self):
        if self.T < 1:
            raise ParameterError(f"horizon must be >= 1 day, got {self.T}")


@dataclass(frozen=True)
class ZDistribution:
    """Finite i.i.d. law of the daily utility scale."""

    values: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        if len(self.values) != len(self.probs) or not self.values:
            raise ParameterError("z values and probabilities must be non-empty and aligned")
        if any(v <= 0 for v in self.values):
            raise ParameterError("z values must be positive")
        if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-9:
            raise ParameterError(f"z probabilities must be a distribution, got {self.probs}")
        if list(self.values) != sorted(set(self.values)):
            raise ParameterError("z values must be strictly increasing")

    @classmethod
    def point(cls, z: float = 1.0) -> "ZDistribution":
        return cls((z,), (1.0,))

    def index(self, z: float, tol: float = 1e-12) -> int:
        for k, v in enumerate(self.values):
            if abs(v - z) <= tol * max(1.0, abs(v)):
                return k
        raise LookupError(f"z={z} is not in the support {self.values}")

    def nearest_index(self, z) -> np.ndarray:
        """Index of the support point closest to each z on the log scale."""
        logv = np.log(np.asarray(self.values))
        lz = np.log(np.asarray(z, dtype=float))
        return np.abs(lz[..., None] - logv).argmin(axis=-1)


def transition_window(state: State, action: float, a_hat: float | None = None) -> tuple[float, ...]:
    """Next window: DR days leave it frozen, non-DR days push ``action`` to the front."""
    if action < 0 or (a_hat is not None and action > a_hat + 1e-9):
        raise DomainError(f"action {action} outside [0, {a_hat}]")
    if state.dr_flag == 1:
        return state.window
    return (float(action),) + state.window[:-1]


def rebate(window: Sequence[float], dr_flag: int, action: float, program: DrProgram,
           a_hat: float | None = None) -> float:
    if dr_flag == 0 or program.r == 0:
        return 0.0
    return program.r * max(baseline(window, program, a_hat) - action, 0.0)


def immediate_payoff(state: State, action: float, program: DrProgram, params: UtilityParams,
                     terminal: bool = False) -> float:
    if terminal:
        return 0.0
    return net_utility(action, state.z, params) + rebate(
        state.window, state.dr_flag, action, program, params.a_hat)


def dr_transition_prob(y_now: int, y_next: int, chain: DrChain) -> float:
    if y_now not in (0, 1) or y_next not in (0, 1):
        raise ParameterError("DR flags must be 0 or 1")
    return float(chain.matrix()[y_now, y_next])
