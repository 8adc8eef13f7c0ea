"""Average customer baselines (High/Low/Mid X-of-Y) and the approximated HighXofY.

Windows are ordered most-recent-first; none of the methods depend on the order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from drbaseline.errors import DomainError, ParameterError
from drbaseline.truncnorm import TruncNormalSpec, sample_max_factor

SIGMA_FLOOR = 1e-9


class Method(str, Enum):
    HIGH = "high"
    LOW = "low"
    MID = "mid"
    APPROX_HIGH = "approx_high"


@dataclass(frozen=True)
class DrProgram:
    """Program parameters: baseline over the X selected of the last Y non-DR days."""

    X: int
    Y: int
    r: float
    method: Method = Method.HIGH

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if not 1 <= self.X <= self.Y:
            raise ParameterError(f"need 1 <= X <= Y, got X={self.X}, Y={self.Y}")
        if self.r < 0:
            raise ParameterError(f"rebate price must be >= 0, got {self.r}")
        if self.method is Method.MID and (self.Y - self.X) % 2:
            raise ParameterError(f"MidXofY needs X, Y of equal parity, got X={self.X}, Y={self.Y}")
        if self.method is Method.APPROX_HIGH and self.Y < 2:
            raise ParameterError("approximated HighXofY needs Y >= 2")

    def with_(self, **changes) -> "DrProgram":
        fields = {"X": self.X, "Y": self.Y, "r": self.r, "method": self.method}
        fields.update(changes)
        return DrProgram(**fields)


def _as_window(window: Sequence[float]) -> np.ndarray:
    x = np.asarray(window, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ParameterError("window must be a non-empty 1-d sequence")
    # min is NaN if any value is; max is inf if any value is
    if not (x.min() >= 0 and x.max() < math.inf):
        raise DomainError(f"window values must be finite and non-negative, got {window}")
    return x


def _check_x(X: int, Y: int) -> None:
    if not 1 <= X <= Y:
        raise ParameterError(f"need 1 <= X <= Y, got X={X}, Y={Y}")


def high_x_of_y(window: Sequence[float], X: int) -> float:
    x = _as_window(window)
    _check_x(X, x.size)
    return float(np.sort(x)[x.size - X:].sum()) / X


def low_x_of_y(window: Sequence[float], X: int) -> float:
    x = _as_window(window)
    _check_x(X, x.size)
    return float(np.sort(x)[:X].sum()) / X


def mid_x_of_y(window: Sequence[float], X: int) -> float:
    x = _as_window(window)
    _check_x(X, x.size)
    if (x.size - X) % 2:
        raise ParameterError(f"MidXofY needs X, Y of equal parity, got X={X}, Y={x.size}")
    drop = (x.size - X) // 2
    return float(np.sort(x)[drop:drop + X].sum()) / X


def fit_trunc_spec(window: Sequence[float], a_hat: float | None = None) -> TruncNormalSpec:
    """Plug-in truncated normal for a window: mean, sample std, support [0, a_hat]."""
    x = _as_window(window)
    s = float(x.std(ddof=1)) if x.size > 1 else 0.0
    upper = math.inf if a_hat is None else float(a_hat)
    mu = float(x.mean())
    if upper <= 0:
        raise ParameterError(f"a_hat must be positive, got {a_hat}")
    return TruncNormalSpec(mu=mu, sigma=max(s, SIGMA_FLOOR), lower=0.0, upper=upper)


def _approx_checks(x: np.ndarray, X: int, Y: int | None) -> int:
    if Y is None:
        Y = x.size
    if Y != x.size:
        raise ParameterError(f"window length {x.size} does not match Y={Y}")
    if Y < 2:
        raise ParameterError("approximated baselines need Y >= 2")
    _check_x(X, Y)
    return Y


def approx_high_x_of_y(
    window: Sequence[float],
    X: int,
    Y: int | None = None,
    *,
    spec: TruncNormalSpec | None = None,
    a_hat: float | None = None,
) -> float:
    """Sample mean plus (Y-X)/(Y-1) estimated-maximum excesses.

    ``spec`` fixes the truncated normal used for f(Y); by default one is fitted
    to the window with support [0, a_hat].
    """
    x = _as_window(window)
    Y = _approx_checks(x, X, Y)
    mean = float(x.mean())
    s = float(x.std(ddof=1))
    if s == 0.0:
        return mean
    if spec is None:
        spec = fit_trunc_spec(x, a_hat)
    f = sample_max_factor(Y, spec)
    return mean + (Y - X) / (Y - 1) * f * s


def approx_low_x_of_y(window: Sequence[float], X: int, Y: int | None = None) -> float:
    x = _as_window(window)
    Y = _approx_checks(x, X, Y)
    lam = (X - 1) / (Y - 1)
    return float(lam * x.mean() + (1 - lam) * x.min())


def approx_mid_x_of_y(window: Sequence[float], X: int, Y: int | None = None) -> float:
    x = _as_window(window)
    Y = _approx_checks(x, X, Y)
    lam = (X - 1) / (Y - 1)
    return float(lam * x.mean() + (1 - lam) * np.median(x))


def approx_error_percent(actual: float, approx: float) -> float:
    if not approx > 0:
        raise DomainError(f"approximated baseline must be positive, got {approx}")
    return (actual - approx) / approx * 100.0


def approximation_errors(windows: np.ndarray, a_hat: float | None = None) -> np.ndarray:
    """Percent error of the approximated HighXofY for every window and X.

    ``windows`` is (n, Y); returns (n, Y) with column X-1 holding X. f(Y) is
    computed once per window since it does not depend on X.
    """
    w = np.asarray(windows, dtype=float)
    if w.ndim != 2 or w.shape[1] < 2:
        raise ParameterError("windows must be (n, Y) with Y >= 2")
    n, Y = w.shape
    out = np.empty((n, Y))
    xs = np.arange(1, Y + 1)
    for i, row in enumerate(w):
        x = _as_window(row)
        s = float(x.std(ddof=1))
        f = sample_max_factor(Y, fit_trunc_spec(x, a_hat)) if s > 0 else 0.0
        approx = x.mean() + (Y - xs) / (Y - 1) * f * s
        actual = np.cumsum(np.sort(x)[::-1])[xs - 1] / xs
        if not np.all(approx > 0):
            raise DomainError(f"approximated baseline must be positive for window {row}")
        out[i] = (actual - approx) / approx * 100.0
    return out


def baseline(window: Sequence[float], program: DrProgram, a_hat: float | None = None) -> float:
    """Baseline of one window under ``program``'s method."""
    x = _as_window(window)
    if x.size != program.Y:
        raise ParameterError(f"window length {x.size} does not match Y={program.Y}")
    m = program.method
    if m is Method.HIGH:
        return high_x_of_y(x, program.X)
    if m is Method.LOW:
        return low_x_of_y(x, program.X)
    if m is Method.MID:
        return mid_x_of_y(x, program.X)
    return approx_high_x_of_y(x, program.X, program.Y, a_hat=a_hat)


def baseline_rows(windows: np.ndarray, program: DrProgram, a_hat: float | None = None,
                  axis: int = -1) -> np.ndarray:
    """Baseline of every window in an array whose ``axis`` (default last) has length Y."""
    w = np.asarray(windows, dtype=float)
    X, Y = program.X, program.Y
    if w.shape[axis] != Y:
        raise ParameterError(f"window axis has length {w.shape[axis]}, expected Y={Y}")
    m = program.method
    if m is Method.APPROX_HIGH:
        w = np.moveaxis(w, axis, -1)
        flat = w.reshape(-1, Y)
        out = np.fromiter((approx_high_x_of_y(row, X, Y, a_hat=a_hat) for row in flat),
                          dtype=float, count=flat.shape[0])
        return out.reshape(w.shape[:-1])
    srt = np.sort(w, axis=axis)
    if m is Method.HIGH:
        keep = slice(Y - X, Y)
    elif m is Method.LOW:
        keep = slice(0, X)
    else:
        drop = (Y - X) // 2
        keep = slice(drop, drop + X)
    return np.take(srt, np.arange(Y)[keep], axis=axis).mean(axis=axis)


def join(x: Sequence[float], y: Sequence[float]) -> np.ndarray:
    return np.maximum(np.asarray(x, float), np.asarray(y, float))


def meet(x: Sequence[float], y: Sequence[float]) -> np.ndarray:
    return np.minimum(np.asarray(x, float), np.asarray(y, float))
