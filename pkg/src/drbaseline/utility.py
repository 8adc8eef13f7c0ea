"""Exponential customer utility, its estimation from history, and per-day optima.

All functions accept scalars or numpy arrays for ``a`` and ``z``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from drbaseline.errors import DataError, DomainError, ParameterError

DEFAULT_U_CHECK = 0.99
DEFAULT_A_HAT_FACTOR = 1.5


@dataclass(frozen=True)
class UtilityParams:
    """u(a; z) = z * gamma * (1 - exp(-a / rho)), flat retail price omega, cap a_hat."""

    rho: float
    gamma: float
    omega: float
    a_hat: float
    u_check: float = DEFAULT_U_CHECK

    def __post_init__(self):
        for name in ("rho", "gamma", "omega", "a_hat"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ParameterError(f"{name} must be positive and finite, got {v}")
        if not 0 < self.u_check < 1:
            raise ParameterError(f"u_check must lie in (0, 1), got {self.u_check}")

    def to_dict(self) -> dict:
        return {"rho": self.rho, "gamma": self.gamma, "omega": self.omega,
                "a_hat": self.a_hat, "u_check": self.u_check}

    @classmethod
    def from_dict(cls, d: dict) -> "UtilityParams":
        return cls(rho=float(d["rho"]), gamma=float(d["gamma"]), omega=float(d["omega"]),
                   a_hat=float(d["a_hat"]), u_check=float(d.get("u_check", DEFAULT_U_CHECK)))


def _check_action(a, params: UtilityParams, tol: float = 1e-9):
    arr = np.asarray(a, dtype=float)
    if np.any(arr < -tol) or np.any(arr > params.a_hat + tol) or np.any(np.isnan(arr)):
        raise DomainError(f"consumption outside [0, {params.a_hat}]: {a}")
    return arr


def _check_z(z):
    arr = np.asarray(z, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError(f"utility scale z must be positive, got {z}")
    return arr


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


def utility(a, z, params: UtilityParams):
    a = _check_action(a, params)
    z = _check_z(z)
    return _out(z * params.gamma * -np.expm1(-a / params.rho))


def net_utility(a, z, params: UtilityParams):
    a = _check_action(a, params)
    z = _check_z(z)
    return _out(z * params.gamma * -np.expm1(-a / params.rho) - params.omega * a)


def estimate_params(history: Sequence[float], omega: float, u_check: float = DEFAULT_U_CHECK,
                    a_hat: float | None = None,
                    a_hat_factor: float = DEFAULT_A_HAT_FACTOR) -> UtilityParams:
    """Fit (rho, gamma) so that the historical mean is optimal at z = 1.

    rho comes from requiring the historical maximum to reach ``u_check`` of
    saturated utility; gamma from the first-order condition at the mean.
    ``a_hat`` defaults to ``a_hat_factor`` times the historical maximum.
    """
    h = np.asarray(history, dtype=float)
    if h.size == 0:
        raise DataError("empty consumption history")
    if np.any(~np.isfinite(h)) or np.any(h < 0):
        raise DataError("history must be finite and non-negative")
    a_bar = float(h.mean())
    a_check = float(h.max())
    if not a_check > 0 or not a_bar > 0:
        raise DataError("history needs a positive mean and maximum")
    if not 0 < u_check < 1:
        raise ParameterError(f"u_check must lie in (0, 1), got {u_check}")
    if not omega > 0:
        raise ParameterError(f"retail price must be positive, got {omega}")
    rho = -a_check / math.log(1.0 - u_check)
    gamma = omega * rho * math.exp(a_bar / rho)
    if a_hat is None:
        a_hat = a_hat_factor * a_check
    return UtilityParams(rho=rho, gamma=gamma, omega=omega, a_hat=float(a_hat), u_check=u_check)


def _stationary_point(z, price: float, params: UtilityParams):
    z = _check_z(z)
    with np.errstate(divide="ignore"):
        a = params.rho * np.log(z * params.gamma / (params.rho * price))
    return np.clip(a, 0.0, params.a_hat)


def intrinsic_baseline(z, params: UtilityParams):
    """Unconstrained-by-DR optimal consumption a^B(z)."""
    return _out(_stationary_point(z, params.omega, params))


def penalized_optimum(z, r: float, params: UtilityParams):
    """Optimum a^U(z) of net utility plus a linear rebate r per kWh curtailed."""
    if r < 0:
        raise ParameterError(f"rebate price must be >= 0, got {r}")
    return _out(_stationary_point(z, params.omega + r, params))


def threshold_baseline(z, r: float, params: UtilityParams):
    """Baseline above which curtailing to a^U beats consuming a^B; +inf when r == 0."""
    if r < 0:
        raise ParameterError(f"rebate price must be >= 0, got {r}")
    if r == 0:
        return _out(np.full(np.shape(z), math.inf)) if np.ndim(z) else math.inf
    a_b = _stationary_point(z, params.omega, params)
    a_u = _stationary_point(z, params.omega + r, params)
    gap = net_utility(a_b, z, params) - net_utility(a_u, z, params)
    return _out(np.asarray(gap) / r + a_u)


def dr_day_policy(baseline, z, r: float, params: UtilityParams):
    """Optimal DR-day consumption: a^B below the threshold baseline, a^U at or above it."""
    a_b = _stationary_point(z, params.omega, params)
    if r == 0:
        return _out(np.broadcast_to(a_b, np.broadcast_shapes(np.shape(baseline), np.shape(a_b))) * 1.0)
    a_u = _stationary_point(z, params.omega + r, params)
    b_th = threshold_baseline(z, r, params)
    return _out(np.where(np.asarray(baseline) < b_th, a_b, a_u))
