"""Truncated normal helpers and the sample-maximum factor f(Y).

Only the standard normal CDF (via ``math.erfc``) is used; the truncated CDF,
quantile and expected maximum are built on top of it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from statistics import NormalDist

from scipy import integrate

from drbaseline.errors import NumericError, ParameterError

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)
_STD = NormalDist()

# Integration limits beyond which the standard normal density is < 1e-300.
_QUAD_CLIP = 38.0


def norm_cdf(u: float) -> float:
    return 0.5 * math.erfc(-u / _SQRT2)


def norm_pdf(u: float) -> float:
    return math.exp(-0.5 * u * u) / _SQRT2PI


@dataclass(frozen=True)
class TruncNormalSpec:
    """Normal(mu, sigma) truncated to [lower, upper].

    ``upper`` may be ``math.inf`` for a one-sided truncation.
    """

    mu: float
    sigma: float
    lower: float
    upper: float

    def __post_init__(self):
        if not self.sigma > 0 or not math.isfinite(self.sigma):
            raise ParameterError(f"sigma must be positive and finite, got {self.sigma}")
        if not self.lower < self.upper:
            raise ParameterError(f"need lower < upper, got [{self.lower}, {self.upper}]")
        if math.isnan(self.mu) or math.isinf(self.mu):
            raise ParameterError(f"mu must be finite, got {self.mu}")

    @property
    def alpha(self) -> float:
        return (self.lower - self.mu) / self.sigma

    @property
    def beta(self) -> float:
        return (self.upper - self.mu) / self.sigma

    def standardized(self) -> "TruncNormalSpec":
        return TruncNormalSpec(0.0, 1.0, self.alpha, self.beta)


def _mass(alpha: float, beta: float) -> tuple[float, float]:
    lo = norm_cdf(alpha)
    z = norm_cdf(beta) - lo
    if not z > 0:
        raise NumericError(f"truncation [{alpha}, {beta}] carries no probability mass")
    return lo, z


def trunc_cdf(u: float, alpha: float, beta: float) -> float:
    if u <= alpha:
        return 0.0
    if u >= beta:
        return 1.0
    lo, z = _mass(alpha, beta)
    return min(1.0, max(0.0, (norm_cdf(u) - lo) / z))


def trunc_pdf(u: float, alpha: float, beta: float) -> float:
    if u < alpha or u > beta:
        return 0.0
    _, z = _mass(alpha, beta)
    return norm_pdf(u) / z


def trunc_ppf(p: float, alpha: float, beta: float, tol: float = 1e-12) -> float:
    """Quantile of N(0, 1) truncated to [alpha, beta]."""
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"probability out of range: {p}")
    if p == 0.0:
        return alpha
    if p == 1.0:
        return beta
    lo_mass, z = _mass(alpha, beta)
    q = lo_mass + p * z
    if 0.0 < q < 1.0:
        x = _STD.inv_cdf(q)
    else:
        x = 0.0
    lo = alpha if math.isfinite(alpha) else -_QUAD_CLIP
    hi = beta if math.isfinite(beta) else _QUAD_CLIP
    x = min(max(x, lo), hi)
    # Newton polish with a bisection fallback keeps the iterate bracketed.
    for _ in range(200):
        err = trunc_cdf(x, alpha, beta) - p
        if err > 0:
            hi = x
        else:
            lo = x
        dens = trunc_pdf(x, alpha, beta)
        step = err / dens if dens > 0 else math.inf
        x_new = x - step
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) < tol or hi - lo < tol:
            return x_new
        x = x_new
    return x


def expected_max(n: int, alpha: float, beta: float) -> float:
    """E[max of n i.i.d. draws] from N(0, 1) truncated to [alpha, beta].

    Adaptive quadrature of n * u * pdf(u) * cdf(u)**(n-1) on [alpha, beta].
    """
    if n < 1:
        raise ParameterError(f"sample size must be >= 1, got {n}")
    lo_mass, z = _mass(alpha, beta)
    a = max(alpha, -_QUAD_CLIP)
    b = min(beta, _QUAD_CLIP)

    def integrand(u: float) -> float:
        cdf = min(1.0, max(0.0, (norm_cdf(u) - lo_mass) / z))
        return n * u * (norm_pdf(u) / z) * cdf ** (n - 1)

    points = [p for p in (0.0, 1.0, 2.0) if a < p < b]
    val, _ = integrate.quad(integrand, a, b, epsabs=1e-11, epsrel=1e-11, limit=400,
                            points=points or None)
    return val


@lru_cache(maxsize=65536)
def _epsilon_and_factor(n: int, alpha: float, beta: float) -> tuple[float, float, float]:
    target = expected_max(n, alpha, beta)

    def factor(eps: float) -> float:
        return trunc_ppf((0.5 + eps) ** (1.0 / n), alpha, beta)

    lo, hi = -0.5, 0.5
    f_lo, f_hi = factor(lo), factor(hi)
    if not f_lo <= target <= f_hi:
        raise NumericError(
            f"cannot bracket epsilon: target={target!r}, f(-0.5)={f_lo!r}, f(0.5)={f_hi!r}, "
            f"n={n}, alpha={alpha!r}, beta={beta!r}"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if factor(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-10:
            break
    else:  # pragma: no cover - 200 halvings always reach 1e-10
        raise NumericError(f"epsilon bisection did not converge (n={n})")
    eps = 0.5 * (lo + hi)
    return eps, factor(eps), target


def estimate_epsilon(n: int, spec: TruncNormalSpec) -> float:
    """Bisect eps so that ppf_t((0.5 + eps)**(1/n)) hits the exact expected maximum."""
    eps, _, _ = _epsilon_and_factor(int(n), spec.alpha, spec.beta)
    return eps


def sample_max_factor(n: int, spec: TruncNormalSpec) -> float:
    """Standardized expected-maximum factor f(n) for the truncation in ``spec``."""
    if n < 1:
        raise ParameterError(f"sample size must be >= 1, got {n}")
    _, f, _ = _epsilon_and_factor(int(n), spec.alpha, spec.beta)
    return f
