"""Reliability of a benefit-of-personalization audit.

Lower bounds on the error probability ``P_e`` (type I + type II) of any test
deciding whether every group gains at least ``eps``, for categorical,
Gaussian, Laplace and exponential-power individual BoP laws; the matching
attribute limits; and the threshold test itself.

``eps`` is always the positive magnitude of the required per-group gain.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate
from scipy.special import gammaln, logsumexp

LN2 = math.log(2.0)
SCALE_FLOOR = 1e-9


class Family(str, enum.Enum):
    CATEGORICAL = "categorical"
    GAUSSIAN = "gaussian"
    LAPLACE = "laplace"


class QuadratureError(RuntimeError):
    pass


class NeverReliableError(ValueError):
    """No admissible ``eps`` brings the bound down to 1/2."""


# ---------------------------------------------------------------------------
# Lambert W


def lambert_w0(x: float) -> float:
    """Principal branch of the Lambert W function for ``x >= 0``.

    Halley iteration on ``w e^w - x`` from a logarithmic starting point; for
    very large ``x`` Newton on ``w + log w - log x`` avoids overflow.
    """
    x = float(x)
    if not x >= 0:
        raise ValueError(f"lambert_w0 needs x >= 0, got {x}")
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return math.inf
    if x > 1e300:
        lx = math.log(x)
        w = lx - math.log(lx)
        for _ in range(100):
            step = (w + math.log(w) - lx) / (1.0 + 1.0 / w)
            w -= step
            if abs(step) <= 4e-16 * w:
                break
        return w

    if x < math.e:
        w = math.log1p(x)
    else:
        l1 = math.log(x)
        l2 = math.log(l1)
        w = l1 - l2 + l2 / l1
    for _ in range(100):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w -= step
        if abs(step) <= 1e-16 * (1.0 + abs(w)):
            break
    return w


# ---------------------------------------------------------------------------
# distribution fitting


@dataclass(frozen=True)
class GroupFit:
    n: int
    location: float
    scale: float | None
    pmf: tuple[float, float, float] | None = None
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {"n": self.n, "location": self.location, "scale": self.scale,
                "pmf": list(self.pmf) if self.pmf else None, "degenerate": self.degenerate}


@dataclass(frozen=True)
class BopDistributionFit:
    family: Family
    groups: tuple[GroupFit, ...]
    log_likelihoods: dict

    @property
    def scales(self) -> list[float] | None:
        if self.family is Family.CATEGORICAL:
            return None
        return [g.scale for g in self.groups]

    @property
    def group_sizes(self) -> list[int]:
        return [g.n for g in self.groups]

    def pooled_scale(self) -> float | None:
        """Sample-size weighted root mean square of the per-group scales."""
        if self.family is Family.CATEGORICAL:
            return None
        n = np.array(self.group_sizes, dtype=float)
        s = np.array(self.scales)
        if self.family is Family.GAUSSIAN:
            return float(np.sqrt(np.sum(n * s ** 2) / n.sum()))
        return float(np.sum(n * s) / n.sum())

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "log_likelihoods": dict(self.log_likelihoods),
            "groups": [g.to_dict() for g in self.groups],
        }


def _gaussian_fit(b):
    mu = float(np.mean(b))
    sigma = float(np.std(b))
    degenerate = sigma < SCALE_FLOOR
    sigma = max(sigma, SCALE_FLOOR)
    ll = -0.5 * np.sum(np.log(2 * np.pi * sigma ** 2) + ((b - mu) / sigma) ** 2)
    return GroupFit(len(b), mu, sigma, degenerate=degenerate), float(ll)


def _laplace_fit(b):
    mu = float(np.median(b))
    scale = float(np.mean(np.abs(b - mu)))
    degenerate = scale < SCALE_FLOOR
    scale = max(scale, SCALE_FLOOR)
    ll = -np.sum(np.log(2 * scale) + np.abs(b - mu) / scale)
    return GroupFit(len(b), mu, scale, degenerate=degenerate), float(ll)


def _categorical_fit(b):
    counts = np.array([np.sum(b == v) for v in (-1.0, 0.0, 1.0)], dtype=float)
    pmf = counts / counts.sum()
    nz = counts > 0
    ll = float(np.sum(counts[nz] * np.log(pmf[nz])))
    mean = float(pmf @ np.array([-1.0, 0.0, 1.0]))
    return GroupFit(len(b), mean, None, pmf=tuple(float(p) for p in pmf)), ll


def fit_bop_distribution(groups: Sequence[np.ndarray]) -> BopDistributionFit:
    """Fit the per-group individual BoP samples.

    Values supported on ``{-1, 0, 1}`` are categorical. Otherwise Gaussian and
    Laplace maximum-likelihood fits are compared by total log-likelihood.
    """
    groups = [np.asarray(g, dtype=np.float64).ravel() for g in groups]
    if not groups or any(len(g) == 0 for g in groups):
        raise ValueError("every group needs at least one sample")

    allv = np.concatenate(groups)
    if np.all(np.isin(allv, (-1.0, 0.0, 1.0))):
        fits, lls = zip(*(_categorical_fit(g) for g in groups))
        return BopDistributionFit(Family.CATEGORICAL, tuple(fits), {"categorical": float(sum(lls))})

    gauss = [_gaussian_fit(g) for g in groups]
    lap = [_laplace_fit(g) for g in groups]
    lls = {"gaussian": float(sum(ll for _, ll in gauss)), "laplace": float(sum(ll for _, ll in lap))}
    if lls["gaussian"] >= lls["laplace"]:
        return BopDistributionFit(Family.GAUSSIAN, tuple(f for f, _ in gauss), lls)
    return BopDistributionFit(Family.LAPLACE, tuple(f for f, _ in lap), lls)


# ---------------------------------------------------------------------------
# P_e lower bounds


def _as_sizes(m_list) -> np.ndarray:
    m = np.atleast_1d(np.asarray(m_list, dtype=np.float64))
    if m.size == 0 or np.any(m < 1):
        raise ValueError("group sizes must all be >= 1")
    return m


def _as_scales(scale, d: int, name: str) -> np.ndarray:
    s = np.broadcast_to(np.asarray(scale, dtype=np.float64), (d,)).copy()
    if np.any(~(s > 0)):
        raise ValueError(f"{name} must be positive")
    return s


def _check_eps(eps: float) -> float:
    eps = float(eps)
    if not eps >= 0 or math.isinf(eps):
        raise ValueError(f"eps must be a finite non-negative magnitude, got {eps}")
    return eps


def bound_from_log_terms(log_terms) -> float:
    """Raw ``1 - 1/(2 sqrt d) * [mean_j exp(log_terms_j) - 1]^(1/2)``, evaluated in log space.

    Returns ``-inf`` when the bracket exceeds the float range.
    """
    log_terms = np.asarray(log_terms, dtype=np.float64)
    d = len(log_terms)
    return _bound_from_mean(float(logsumexp(log_terms) - math.log(d)), d)


def _bound_from_mean(L: float, d: int) -> float:
    # L is the log of the mean bracket term over d groups
    if L <= 0.0:
        return 1.0
    log_bracket = math.log(math.expm1(L)) if L < 30.0 else L + math.log1p(-math.exp(-L))
    log_term = 0.5 * log_bracket - math.log(2.0 * math.sqrt(d))
    if log_term > 700.0:
        return -math.inf
    return 1.0 - math.exp(log_term)


def clamp(p: float) -> float:
    return min(1.0, max(0.0, p))


def pe_bound_categorical(eps: float, m_list, raw: bool = False) -> float:
    """Bound for individual BoP on ``{-1, +1}``: per-sample kernel ``1 + 4 eps^2``."""
    eps = _check_eps(eps)
    if eps >= 0.5:
        raise ValueError("categorical bound needs eps < 1/2")
    m = _as_sizes(m_list)
    value = bound_from_log_terms(m * math.log1p(4.0 * eps * eps))
    return value if raw else clamp(value)


def pe_bound_gaussian(eps: float, m_list, sigma, raw: bool = False) -> float:
    eps = _check_eps(eps)
    m = _as_sizes(m_list)
    s = _as_scales(sigma, len(m), "sigma")
    value = bound_from_log_terms(m * eps * eps / s ** 2)
    return value if raw else clamp(value)


def pe_bound_laplace(eps: float, m_list, b, raw: bool = False) -> float:
    eps = _check_eps(eps)
    m = _as_sizes(m_list)
    s = _as_scales(b, len(m), "b")
    value = bound_from_log_terms(m * eps / s)
    return value if raw else clamp(value)


def exp_power_chi2(eps: float, alpha: float, beta: float) -> float:
    """``E_{p_eps}[p_eps(B)/p(B)] - 1`` for the exponential-power law of scale ``alpha``.

    ``p`` is centred at 0 and ``p_eps`` at ``eps``. The integrand is written as
    ``(p_eps - p)^2 / p`` so small divergences keep their relative precision.
    """
    if eps == 0.0:
        return 0.0
    e = eps / alpha
    log_norm = math.log(beta) - math.log(2.0) - gammaln(1.0 / beta)

    def integrand(u):
        a = abs(u) ** beta
        c = abs(u - e) ** beta
        return math.exp(log_norm) * (math.exp(0.5 * a - c) - math.exp(-0.5 * a)) ** 2

    lo, hi = min(0.0, e), max(0.0, e)
    total = 0.0
    for a, b in ((-math.inf, lo), (lo, hi), (hi, math.inf)):
        if a == b:
            continue
        res = integrate.quad(integrand, a, b, epsabs=1e-300, epsrel=1e-12, limit=400, full_output=1)
        if len(res) > 3:
            raise QuadratureError(f"quadrature failed on ({a}, {b}): {res[3]}")
        total += res[0]
    return total


def pe_bound_gen_gaussian(eps: float, m_list, alpha, beta: float, raw: bool = False) -> float:
    """Bound for exponential-power individual BoP, density ``∝ exp(-(|x|/alpha)^beta)``.

    The per-sample expectation is integrated numerically. ``beta = 2`` with
    ``alpha = sigma * sqrt(2)`` is the Gaussian case.
    """
    eps = _check_eps(eps)
    if not beta >= 1:
        raise ValueError("beta must be >= 1")
    m = _as_sizes(m_list)
    a = _as_scales(alpha, len(m), "alpha")
    cache = {}
    log_terms = np.empty(len(m))
    for j, (mj, aj) in enumerate(zip(m, a)):
        if aj not in cache:
            cache[aj] = math.log1p(exp_power_chi2(eps, float(aj), float(beta)))
        log_terms[j] = mj * cache[aj]
    value = bound_from_log_terms(log_terms)
    return value if raw else clamp(value)


def exp_power_alpha(sigma: float, beta: float) -> float:
    """Scale ``alpha`` of the exponential-power law with standard deviation ``sigma``."""
    return sigma * math.exp(0.5 * (gammaln(1.0 / beta) - gammaln(3.0 / beta)))


def pe_bound(family: Family, eps: float, m_list, scale=None, raw: bool = False) -> float:
    family = Family(family)
    if family is Family.CATEGORICAL:
        return pe_bound_categorical(eps, m_list, raw)
    if scale is None:
        raise ValueError(f"{family.value} bound needs a scale")
    if family is Family.GAUSSIAN:
        return pe_bound_gaussian(eps, m_list, scale, raw)
    return pe_bound_laplace(eps, m_list, scale, raw)


def _log_kernel(family: Family, eps: float, scale) -> float:
    """Per-sample log factor of the bracket term."""
    if family is Family.CATEGORICAL:
        if eps >= 0.5:
            raise ValueError("categorical bound needs eps < 1/2")
        return math.log1p(4.0 * eps * eps)
    if scale is None or not scale > 0:
        raise ValueError(f"{family.value} bound needs a positive scale")
    return eps * eps / scale ** 2 if family is Family.GAUSSIAN else eps / scale


def equal_group_bound(family: Family, eps: float, N: int, k: int, scale: float | None = None,
                      raw: bool = False) -> float:
    """Bound for ``2^k`` groups of ``floor(N / 2^k)`` samples, without materializing the groups."""
    family = Family(family)
    eps = _check_eps(eps)
    m = int(N) >> k
    if m < 1:
        raise ValueError(f"N={N} leaves empty groups at k={k}")
    value = _bound_from_mean(m * _log_kernel(family, eps, scale), 1 << k)
    return value if raw else clamp(value)


def equal_group_sizes(N: int, k: int) -> list[int]:
    """``2^k`` groups of ``floor(N / 2^k)`` samples each."""
    d = 1 << k
    m = int(N) // d
    if m < 1:
        raise ValueError(f"N={N} leaves empty groups at k={k}")
    return [m] * d


# ---------------------------------------------------------------------------
# attribute limits and reliable eps


def max_attributes(family: Family, eps: float, N: float, scale: float | None = None) -> float:
    """Real-valued attribute limit ``W(arg) / ln 2`` for equal-size groups.

    The argument is ``N log(1 + 4 eps^2)``, ``eps^2 N / sigma^2`` or ``eps N / b``.
    """
    family = Family(family)
    eps = _check_eps(eps)
    if N < 1:
        raise ValueError("N must be >= 1")
    if family is Family.CATEGORICAL:
        arg = N * math.log1p(4.0 * eps * eps)
    else:
        if scale is None or not scale > 0:
            raise ValueError(f"{family.value} limit needs a positive scale")
        arg = eps * eps * N / scale ** 2 if family is Family.GAUSSIAN else eps * N / scale
    return lambert_w0(arg) / LN2


def max_attributes_int(family: Family, eps: float, N: float, scale: float | None = None) -> int:
    """Nearest integer to :func:`max_attributes`."""
    return int(math.floor(max_attributes(family, eps, N, scale) + 0.5))


def first_unreliable_k(family: Family, eps: float, N: int, scale: float | None = None) -> int | None:
    """Smallest ``k`` whose equal-group bound reaches 1/2, or None if every feasible ``k`` stays below."""
    k = 0
    while (int(N) >> k) >= 1:
        if equal_group_bound(family, eps, N, k, scale, raw=True) >= 0.5:
            return k
        k += 1
    return None


def min_reliable_epsilon(family: Family, m_list, scale=None) -> float:
    """Smallest ``eps`` whose bound is at most 1/2, found by bisection."""
    family = Family(family)

    def f(e):
        return pe_bound(family, e, m_list, scale, raw=True) - 0.5

    if family is Family.CATEGORICAL:
        hi = 0.5 - 1e-12
        if f(hi) > 0:
            raise NeverReliableError("bound stays above 1/2 for every eps < 1/2")
    else:
        hi = float(np.max(np.atleast_1d(scale)))
        for _ in range(200):
            if f(hi) <= 0:
                break
            hi *= 2.0
        else:
            raise NeverReliableError("bound stays above 1/2")
    lo = 0.0
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return hi


# ---------------------------------------------------------------------------
# threshold test


class Verdict(str, enum.Enum):
    REJECT_H0 = "reject_h0"
    FAIL_TO_REJECT = "fail_to_reject"


@dataclass(frozen=True)
class BoundSpec:
    family: Family
    epsilon: float
    group_sizes: tuple[int, ...]
    scales: tuple[float, ...] | float | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        object.__setattr__(self, "group_sizes", tuple(int(m) for m in self.group_sizes))
        if not self.group_sizes or min(self.group_sizes) < 1:
            raise ValueError("group sizes must all be >= 1")
        if self.family is not Family.CATEGORICAL and self.scales is None:
            raise ValueError(f"{self.family.value} needs scales")


@dataclass(frozen=True)
class TestOutcome:
    gamma_hat: float
    epsilon: float
    verdict: Verdict
    pe_lower_bound: float
    pe_lower_bound_raw: float
    reliable: bool
    min_reliable_epsilon: float | None

    __test__ = False  # keep pytest from collecting this class

    def to_dict(self) -> dict:
        raw = self.pe_lower_bound_raw
        return {
            "gamma_hat": self.gamma_hat,
            "epsilon": self.epsilon,
            "verdict": self.verdict.value,
            "pe_lower_bound": self.pe_lower_bound,
            "pe_lower_bound_raw": raw if math.isfinite(raw) else None,
            "reliable": self.reliable,
            "min_reliable_epsilon": self.min_reliable_epsilon,
        }


def hypothesis_test(gamma_hat: float, spec: BoundSpec) -> TestOutcome:
    """Reject "no benefit" exactly when ``gamma_hat >= epsilon``, with the bound on its error."""
    verdict = Verdict.REJECT_H0 if gamma_hat >= spec.epsilon else Verdict.FAIL_TO_REJECT
    raw = pe_bound(spec.family, spec.epsilon, spec.group_sizes, spec.scales, raw=True)
    try:
        eps_star = min_reliable_epsilon(spec.family, spec.group_sizes, spec.scales)
    except NeverReliableError:
        eps_star = None
    pe = clamp(raw)
    return TestOutcome(float(gamma_hat), float(spec.epsilon), verdict, pe, raw, pe <= 0.5, eps_star)
