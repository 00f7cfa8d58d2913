"""Synthetic audits with known answers.

* ``gen_thm41``: prediction gains nothing from personalization while both
  explanation costs improve by 1/4.
* ``gen_additive``: linear model ``Y = sum a_i X_i + sum c_j S_j + noise``
  with closed-form MSEs for the Bayes-optimal generic and personalized fits.
* ``WorstCasePair`` / ``simulate_pe``: Monte Carlo error rate of the threshold
  test on individual-BoP samples, to compare with the analytic lower bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import AuditDataset, Task
from .models import IndicatorModel
from .stats import Family, pe_bound


@dataclass(frozen=True)
class Thm41Scenario:
    dataset: AuditDataset
    h0: IndicatorModel
    hp: IndicatorModel
    expected: dict


def thm41_oracles() -> tuple[IndicatorModel, IndicatorModel]:
    """``h0 = 1(x1 + x2 > 0)`` ranking x1 first; ``hp = 1(s > 0)`` ranking s first."""
    h0 = IndicatorModel(arity=2, personalized=False, task=Task.CLASSIFICATION,
                        weights=[1.0, 1.0], importance=[1.0, 0.5])
    hp = IndicatorModel(arity=3, personalized=True, task=Task.CLASSIFICATION,
                        weights=[0.0, 0.0, 1.0], importance=[0.0, 0.0, 1.0])
    return h0, hp


THM41_EXPECTED = {
    "bop_prediction": 0.0,
    "sufficiency_h0": 0.25,
    "sufficiency_hp": 0.0,
    "bop_sufficiency": 0.25,
    "comprehensiveness_h0": 0.25,
    "comprehensiveness_hp": 0.5,
    "bop_incomprehensiveness": 0.25,
}


def gen_thm41(n: int, seed: int = 0) -> Thm41Scenario:
    """Two uniform features on (-1/2, 1/2), ``S = Y = 1(X1 + X2 > 0)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    X = rng.uniform(-0.5, 0.5, size=(n, 2))
    s = (X[:, 0] + X[:, 1] > 0).astype(np.float64)
    ds = AuditDataset(X, s[:, None], s, Task.CLASSIFICATION)
    h0, hp = thm41_oracles()
    return Thm41Scenario(ds, h0, hp, dict(THM41_EXPECTED))


@dataclass(frozen=True)
class AdditiveScenario:
    alphas_x: tuple[float, ...]
    alphas_s: tuple[float, ...]
    var_x: tuple[float, ...] | float = 1.0
    var_s: tuple[float, ...] | float = 1.0
    var_eps: float = 0.25
    seed: int = 0

    def __post_init__(self):
        t, k = len(self.alphas_x), len(self.alphas_s)
        object.__setattr__(self, "alphas_x", tuple(float(a) for a in self.alphas_x))
        object.__setattr__(self, "alphas_s", tuple(float(a) for a in self.alphas_s))
        object.__setattr__(self, "var_x", tuple(np.broadcast_to(np.asarray(self.var_x, float), (t,)).tolist()))
        object.__setattr__(self, "var_s", tuple(np.broadcast_to(np.asarray(self.var_s, float), (k,)).tolist()))
        if t < 1:
            raise ValueError("need at least one feature")
        if min(self.var_x + self.var_s + (self.var_eps,)) < 0:
            raise ValueError("variances must be non-negative")


def gen_additive(scn: AdditiveScenario, n: int) -> AuditDataset:
    """Sample the additive regression model.

    ``S_j`` is a fair coin; its contribution to ``Y`` is ``+-sqrt(var_s_j)``
    so that ``Var`` matches the requested value while the stored attribute
    stays binary.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(scn.seed)
    X = rng.normal(size=(n, len(scn.alphas_x))) * np.sqrt(scn.var_x)
    S = rng.integers(0, 2, size=(n, len(scn.alphas_s))).astype(np.float64)
    signed = (2.0 * S - 1.0) * np.sqrt(scn.var_s)
    noise = rng.normal(scale=math.sqrt(scn.var_eps), size=n)
    y = X @ np.asarray(scn.alphas_x) + signed @ np.asarray(scn.alphas_s) + noise
    return AuditDataset(X, S, y, Task.REGRESSION)


def additive_mse_analytics(scn: AdditiveScenario) -> tuple[float, float, float]:
    """Bayes-optimal test MSEs ``(generic, personalized, generic - personalized)``."""
    missing = sum(a * a * v for a, v in zip(scn.alphas_s, scn.var_s))
    mse_h0 = missing + scn.var_eps
    mse_hp = scn.var_eps
    return mse_h0, mse_hp, mse_h0 - mse_hp


# ---------------------------------------------------------------------------
# worst-case individual BoP samplers


@dataclass(frozen=True)
class WorstCasePair:
    """Group-wise individual-BoP samplers for the three worlds of the threshold test.

    * ``sample_null``: every group centred at 0.
    * ``sample_h0``: one uniformly chosen group centred at ``-eps``, the rest at 0.
    * ``sample_h1``: every group centred at ``+h1_shift * eps``.

    Categorical BoP lives on ``{-1, +1}``; a mean of ``mu`` means ``P(+1) = (1 + mu) / 2``.
    """

    family: Family
    epsilon: float
    m_list: tuple[int, ...]
    scale: float | None = None
    h1_shift: float = 1.0
    d: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "m_list", tuple(int(m) for m in self.m_list))
        object.__setattr__(self, "d", len(self.m_list))
        if self.d < 1 or min(self.m_list) < 1:
            raise ValueError("need at least one non-empty group")
        if self.epsilon < 0:
            raise ValueError("epsilon is a non-negative magnitude")
        if self.family is Family.CATEGORICAL:
            if self.h1_shift * self.epsilon > 1 or self.epsilon > 1:
                raise ValueError("categorical means must stay in [-1, 1]")
        elif self.scale is None or not self.scale > 0:
            raise ValueError(f"{self.family.value} needs a positive scale")

    def _draw(self, rng: np.random.Generator, m: int, mean: float) -> np.ndarray:
        if self.family is Family.CATEGORICAL:
            return np.where(rng.random(m) < 0.5 * (1.0 + mean), 1.0, -1.0)
        if self.family is Family.GAUSSIAN:
            return mean + self.scale * rng.standard_normal(m)
        return mean + rng.laplace(0.0, self.scale, size=m)

    def _sample(self, rng, means) -> list[np.ndarray]:
        return [self._draw(rng, m, mu) for m, mu in zip(self.m_list, means)]

    def sample_null(self, rng) -> list[np.ndarray]:
        return self._sample(rng, [0.0] * self.d)

    def sample_h0(self, rng) -> list[np.ndarray]:
        means = [0.0] * self.d
        means[int(rng.integers(self.d))] = -self.epsilon
        return self._sample(rng, means)

    def sample_h1(self, rng) -> list[np.ndarray]:
        return self._sample(rng, [self.h1_shift * self.epsilon] * self.d)


def build_worst_case_pair(family, eps: float, d: int, m_list, scale: float | None = None,
                          h1_shift: float = 1.0) -> WorstCasePair:
    m_list = list(np.broadcast_to(np.asarray(m_list, dtype=int), (d,)))
    return WorstCasePair(Family(family), float(eps), tuple(m_list), scale, h1_shift)


@dataclass(frozen=True)
class SimulationResult:
    empirical_pe: float
    type_i: float
    type_ii: float
    ci: float
    analytic_bound: float
    trials: int

    @property
    def dominance_ok(self) -> bool:
        return self.empirical_pe + self.ci >= self.analytic_bound

    def to_dict(self) -> dict:
        return {
            "empirical_pe": self.empirical_pe,
            "type_i": self.type_i,
            "type_ii": self.type_ii,
            "ci": self.ci,
            "analytic_bound": self.analytic_bound,
            "trials": self.trials,
            "dominance_ok": self.dominance_ok,
        }


def _gamma_hat(groups: list[np.ndarray]) -> float:
    return min(float(np.mean(g)) for g in groups)


def simulate_pe(pair: WorstCasePair, eps: float | None = None, trials: int = 2000, seed: int = 0) -> SimulationResult:
    """Type I + type II frequency of the rule ``gamma_hat >= eps`` over ``trials`` draws per world.

    Each trial gets its own generator spawned from ``seed``, so results do not
    depend on how trials are scheduled.
    """
    if trials < 100:
        raise ValueError("trials must be >= 100")
    eps = pair.epsilon if eps is None else float(eps)
    children = np.random.SeedSequence(seed).spawn(trials)
    false_reject = 0
    missed = 0
    for child in children:
        rng = np.random.default_rng(child)
        if _gamma_hat(pair.sample_h0(rng)) >= eps:
            false_reject += 1
        if _gamma_hat(pair.sample_h1(rng)) < eps:
            missed += 1
    p1 = false_reject / trials
    p2 = missed / trials
    ci = 1.96 * math.sqrt((p1 * (1 - p1) + p2 * (1 - p2)) / trials)
    bound = pe_bound(pair.family, eps, pair.m_list, pair.scale)
    return SimulationResult(p1 + p2, p1, p2, ci, bound, trials)


_LAPLACE_B = 0.1 / math.sqrt(2.0)

# (family, eps, d, m, scale) points for the bound-dominance check
DEFAULT_GRID = [
    {"family": "categorical", "epsilon": 0.05, "d": 2, "m": 10},
    {"family": "categorical", "epsilon": 0.02, "d": 4, "m": 100},
    {"family": "categorical", "epsilon": 0.01, "d": 4, "m": 2500},
    {"family": "categorical", "epsilon": 0.1, "d": 8, "m": 20},
    {"family": "gaussian", "epsilon": 0.001, "d": 4, "m": 2500, "scale": 0.1},
    {"family": "gaussian", "epsilon": 0.01, "d": 2, "m": 50, "scale": 0.1},
    {"family": "gaussian", "epsilon": 0.005, "d": 8, "m": 200, "scale": 0.1},
    {"family": "gaussian", "epsilon": 0.02, "d": 4, "m": 30, "scale": 0.1},
    {"family": "laplace", "epsilon": 0.001, "d": 4, "m": 500, "scale": _LAPLACE_B},
    {"family": "laplace", "epsilon": 0.01, "d": 2, "m": 40, "scale": _LAPLACE_B},
    {"family": "laplace", "epsilon": 0.005, "d": 8, "m": 100, "scale": _LAPLACE_B},
    {"family": "laplace", "epsilon": 0.02, "d": 16, "m": 10, "scale": _LAPLACE_B},
]
