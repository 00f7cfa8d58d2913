"""Acceptance criteria 1-8, each at its stated tolerance.

Every test records a single PASS/FAIL line; the lines are printed together at
the end of the pytest run. ``python tests/test_acceptance.py`` runs just these.
"""

import math
import time
import warnings

import numpy as np
import pytest

from bopaudit.audit import AuditConfig, run_audit, stratified_split
from bopaudit.cli import main as cli_main
from bopaudit.core import AuditDataset, CostKind, CostVector, Metric, ModelTag, Task, bop_report, index_groups
from bopaudit.explain import incomprehensiveness_costs, integrated_gradients
from bopaudit.models import LinearRegressionModel, LogisticModel, MLPModel, TrainConfig, fit_linear_regression, fit_mlp
from bopaudit.scenarios import (
    DEFAULT_GRID,
    AdditiveScenario,
    additive_mse_analytics,
    build_worst_case_pair,
    gen_additive,
    gen_thm41,
    simulate_pe,
)
from bopaudit.stats import (
    BoundSpec,
    Verdict,
    equal_group_bound,
    exp_power_alpha,
    hypothesis_test,
    lambert_w0,
    min_reliable_epsilon,
    pe_bound,
    pe_bound_gaussian,
    pe_bound_gen_gaussian,
    pe_bound_laplace,
)

from conftest import ACCEPTANCE_LINES


def record(n: int, title: str, ok: bool, detail: str):
    line = f"criterion {n} {'PASS' if ok else 'FAIL'}: {title} | {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line, flush=True)
    assert ok, line


def test_criterion_1_whole_planet_limits(capsys):
    cases = [("categorical", [], 18), ("gaussian", ["--sigma", "0.1"], 22),
             ("laplace", ["--b", repr(0.1 / math.sqrt(2))], 26)]
    got = []
    start = time.perf_counter()
    for family, scale, _ in cases:
        code = cli_main(["maxk", "--family", family, "--epsilon", "0.01", "--n", "8e9", *scale])
        out = capsys.readouterr().out
        got.append(int(out) if code == 0 else None)
    elapsed = time.perf_counter() - start
    ok = got == [c[2] for c in cases] and elapsed < 1.0
    record(1, "maxk at N=8e9, eps=0.01", ok, f"k_max={got} expected [18, 22, 26], {elapsed:.3f}s")


def test_criterion_2_indicator_scenario():
    start = time.perf_counter()
    scn = gen_thm41(100_000, seed=0)
    res = run_audit(scn.h0, scn.hp, scn.dataset, AuditConfig(r=1))
    groups = index_groups(scn.dataset)
    bop_p = res[Metric.PREDICTION].report.population
    bop_suff = res[Metric.SUFFICIENCY].report.population
    comp = {}
    for tag, model in (("h0", scn.h0), ("hp", scn.hp)):
        comp[tag] = -float(np.mean(incomprehensiveness_costs(model, scn.dataset, r=1).values))
    elapsed = time.perf_counter() - start
    ok = (abs(bop_p) <= 0.002 and 0.24 <= bop_suff <= 0.26 and abs(comp["h0"] - 0.25) <= 0.01
          and abs(comp["hp"] - 0.5) <= 0.01 and elapsed < 30 and groups.d == 2)
    record(2, "indicator-oracle audit at n=1e5", ok,
           f"BoP-P={bop_p:.4f} BoP-suff={bop_suff:.4f} change h0={comp['h0']:.4f} hp={comp['hp']:.4f}, {elapsed:.1f}s")


def test_criterion_3_additive():
    start = time.perf_counter()
    settings = [
        AdditiveScenario(alphas_x=(1.0, -0.5), alphas_s=(1.0,), seed=1),
        AdditiveScenario(alphas_x=(2.0,), alphas_s=(0.5, -1.5), var_x=2.0, var_s=(1.0, 0.5), var_eps=0.5, seed=2),
        AdditiveScenario(alphas_x=(0.3, 0.3, 0.3), alphas_s=(2.0, 1.0, 0.0), var_s=0.25, var_eps=1.0, seed=3),
    ]
    worst = 0.0
    for scn in settings:
        ds = gen_additive(scn, 100_000)
        tr, te = stratified_split(ds, 0.3, seed=0)
        train, test = ds.subset(tr), ds.subset(te)
        expected = additive_mse_analytics(scn)[:2]
        for personalized, target in zip((False, True), expected):
            m = fit_linear_regression(train, personalized)
            mse = float(np.mean((m.predict(test.inputs(personalized)) - test.labels) ** 2))
            worst = max(worst, abs(mse / target - 1))
    null = AdditiveScenario(alphas_x=(1.0, 0.5), alphas_s=(0.0, 0.0), seed=4)
    ds = gen_additive(null, 100_000)
    tr, te = stratified_split(ds, 0.3, seed=0)
    h0, hp = fit_linear_regression(ds.subset(tr), False), fit_linear_regression(ds.subset(tr), True)
    bop_null = run_audit(h0, hp, ds.subset(te), AuditConfig())[Metric.PREDICTION].report.population
    elapsed = time.perf_counter() - start
    ok = worst <= 0.05 and -0.01 <= bop_null <= 0.01 and elapsed < 30
    record(3, "additive-model fitted MSEs at n=1e5", ok,
           f"max relative MSE error={worst:.4f} (3 settings), BoP-P with alphas_s=0: {bop_null:.5f}, {elapsed:.1f}s")


def test_criterion_4_bound_dominance():
    start = time.perf_counter()
    failures = []
    for p in DEFAULT_GRID:
        pair = build_worst_case_pair(p["family"], p["epsilon"], p["d"], p["m"], p.get("scale"))
        res = simulate_pe(pair, trials=2000, seed=0)
        if not res.dominance_ok:
            failures.append((p, res.empirical_pe, res.ci, res.analytic_bound))
    elapsed = time.perf_counter() - start
    ok = len(DEFAULT_GRID) >= 12 and not failures and elapsed < 300
    record(4, "empirical P_e + CI >= bound on the grid", ok,
           f"{len(DEFAULT_GRID) - len(failures)}/{len(DEFAULT_GRID)} points dominate, {elapsed:.1f}s")


def test_criterion_5_bound_sanity():
    notes = []
    zero_ok = all(
        pe_bound(f, 0.0, m, s) == 1.0 and pe_bound(f, 0.0, m, s, raw=True) == 1.0
        for f, s in (("categorical", None), ("gaussian", 0.1), ("laplace", 0.07))
        for m in ([1], [10, 20], [10**9] * 4)
    ) and pe_bound_gen_gaussian(0.0, [10, 10], 0.1, 1.5) == 1.0
    notes.append(f"eps=0 -> 1: {zero_ok}")

    eps_ok = True
    k_ok = True
    for f, s in (("categorical", None), ("gaussian", 0.1), ("laplace", 0.07)):
        for m in ([10, 10], [2500] * 4, [3, 700, 40]):
            vals = [pe_bound(f, e, m, s, raw=True) for e in np.linspace(0, 0.49, 200)]
            eps_ok &= all(b <= a for a, b in zip(vals, vals[1:]))
        for eps in (0.002, 0.01, 0.05):
            vals = [equal_group_bound(f, eps, 10**7, k, s, raw=True) for k in range(1, 21)]
            k_ok &= all(b >= a for a, b in zip(vals, vals[1:]))
    notes.append(f"monotone eps: {eps_ok}, monotone k: {k_ok}")

    cases = [(0.001, [2500] * 4, 0.1), (0.01, [20, 50], 0.1), (0.001, [500] * 4, 0.1)]
    gauss_gap = max(abs(pe_bound_gen_gaussian(e, m, exp_power_alpha(s, 2.0), 2.0, raw=True)
                        - pe_bound_gaussian(e, m, s, raw=True)) for e, m, s in cases)
    lap_gap = max(abs(pe_bound_gen_gaussian(e, m, s, 1.0, raw=True) - pe_bound_laplace(e, m, s, raw=True))
                  for e, m, s in cases)
    notes.append(f"|gen-gauss(beta=2) - gaussian|={gauss_gap:.2e}, |gen-gauss(beta=1) - laplace|={lap_gap:.2e}")
    ok = zero_ok and eps_ok and k_ok and gauss_gap <= 1e-6 and lap_gap <= 1e-6
    record(5, "bound sanity suite", ok, "; ".join(notes))


def test_criterion_6_numerical_kernels():
    notes = []
    w_worst = max(abs(lambert_w0(float(x)) * math.exp(lambert_w0(float(x))) - x) / max(1.0, x)
                  for x in np.logspace(-6, 12, 400))
    notes.append(f"Lambert W max residual/max(1,x)={w_worst:.1e}")

    rng = np.random.default_rng(0)
    X = rng.normal(size=(2000, 3))
    S = rng.integers(0, 2, size=(2000, 2))
    y = np.sin(2 * X[:, 0]) + X[:, 1] * X[:, 2] + S @ [1.0, 0.3] + 0.1 * rng.normal(size=2000)
    mlp = fit_mlp(AuditDataset(X, S, y, Task.REGRESSION), True, TrainConfig(hidden=8, epochs=1000))
    Xi = np.hstack([X, S])[:100]
    base = mlp.baseline
    exact = mlp.predict(Xi) - mlp.predict(base)
    ig_resid = float(np.abs(integrated_gradients(mlp, Xi, base, steps=128).sum(axis=1) - exact).max())
    ref_resid = float(np.abs(integrated_gradients(mlp, Xi, base, steps=65536).sum(axis=1) - exact).max())
    gl_resid = float(np.abs(integrated_gradients(mlp, Xi, base, 128, rule="gauss_legendre").sum(axis=1) - exact).max())
    notes.append(f"MLP1 IG residual at 128 steps={ig_resid:.1e} (65536-step reference {ref_resid:.1e}, "
                 f"Gauss-Legendre 128 {gl_resid:.1e})")

    lin = LinearRegressionModel(arity=5, personalized=False, task="regression", weights=rng.normal(size=5))
    Xl = rng.normal(size=(100, 5))
    lin_resid = float(np.abs(integrated_gradients(lin, Xl, np.zeros(5), steps=1).sum(axis=1)
                             - (lin.predict(Xl) - lin.predict(np.zeros(5)))).max())
    notes.append(f"linear IG residual={lin_resid:.1e}")

    models = [
        lin,
        LogisticModel(arity=5, personalized=False, task="classification", weights=rng.normal(size=5), bias=0.1),
        mlp,
        MLPModel(arity=5, personalized=True, task="classification", W1=rng.normal(size=(5, 8)),
                 b1=rng.normal(size=8), w2=rng.normal(size=8), b2=0.0),
    ]
    fd_worst = 0.0
    h = 1e-5
    for m in models:
        for _ in range(100):
            x = rng.normal(size=m.arity)
            fd = np.array([(m.predict(x + h * e) - m.predict(x - h * e)) / (2 * h) for e in np.eye(m.arity)])
            fd_worst = max(fd_worst, float(np.abs(m.gradient(x) - fd).max()))
    notes.append(f"gradient vs central differences={fd_worst:.1e}")
    ok = w_worst <= 1e-12 and ig_resid <= 1e-3 and lin_resid <= 1e-12 and fd_worst <= 1e-5
    record(6, "numerical kernels", ok, "; ".join(notes))


def test_criterion_7_estimator_identities():
    rng = np.random.default_rng(7)
    part_ok = True
    min_ok = True
    for _ in range(100):
        n = int(rng.integers(20, 500))
        k = int(rng.integers(1, 4))
        S = rng.integers(0, 2, size=(n, k))
        ds = AuditDataset(rng.normal(size=(n, 2)), S, rng.normal(size=n), Task.REGRESSION)
        g = index_groups(ds)
        c0 = CostVector(rng.exponential(size=n), CostKind.SQUARED_ERROR, ModelTag.GENERIC)
        cp = CostVector(rng.exponential(size=n), CostKind.SQUARED_ERROR, ModelTag.PERSONALIZED)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = bop_report(c0, cp, g)
        weighted = sum(m / n * c0.values[idx].mean() for m, idx in zip(g.counts, g.members) if m)
        part_ok &= abs(weighted - c0.values.mean()) <= 1e-12
        min_ok &= rep.minimal <= rep.population + 1e-12
    gap = 0.0
    for d, m in ((4, 2500), (2, 10), (16, 300), (8, 50)):
        closed = 0.5 * math.sqrt((d + 1) ** (1.0 / m) - 1.0)
        gap = max(gap, abs(min_reliable_epsilon("categorical", [m] * d) - closed))
    ok = part_ok and min_ok and gap <= 1e-9
    record(7, "estimator identities", ok,
           f"partition holds: {part_ok}, minimal<=population: {min_ok}, max |eps* - closed form|={gap:.1e}")


def test_criterion_8_hypothesis_test():
    spec = lambda eps: BoundSpec("laplace", eps, [1000] * 4, [0.05] * 4)  # noqa: E731
    first = hypothesis_test(0.0021, spec(0.001)).verdict
    never = {hypothesis_test(-0.0216, spec(e)).verdict for e in (1e-12, 1e-6, 1e-3, 0.0216, 0.49)}
    boundary = hypothesis_test(0.001, spec(0.001)).verdict
    ok = first is Verdict.REJECT_H0 and never == {Verdict.FAIL_TO_REJECT} and boundary is Verdict.REJECT_H0
    record(8, "threshold test verdicts", ok,
           f"0.0021 vs 0.001 -> {first.value}; -0.0216 -> {sorted(v.value for v in never)}; "
           f"gamma=eps -> {boundary.value}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
