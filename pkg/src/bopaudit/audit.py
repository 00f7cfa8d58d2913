"""End-to-end audit: split, train, cost, BoP tables, distribution fits and tests."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .core import (
    AuditDataset,
    AuditError,
    BopReport,
    CostKind,
    Metric,
    Task,
    bop_report,
    bop_report_rank,
    index_groups,
    individual_bop,
    individual_costs,
)
from .dataio import SCHEMA_VERSION, histogram
from .explain import DEFAULT_STEPS, explanation_costs
from .models import PredictiveModel, TrainConfig, fit_model
from .stats import BoundSpec, Family, fit_bop_distribution, hypothesis_test

TABLE_COLUMNS = {
    Metric.PREDICTION: "Prediction",
    Metric.INCOMPREHENSIVENESS: "Incomp.",
    Metric.SUFFICIENCY: "Sufficiency",
}


@dataclass(frozen=True)
class AuditConfig:
    model: str = "auto"
    lr: float = 0.5
    epochs: int = 1000
    hidden: int = 8
    l2: float = 0.0
    seed: int = 0
    r: int | None = None
    steps: int = DEFAULT_STEPS
    ig_rule: str = "riemann_right"
    epsilon: float = 0.01
    prediction_cost: str | None = None
    pooled_scale: bool = False
    test_frac: float = 0.3

    def train_config(self) -> TrainConfig:
        return TrainConfig(lr=self.lr, epochs=self.epochs, hidden=self.hidden, l2=self.l2, seed=self.seed)

    def model_kind(self, task: Task) -> str:
        if self.model != "auto":
            return self.model
        return "logistic" if task is Task.CLASSIFICATION else "linear"


def stratified_split(dataset: AuditDataset, test_frac: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded split within each group; groups of 4 or more land in both halves."""
    if not 0 < test_frac < 1:
        raise ValueError("test_frac must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for idx in index_groups(dataset).members:
        idx = rng.permutation(idx)
        n_test = int(round(test_frac * len(idx)))
        if len(idx) >= 4:
            n_test = min(max(n_test, 1), len(idx) - 1)
        test.append(idx[:n_test])
        train.append(idx[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def train_pair(train: AuditDataset, cfg: AuditConfig) -> tuple[PredictiveModel, PredictiveModel]:
    if train.k < 1:
        raise AuditError("a personalized audit needs at least one group attribute")
    kind = cfg.model_kind(train.task)
    tc = cfg.train_config()
    return fit_model(kind, train, False, tc), fit_model(kind, train, True, tc)


@dataclass
class MetricResult:
    report: BopReport
    fit: object = None
    outcome: object = None
    histograms: list | None = None

    def to_dict(self) -> dict:
        return {
            "bop": self.report.to_dict(),
            "fit": self.fit.to_dict() if self.fit is not None else None,
            "test": self.outcome.to_dict() if self.outcome is not None else None,
            "histograms": self.histograms,
        }


def _test_metric(costs_h0, costs_hp, groups, cfg: AuditConfig) -> MetricResult:
    report = bop_report(costs_h0, costs_hp, groups)
    per_group = individual_bop(costs_h0, costs_hp, groups)
    nonempty = [(j, b) for j, b in enumerate(per_group) if len(b)]
    hists = [{"group": j, "bits": groups.label(j), **histogram(b)} for j, b in nonempty]
    fit = fit_bop_distribution([b for _, b in nonempty])
    scales = fit.scales
    if scales is not None and cfg.pooled_scale:
        scales = fit.pooled_scale()
    if fit.family is Family.CATEGORICAL and cfg.epsilon >= 0.5:
        outcome = None
    else:
        spec = BoundSpec(fit.family, cfg.epsilon, fit.group_sizes, scales)
        outcome = hypothesis_test(report.minimal, spec)
    return MetricResult(report, fit, outcome, hists)


def run_audit(h0: PredictiveModel, hp: PredictiveModel, test: AuditDataset, cfg: AuditConfig) -> dict[Metric, MetricResult]:
    """Prediction, sufficiency and incomprehensiveness BoP on ``test``."""
    groups = index_groups(test)
    pred_kind = CostKind(cfg.prediction_cost) if cfg.prediction_cost else (
        CostKind.ZERO_ONE if test.task is Task.CLASSIFICATION else CostKind.SQUARED_ERROR
    )
    results = {}
    if pred_kind.decomposable:
        results[Metric.PREDICTION] = _test_metric(
            individual_costs(h0, test, pred_kind), individual_costs(hp, test, pred_kind), groups, cfg
        )
    else:
        results[Metric.PREDICTION] = MetricResult(bop_report_rank(h0, hp, test, groups, pred_kind))

    suff0, comp0 = explanation_costs(h0, test, cfg.r, cfg.steps, rule=cfg.ig_rule)
    suffp, compp = explanation_costs(hp, test, cfg.r, cfg.steps, rule=cfg.ig_rule)
    results[Metric.SUFFICIENCY] = _test_metric(suff0, suffp, groups, cfg)
    results[Metric.INCOMPREHENSIVENESS] = _test_metric(comp0, compp, groups, cfg)
    return results


def _num(x):
    return float(x) if x is not None and math.isfinite(x) else None


def report_table(results: dict[Metric, MetricResult]) -> list[dict]:
    """Rows ``Group, n, Prediction, Incomp., Sufficiency`` plus population and minimal rows."""
    first = results[Metric.PREDICTION].report
    rows = []
    for j, g in enumerate(first.per_group):
        row = {"Group": g.bits, "n": g.n}
        for metric, col in TABLE_COLUMNS.items():
            row[col] = _num(results[metric].report.per_group[j].bop)
        rows.append(row)
    n_all = sum(g.n for g in first.per_group)
    rows.append({"Group": "All Pop.", "n": n_all,
                 **{col: _num(results[m].report.population) for m, col in TABLE_COLUMNS.items()}})
    rows.append({"Group": "Minimal BoP", "n": n_all,
                 **{col: _num(results[m].report.minimal) for m, col in TABLE_COLUMNS.items()}})
    return rows


def build_report(dataset: AuditDataset, train_idx, test_idx, results, cfg: AuditConfig, models: dict) -> dict:
    test = dataset.subset(test_idx)
    groups = index_groups(test)
    return {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "seed": cfg.seed,
        "config": asdict(cfg),
        "models": models,
        "dataset": {
            "n": dataset.n,
            "n_train": int(len(train_idx)),
            "n_test": int(len(test_idx)),
            "t": dataset.t,
            "k": dataset.k,
            "d": groups.d,
            "task": dataset.task.value,
            "groups": [{"group": j, "bits": groups.label(j), "n": int(m)} for j, m in enumerate(groups.counts)],
        },
        "metrics": {m.value: r.to_dict() for m, r in results.items()},
        "table": report_table(results),
    }


def audit_dataset(dataset: AuditDataset, cfg: AuditConfig, h0: PredictiveModel | None = None,
                  hp: PredictiveModel | None = None) -> tuple[dict, PredictiveModel, PredictiveModel]:
    """Split, train whichever models were not supplied, audit on the test part and build the report."""
    train_idx, test_idx = stratified_split(dataset, cfg.test_frac, cfg.seed)
    if h0 is None or hp is None:
        t0, tp = train_pair(dataset.subset(train_idx), cfg)
        h0 = h0 or t0
        hp = hp or tp
    results = run_audit(h0, hp, dataset.subset(test_idx), cfg)
    models = {"h0": h0.kind, "hp": hp.kind}
    return build_report(dataset, train_idx, test_idx, results, cfg, models), h0, hp
