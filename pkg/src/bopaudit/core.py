"""Datasets, group indexing, per-sample costs and benefit-of-personalization estimators."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .models import PredictiveModel


class AuditError(ValueError):
    """Base class for invalid audit inputs."""


class ArityError(AuditError):
    """Model input width does not match the data handed to it."""


class DegenerateGroupError(AuditError):
    """A group cannot support a rank-based cost (single class or constant labels)."""


class EmptyGroupWarning(UserWarning):
    pass


class Task(str, enum.Enum):
    CLASSIFICATION = "classification"
    REGRESSION = "regression"


class CostKind(str, enum.Enum):
    ZERO_ONE = "zero_one"
    SQUARED_ERROR = "squared_error"
    NEG_AUC = "neg_auc"
    NEG_R2 = "neg_r2"
    SUFFICIENCY = "sufficiency"
    INCOMPREHENSIVENESS = "incomprehensiveness"

    @property
    def decomposable(self) -> bool:
        return self not in (CostKind.NEG_AUC, CostKind.NEG_R2)


class ModelTag(str, enum.Enum):
    GENERIC = "generic"
    PERSONALIZED = "personalized"


class Metric(str, enum.Enum):
    PREDICTION = "prediction"
    SUFFICIENCY = "sufficiency"
    INCOMPREHENSIVENESS = "incomprehensiveness"


_TASK_KINDS = {
    CostKind.ZERO_ONE: Task.CLASSIFICATION,
    CostKind.NEG_AUC: Task.CLASSIFICATION,
    CostKind.SQUARED_ERROR: Task.REGRESSION,
    CostKind.NEG_R2: Task.REGRESSION,
}


@dataclass(frozen=True)
class AuditDataset:
    """N samples of features ``X`` (N x t), binary group attributes ``S`` (N x k) and labels ``y``."""

    features: np.ndarray
    group_attrs: np.ndarray
    labels: np.ndarray
    task: Task

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        S = np.asarray(self.group_attrs)
        if S.ndim == 1:
            S = S.reshape(len(X), -1) if S.size else np.zeros((len(X), 0))
        S = S.astype(np.float64)
        y = np.asarray(self.labels, dtype=np.float64).ravel()
        task = Task(self.task)

        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise AuditError(f"features must be a non-empty N x t matrix, got shape {X.shape}")
        n = X.shape[0]
        if S.ndim != 2 or S.shape[0] != n:
            raise AuditError(f"group_attrs must have {n} rows, got shape {S.shape}")
        if y.shape[0] != n:
            raise AuditError(f"labels must have length {n}, got {y.shape[0]}")
        for name, arr in (("features", X), ("group_attrs", S), ("labels", y)):
            if not np.all(np.isfinite(arr)):
                raise AuditError(f"{name} contains non-finite values")
        if not np.all((S == 0) | (S == 1)):
            raise AuditError("group_attrs entries must be 0 or 1")
        if task is Task.CLASSIFICATION and not np.all((y == 0) | (y == 1)):
            raise AuditError("classification labels must be 0 or 1")

        for arr in (X, S, y):
            arr.flags.writeable = False
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "group_attrs", S)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "task", task)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def t(self) -> int:
        return self.features.shape[1]

    @property
    def k(self) -> int:
        return self.group_attrs.shape[1]

    def inputs(self, personalized: bool) -> np.ndarray:
        """Model inputs: ``X`` for a generic model, ``[X, S]`` for a personalized one."""
        if personalized:
            return np.hstack([self.features, self.group_attrs])
        return self.features

    def subset(self, idx: np.ndarray) -> "AuditDataset":
        idx = np.asarray(idx)
        return AuditDataset(self.features[idx], self.group_attrs[idx], self.labels[idx], self.task)


def encode_groups(bits: np.ndarray) -> np.ndarray:
    """Little-endian group index ``j = sum_i s_i 2^i`` for each row of ``bits``."""
    bits = np.asarray(bits)
    if bits.ndim == 1:
        bits = bits[None, :]
    weights = np.left_shift(1, np.arange(bits.shape[1], dtype=np.int64))
    return bits.astype(np.int64) @ weights


def decode_group(j: int, k: int) -> tuple[int, ...]:
    return tuple((int(j) >> i) & 1 for i in range(k))


@dataclass(frozen=True)
class GroupTable:
    k: int
    members: tuple[np.ndarray, ...]
    counts: np.ndarray
    n: int = field(default=0)

    @property
    def d(self) -> int:
        return 1 << self.k

    @property
    def empty_groups(self) -> list[int]:
        return [j for j, m in enumerate(self.counts) if m == 0]

    def bits(self, j: int) -> tuple[int, ...]:
        return decode_group(j, self.k)

    def label(self, j: int) -> str:
        return "".join(str(b) for b in self.bits(j)) or "-"


def index_groups(dataset: AuditDataset) -> GroupTable:
    """Partition sample indices into the ``2^k`` attribute combinations.

    Empty groups are kept (with count 0) so report ordering is stable.
    """
    k = dataset.k
    codes = encode_groups(dataset.group_attrs) if k else np.zeros(dataset.n, dtype=np.int64)
    d = 1 << k
    order = np.argsort(codes, kind="stable")
    counts = np.bincount(codes, minlength=d)
    members = tuple(np.split(order, np.cumsum(counts)[:-1]))
    return GroupTable(k=k, members=members, counts=counts, n=dataset.n)


@dataclass(frozen=True)
class CostVector:
    values: np.ndarray
    kind: CostKind
    model_tag: ModelTag

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "kind", CostKind(self.kind))
        object.__setattr__(self, "model_tag", ModelTag(self.model_tag))
        if not self.kind.decomposable:
            raise AuditError(f"{self.kind.value} has no per-sample decomposition")

    def __len__(self):
        return len(self.values)


def _check_arity(model: "PredictiveModel", dataset: AuditDataset):
    expected = dataset.t + dataset.k if model.personalized else dataset.t
    if model.arity != expected:
        raise ArityError(
            f"{'personalized' if model.personalized else 'generic'} model has arity "
            f"{model.arity}, dataset provides {expected} inputs"
        )


def classify(scores: np.ndarray) -> np.ndarray:
    """Threshold class-1 probabilities at 0.5; exactly 0.5 goes to class 1."""
    return (np.asarray(scores) >= 0.5).astype(np.float64)


def individual_costs(model: "PredictiveModel", dataset: AuditDataset, kind: CostKind) -> CostVector:
    kind = CostKind(kind)
    if kind in (CostKind.NEG_AUC, CostKind.NEG_R2):
        raise AuditError(f"{kind.value} is a group-level cost; use group_cost_rank")
    if kind not in _TASK_KINDS:
        raise AuditError(f"{kind.value} costs come from the explain module")
    if _TASK_KINDS[kind] is not dataset.task:
        raise AuditError(f"{kind.value} is not defined for {dataset.task.value} tasks")
    _check_arity(model, dataset)

    pred = model.predict(dataset.inputs(model.personalized))
    if kind is CostKind.ZERO_ONE:
        values = (classify(pred) != dataset.labels).astype(np.float64)
    else:
        values = (pred - dataset.labels) ** 2
    tag = ModelTag.PERSONALIZED if model.personalized else ModelTag.GENERIC
    return CostVector(values, kind, tag)


def group_cost(costs: CostVector, groups: GroupTable, j: int) -> float:
    """Mean cost over the members of group ``j``; NaN when the group is empty."""
    idx = groups.members[j]
    if len(idx) == 0:
        return float("nan")
    # np.sum is pairwise over a contiguous buffer; members are sorted so the order is fixed
    return float(np.sum(costs.values[np.sort(idx)]) / len(idx))


def auc_score(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney AUC with ties counted as one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        raise DegenerateGroupError("AUC needs both label classes in the group")
    # average ranks handle ties
    allv = np.concatenate([pos, neg])
    order = np.argsort(allv, kind="mergesort")
    ranks = np.empty(len(allv))
    sorted_v = allv[order]
    i = 0
    while i < len(allv):
        j = i
        while j + 1 < len(allv) and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    u = ranks[: len(pos)].sum() - len(pos) * (len(pos) + 1) / 2.0
    return float(u / (len(pos) * len(neg)))


def r2_score(pred: np.ndarray, y: np.ndarray) -> float:
    y = np.asarray(y, dtype=np.float64)
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot == 0:
        raise DegenerateGroupError("R^2 undefined for a group with constant labels")
    return float(1.0 - np.sum((np.asarray(pred) - y) ** 2) / ss_tot)


def rank_cost(scores: np.ndarray, labels: np.ndarray, kind: CostKind) -> float:
    kind = CostKind(kind)
    if kind is CostKind.NEG_AUC:
        return -auc_score(scores, labels)
    if kind is CostKind.NEG_R2:
        return -r2_score(scores, labels)
    raise AuditError(f"{kind.value} is not a rank-based cost")


def group_cost_rank(
    model: "PredictiveModel", dataset: AuditDataset, groups: GroupTable, j: int, kind: CostKind
) -> float:
    """-AUC or -R^2 of ``model`` restricted to group ``j``."""
    kind = CostKind(kind)
    if kind not in (CostKind.NEG_AUC, CostKind.NEG_R2):
        raise AuditError(f"{kind.value} is not a rank-based cost")
    if _TASK_KINDS[kind] is not dataset.task:
        raise AuditError(f"{kind.value} is not defined for {dataset.task.value} tasks")
    _check_arity(model, dataset)
    idx = groups.members[j]
    if len(idx) == 0:
        raise DegenerateGroupError(f"group {j} is empty")
    scores = model.predict(dataset.inputs(model.personalized)[idx])
    return rank_cost(scores, dataset.labels[idx], kind)


@dataclass(frozen=True)
class GroupBop:
    group: int
    bits: str
    n: int
    bop: float


@dataclass(frozen=True)
class BopReport:
    per_group: tuple[GroupBop, ...]
    population: float
    minimal: float
    minimal_group: int
    metric: Metric
    kind: CostKind

    @property
    def values(self) -> np.ndarray:
        return np.array([g.bop for g in self.per_group])

    def to_dict(self) -> dict:
        return {
            "metric": self.metric.value,
            "cost_kind": self.kind.value,
            "population": _json_float(self.population),
            "minimal": _json_float(self.minimal),
            "minimal_group": self.minimal_group,
            "groups": [
                {"group": g.group, "bits": g.bits, "n": g.n, "bop": _json_float(g.bop)}
                for g in self.per_group
            ],
        }


def _json_float(x: float):
    return None if not np.isfinite(x) else float(x)


_METRIC_FOR = {
    CostKind.SUFFICIENCY: Metric.SUFFICIENCY,
    CostKind.INCOMPREHENSIVENESS: Metric.INCOMPREHENSIVENESS,
}


def _finish_report(per_group, population, groups, metric, kind) -> BopReport:
    finite = [g for g in per_group if np.isfinite(g.bop)]
    skipped = [g.group for g in per_group if not np.isfinite(g.bop)]
    if skipped:
        warnings.warn(
            f"groups {skipped} have no defined cost (empty or degenerate) and are excluded from the minimal BoP",
            EmptyGroupWarning,
            stacklevel=3,
        )
    if not finite:
        raise AuditError(f"no group has a defined {kind.value} cost")
    # ties go to the lowest group index
    best = min(finite, key=lambda g: (g.bop, g.group))
    return BopReport(tuple(per_group), float(population), best.bop, best.group, metric, kind)


def bop_report(costs_h0: CostVector, costs_hp: CostVector, groups: GroupTable) -> BopReport:
    """Per-group, population and minimal BoP from generic and personalized cost vectors.

    BoP is ``cost(h0) - cost(hp)``: positive when personalizing helps.
    """
    if costs_h0.kind is not costs_hp.kind:
        raise AuditError(f"cost kinds differ: {costs_h0.kind.value} vs {costs_hp.kind.value}")
    if len(costs_h0) != len(costs_hp) or len(costs_h0) != groups.n:
        raise AuditError("cost vectors and group table disagree on sample count")
    if costs_h0.model_tag is not ModelTag.GENERIC or costs_hp.model_tag is not ModelTag.PERSONALIZED:
        raise AuditError("expected (generic, personalized) cost vectors")

    per_group = []
    for j in range(groups.d):
        bop = group_cost(costs_h0, groups, j) - group_cost(costs_hp, groups, j)
        per_group.append(GroupBop(j, groups.label(j), int(groups.counts[j]), bop))
    population = float(np.sum(costs_h0.values - costs_hp.values) / len(costs_h0))
    metric = _METRIC_FOR.get(costs_h0.kind, Metric.PREDICTION)
    return _finish_report(per_group, population, groups, metric, costs_h0.kind)


def bop_report_rank(
    h0: "PredictiveModel",
    hp: "PredictiveModel",
    dataset: AuditDataset,
    groups: GroupTable,
    kind: CostKind,
) -> BopReport:
    """BoP report for the group-level costs (-AUC, -R^2).

    Groups where the cost is undefined (empty, single class, constant labels) are
    reported as NaN and left out of the minimum.
    """
    kind = CostKind(kind)
    per_group = []
    for j in range(groups.d):
        try:
            bop = group_cost_rank(h0, dataset, groups, j, kind) - group_cost_rank(hp, dataset, groups, j, kind)
        except DegenerateGroupError:
            bop = float("nan")
        per_group.append(GroupBop(j, groups.label(j), int(groups.counts[j]), bop))
    s0 = h0.predict(dataset.inputs(False))
    sp = hp.predict(dataset.inputs(True))
    population = rank_cost(s0, dataset.labels, kind) - rank_cost(sp, dataset.labels, kind)
    return _finish_report(per_group, population, groups, Metric.PREDICTION, kind)


def individual_bop(costs_h0: CostVector, costs_hp: CostVector, groups: GroupTable) -> list[np.ndarray]:
    """Per-sample BoP values ``B_i`` split by group (empty groups yield empty arrays)."""
    b = costs_h0.values - costs_hp.values
    return [b[np.sort(idx)] for idx in groups.members]

