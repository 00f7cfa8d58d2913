import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bopaudit.core import (
    ArityError,
    AuditDataset,
    AuditError,
    CostKind,
    CostVector,
    DegenerateGroupError,
    EmptyGroupWarning,
    ModelTag,
    Task,
    auc_score,
    bop_report,
    decode_group,
    encode_groups,
    group_cost,
    group_cost_rank,
    index_groups,
    individual_bop,
    individual_costs,
)
from bopaudit.models import LinearRegressionModel, LogisticModel


def _cls(X, S, y):
    return AuditDataset(np.asarray(X, float), np.asarray(S, float), np.asarray(y, float), Task.CLASSIFICATION)


def _cv(values, tag="generic", kind=CostKind.ZERO_ONE):
    return CostVector(np.asarray(values, float), kind, ModelTag(tag))


def _random_dataset(rng, n, k, task=Task.CLASSIFICATION):
    X = rng.normal(size=(n, 2))
    S = rng.integers(0, 2, size=(n, k))
    y = rng.integers(0, 2, size=n) if task is Task.CLASSIFICATION else rng.normal(size=n)
    return AuditDataset(X, S, y, task)


class TestAuditDataset:
    def test_rejects_non_binary_attributes(self):
        with pytest.raises(AuditError):
            _cls([[0.0], [1.0]], [[0], [2]], [0, 1])

    def test_rejects_non_binary_classification_labels(self):
        with pytest.raises(AuditError):
            _cls([[0.0], [1.0]], [[0], [1]], [0, 0.5])

    def test_rejects_non_finite(self):
        with pytest.raises(AuditError):
            _cls([[np.nan], [1.0]], [[0], [1]], [0, 1])

    def test_rejects_ragged_lengths(self):
        with pytest.raises(AuditError):
            _cls([[0.0], [1.0]], [[0], [1]], [0, 1, 1])

    def test_personalized_inputs_append_attributes(self):
        ds = _cls([[3.0], [4.0]], [[0, 1], [1, 0]], [0, 1])
        np.testing.assert_array_equal(ds.inputs(True), [[3, 0, 1], [4, 1, 0]])
        assert ds.inputs(False).shape == (2, 1)


class TestGroups:
    def test_no_attributes_single_group(self):
        ds = AuditDataset(np.ones((5, 1)), np.zeros((5, 0)), np.zeros(5), Task.REGRESSION)
        g = index_groups(ds)
        assert g.d == 1
        np.testing.assert_array_equal(g.members[0], np.arange(5))

    def test_bijective_encoding_k2(self):
        ds = _cls(np.zeros((4, 1)), [[0, 0], [1, 0], [0, 1], [1, 1]], [0, 0, 1, 1])
        g = index_groups(ds)
        assert [list(m) for m in g.members] == [[0], [1], [2], [3]]
        assert list(g.counts) == [1, 1, 1, 1]

    def test_unbalanced_counts_partition(self):
        sizes = {0b00: 8443, 0b01: 1146, 0b10: 3052, 0b11: 696}
        bits = np.vstack([np.tile([j & 1, (j >> 1) & 1], (m, 1)) for j, m in sizes.items()])
        ds = _cls(np.zeros((len(bits), 1)), bits, np.zeros(len(bits)))
        g = index_groups(ds)
        assert g.counts.sum() == 13337
        assert list(g.counts) == [8443, 1146, 3052, 696]

    def test_empty_groups_retained(self):
        ds = _cls(np.zeros((3, 1)), [[0, 0], [0, 0], [1, 1]], [0, 1, 0])
        g = index_groups(ds)
        assert g.empty_groups == [1, 2]
        assert len(g.members) == 4

    @pytest.mark.parametrize("k", [0, 1, 3, 7, 16])
    def test_encode_decode_roundtrip(self, k):
        patterns = itertools.islice(itertools.product((0, 1), repeat=k), 4096)
        for bits in patterns:
            j = int(encode_groups(np.array(bits))[0]) if k else 0
            assert decode_group(j, k) == bits

    @given(st.integers(1, 60), st.integers(0, 4), st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_partition_covers_samples(self, n, k, seed):
        ds = _random_dataset(np.random.default_rng(seed), n, k)
        g = index_groups(ds)
        allidx = np.sort(np.concatenate(g.members))
        np.testing.assert_array_equal(allidx, np.arange(n))
        assert g.counts.sum() == n


class TestCosts:
    def test_perfect_classifier_zero_loss(self):
        ds = _cls([[-1.0], [1.0]], [[0], [1]], [0, 1])
        model = LogisticModel(arity=1, personalized=False, task="classification", weights=[50.0], bias=0.0)
        np.testing.assert_array_equal(individual_costs(model, ds, CostKind.ZERO_ONE).values, [0, 0])

    def test_squared_error_of_zero_predictor(self):
        ds = AuditDataset([[0.0], [0.0]], np.zeros((2, 0)), [1.0, -1.0], Task.REGRESSION)
        model = LinearRegressionModel(arity=1, personalized=False, task="regression", weights=[0.0])
        np.testing.assert_array_equal(individual_costs(model, ds, CostKind.SQUARED_ERROR).values, [1, 1])

    def test_zero_one_mismatches(self):
        # predictions (0,1,1,0) against labels (0,0,1,1): mismatches at positions 1 and 3
        ds = _cls([[-1.0], [1.0], [1.0], [-1.0]], np.zeros((4, 0)), [0, 0, 1, 1])
        model = LogisticModel(arity=1, personalized=False, task="classification", weights=[20.0])
        np.testing.assert_array_equal(individual_costs(model, ds, CostKind.ZERO_ONE).values, [0, 1, 0, 1])

    def test_half_probability_counts_as_class_one(self):
        ds = _cls([[0.0], [0.0]], np.zeros((2, 0)), [1, 0])
        model = LogisticModel(arity=1, personalized=False, task="classification", weights=[0.0])
        np.testing.assert_array_equal(individual_costs(model, ds, CostKind.ZERO_ONE).values, [0, 1])

    def test_rank_kinds_rejected(self):
        ds = _cls([[0.0], [1.0]], [[0], [1]], [0, 1])
        model = LogisticModel(arity=1, personalized=False, task="classification", weights=[1.0])
        with pytest.raises(AuditError):
            individual_costs(model, ds, CostKind.NEG_AUC)

    def test_arity_mismatch(self):
        ds = _cls([[0.0], [1.0]], [[0], [1]], [0, 1])
        model = LogisticModel(arity=1, personalized=True, task="classification", weights=[1.0])
        with pytest.raises(ArityError):
            individual_costs(model, ds, CostKind.ZERO_ONE)

    def test_task_mismatch(self):
        ds = _cls([[0.0], [1.0]], [[0], [1]], [0, 1])
        model = LogisticModel(arity=1, personalized=False, task="classification", weights=[1.0])
        with pytest.raises(AuditError):
            individual_costs(model, ds, CostKind.SQUARED_ERROR)


class TestGroupCost:
    def _groups(self, S):
        return index_groups(_cls(np.zeros((len(S), 1)), S, np.zeros(len(S))))

    def test_zero_costs(self):
        g = self._groups([[0], [1], [1]])
        assert group_cost(_cv([0, 0, 0]), g, 1) == 0.0

    def test_mean(self):
        g = self._groups([[0], [0]])
        assert group_cost(_cv([1, 0]), g, 0) == 0.5

    def test_two_groups(self):
        g = self._groups([[0], [0], [1], [1]])
        costs = _cv([0, 1, 0, 1])
        assert (group_cost(costs, g, 0), group_cost(costs, g, 1)) == (0.5, 0.5)

    def test_empty_group_is_nan(self):
        g = self._groups([[0], [0]])
        assert np.isnan(group_cost(_cv([1, 0]), g, 1))


def _brute_auc(scores, labels):
    pairs = [(p, q) for p, lp in zip(scores, labels) if lp == 1 for q, lq in zip(scores, labels) if lq == 0]
    return sum(1.0 if p > q else 0.5 if p == q else 0.0 for p, q in pairs) / len(pairs)


class TestRankCosts:
    def _setup(self, scores, labels, task="classification"):
        n = len(labels)
        ds = AuditDataset(np.asarray(scores, float)[:, None], np.zeros((n, 1)), labels, task)
        return ds, index_groups(ds)

    def test_perfect_ranking(self):
        ds, g = self._setup([0.0, 1.0, 0.0, 1.0], [0, 1, 0, 1])
        # identity scores through a linear score model
        model = LinearRegressionModel(arity=1, personalized=False, task="regression", weights=[1.0])
        assert group_cost_rank(model, ds, g, 0, CostKind.NEG_AUC) == -1.0

    def test_worked_auc(self):
        scores, labels = [0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]
        assert _brute_auc(scores, labels) == 0.75
        ds, g = self._setup(scores, labels)
        model = LinearRegressionModel(arity=1, personalized=False, task="regression", weights=[1.0])
        assert group_cost_rank(model, ds, g, 0, CostKind.NEG_AUC) == pytest.approx(-0.75)

    @given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 1)), min_size=2, max_size=30))
    @settings(max_examples=60, deadline=None)
    def test_auc_matches_pair_enumeration(self, data):
        scores = [float(s) for s, _ in data]
        labels = [lab for _, lab in data]
        if len(set(labels)) < 2:
            return
        assert auc_score(scores, labels) == pytest.approx(_brute_auc(scores, labels))

    def test_r2_zero_at_group_mean(self):
        y = np.array([1.0, 2.0, 4.0])
        ds = AuditDataset(np.zeros((3, 1)), np.zeros((3, 1)), y, Task.REGRESSION)
        model = LinearRegressionModel(arity=1, personalized=False, task="regression", weights=[0.0], y_mean=y.mean())
        assert group_cost_rank(model, ds, index_groups(ds), 0, CostKind.NEG_R2) == pytest.approx(0.0, abs=1e-15)

    def test_single_class_group_is_degenerate(self):
        ds, g = self._setup([0.1, 0.2], [1, 1])
        model = LinearRegressionModel(arity=1, personalized=False, task="regression", weights=[1.0])
        with pytest.raises(DegenerateGroupError):
            group_cost_rank(model, ds, g, 0, CostKind.NEG_AUC)

    def test_constant_labels_degenerate_r2(self):
        ds = AuditDataset(np.zeros((3, 1)), np.zeros((3, 1)), [1.0, 1.0, 1.0], Task.REGRESSION)
        model = LinearRegressionModel(arity=1, personalized=False, task="regression", weights=[0.0])
        with pytest.raises(DegenerateGroupError):
            group_cost_rank(model, ds, index_groups(ds), 0, CostKind.NEG_R2)


class TestBopReport:
    def _groups(self, S):
        return index_groups(_cls(np.zeros((len(S), 1)), S, np.zeros(len(S))))

    def test_identical_models_zero(self):
        g = self._groups([[0], [1], [1], [0]])
        rep = bop_report(_cv([1, 0, 1, 1]), _cv([1, 0, 1, 1], "personalized"), g)
        assert np.all(rep.values == 0) and rep.population == 0 and rep.minimal == 0

    def test_worked_two_groups(self):
        # group costs h0 = (0.4, 0.2), hp = (0.3, 0.3) over five samples each
        g = self._groups([[0]] * 5 + [[1]] * 5)
        h0 = _cv([1, 1, 0, 0, 0] + [1, 0, 0, 0, 0], kind=CostKind.SQUARED_ERROR)
        hp = _cv([1, 0, 0, 0.5, 0] + [0.5, 0.5, 0.5, 0, 0], "personalized", CostKind.SQUARED_ERROR)
        rep = bop_report(h0, hp, g)
        np.testing.assert_allclose(rep.values, [0.1, -0.1], atol=1e-15)
        assert rep.minimal == pytest.approx(-0.1)
        assert rep.minimal_group == 1

    def test_ties_report_lowest_group(self):
        g = self._groups([[0], [1]])
        rep = bop_report(_cv([1, 1]), _cv([0, 0], "personalized"), g)
        assert rep.minimal_group == 0

    def test_kind_mismatch(self):
        g = self._groups([[0], [1]])
        with pytest.raises(AuditError):
            bop_report(_cv([1, 1]), _cv([0, 0], "personalized", CostKind.SQUARED_ERROR), g)

    def test_tag_order_enforced(self):
        g = self._groups([[0], [1]])
        with pytest.raises(AuditError):
            bop_report(_cv([1, 1], "personalized"), _cv([0, 0]), g)

    def test_empty_group_excluded_with_warning(self):
        g = self._groups([[0], [0], [1], [1]])
        g2 = index_groups(_cls(np.zeros((4, 1)), [[0, 0], [0, 0], [1, 0], [1, 0]], np.zeros(4)))
        with pytest.warns(EmptyGroupWarning):
            rep = bop_report(_cv([1, 0, 0, 0]), _cv([0, 0, 1, 0], "personalized"), g2)
        assert rep.minimal == -0.5 and rep.minimal_group == 1
        assert np.isnan(rep.per_group[2].bop)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            bop_report(_cv([1, 0, 0, 0]), _cv([0, 0, 1, 0], "personalized"), g)

    def test_row_format(self):
        g = self._groups([[0], [1]])
        d = bop_report(_cv([1, 0]), _cv([0, 0], "personalized"), g).to_dict()
        assert d["groups"][0] == {"group": 0, "bits": "0", "n": 1, "bop": 1.0}
        assert set(d) == {"metric", "cost_kind", "population", "minimal", "minimal_group", "groups"}


class TestEstimatorProperties:
    @given(st.integers(2, 400), st.integers(1, 4), st.integers(0, 2**32 - 1))
    @settings(max_examples=100, deadline=None)
    def test_partition_and_minimal_le_population(self, n, k, seed):
        rng = np.random.default_rng(seed)
        ds = _random_dataset(rng, n, k, Task.REGRESSION)
        g = index_groups(ds)
        c0 = _cv(rng.exponential(size=n), kind=CostKind.SQUARED_ERROR)
        cp = _cv(rng.exponential(size=n), "personalized", CostKind.SQUARED_ERROR)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EmptyGroupWarning)
            rep = bop_report(c0, cp, g)
        weighted = sum(m / n * group_cost(c0, g, j) for j, m in enumerate(g.counts) if m)
        assert weighted == pytest.approx(float(np.mean(c0.values)), abs=1e-12 * n)
        weighted_bop = sum(m / n * gb.bop for m, gb in zip(g.counts, rep.per_group) if m)
        assert weighted_bop == pytest.approx(rep.population, abs=1e-12 * n)
        assert rep.minimal <= rep.population + 1e-12

    def test_within_group_permutation(self):
        rng = np.random.default_rng(3)
        ds = _random_dataset(rng, 200, 2)
        g = index_groups(ds)
        values = rng.random(200)
        perm = values.copy()
        for idx in g.members:
            perm[idx] = values[rng.permutation(idx)]
        for j in range(g.d):
            assert group_cost(_cv(values), g, j) == pytest.approx(group_cost(_cv(perm), g, j), abs=1e-15)

    def test_zero_one_individual_bop_support(self):
        rng = np.random.default_rng(5)
        ds = _random_dataset(rng, 300, 2)
        g = index_groups(ds)
        b = individual_bop(_cv(rng.integers(0, 2, 300)), _cv(rng.integers(0, 2, 300), "personalized"), g)
        assert set(np.unique(np.concatenate(b))) <= {-1.0, 0.0, 1.0}
