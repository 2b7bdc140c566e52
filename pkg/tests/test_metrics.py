import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snn_forge.metrics import (
    ConfusionCounts,
    KpiReport,
    UndefinedAucError,
    auc_roc,
    confusion,
    kpi_suite,
    mean_error,
)


def brute_auc(labels, scores):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for a in pos:
        for b in neg:
            total += 1.0 if a > b else 0.5 if a == b else 0.0
    return total / (len(pos) * len(neg))


class TestMeanError:
    def test_perfect_fit(self):
        assert mean_error([0, 1, 1], [0, 1, 1]) == 0.0

    def test_all_half(self):
        assert mean_error([0.5] * 6, [0, 1, 1, 0, 1, 1]) == pytest.approx(0.125)

    def test_inverted(self):
        assert mean_error([1, 0], [0, 1]) == pytest.approx(0.5)

    def test_empty(self):
        with pytest.raises(ValueError):
            mean_error([], [])


class TestConfusion:
    def test_separated(self):
        assert confusion([1, 0], [0.9, 0.1], 0.5) == ConfusionCounts(tp=1, fp=0, tn=1, fn=0)

    def test_tie_at_threshold_is_positive(self):
        c = confusion([1, 0], [0.5, 0.5], 0.5)
        assert (c.tp, c.fp, c.tn, c.fn) == (1, 1, 0, 0)

    def test_enumerated(self):
        c = confusion([1, 1, 0, 0], [0.6, 0.4, 0.6, 0.4], 0.5)
        assert (c.tp, c.fn, c.fp, c.tn) == (1, 1, 1, 1)

    def test_bad_threshold(self):
        with pytest.raises(ValueError):
            confusion([1], [0.3], 1.0)

    def test_empty(self):
        with pytest.raises(ValueError):
            confusion([], [], 0.5)


class TestAuc:
    def test_separated(self):
        assert auc_roc([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == 1.0

    def test_all_ties(self):
        assert auc_roc([0, 1, 0, 1, 1], [0.3] * 5) == 0.5

    def test_enumerated(self):
        assert auc_roc([1, 0, 1, 0], [0.9, 0.8, 0.3, 0.1]) == pytest.approx(0.75)

    def test_single_class(self):
        with pytest.raises(UndefinedAucError):
            auc_roc([1, 1, 1], [0.2, 0.4, 0.9])

    def test_brute_force_random(self):
        rng = np.random.default_rng(17)
        for _ in range(200):
            N = int(rng.integers(2, 25))
            labels = rng.integers(0, 2, N)
            labels[0], labels[1] = 0, 1
            scores = rng.integers(0, 6, N) / 5.0  # coarse grid forces ties
            assert auc_roc(labels, scores) == pytest.approx(brute_auc(labels, scores), abs=1e-12)

    @settings(max_examples=100)
    @given(st.integers(0, 2**32 - 1))
    def test_monotone_transform_invariance(self, seed):
        rng = np.random.default_rng(seed)
        labels = np.r_[0, 1, rng.integers(0, 2, 20)]
        scores = rng.uniform(size=22)
        assert auc_roc(labels, np.exp(3 * scores) - 7) == pytest.approx(auc_roc(labels, scores), abs=1e-12)

    @settings(max_examples=100)
    @given(st.integers(0, 2**32 - 1))
    def test_reversal_antisymmetry(self, seed):
        rng = np.random.default_rng(seed)
        labels = np.r_[0, 1, rng.integers(0, 2, 15)]
        scores = rng.permutation(17) / 17.0  # distinct scores
        assert auc_roc(labels, scores) + auc_roc(labels, 1 - scores) == pytest.approx(1.0, abs=1e-12)


class TestKpiSuite:
    def test_perfect(self):
        r = kpi_suite([1, 1, 0, 0], [0.9, 0.6, 0.4, 0.1], 0.5)
        assert (r.acc, r.f1, r.auc, r.tpr, r.tnr) == (1.0, 1.0, 1.0, 1.0, 1.0)

    def test_total_inversion(self):
        r = kpi_suite([1, 0], [0.1, 0.9], 0.5)
        assert (r.acc, r.f1, r.auc) == (0.0, 0.0, 0.0)

    def test_single_class_reports_nan_auc(self):
        r = kpi_suite([1, 1], [0.7, 0.8])
        assert math.isnan(r.auc) and r.acc == 1.0 and r.tnr == 1.0

    def test_csv_row_round_trip(self):
        r = kpi_suite([1, 0, 1, 0, 1], [0.8, 0.3, 0.4, 0.6, 0.9], 0.5)
        row = r.to_row()
        assert list(row) == ["err", "acc", "f1", "auc", "tpr", "tnr", "tp", "fp", "tn", "fn", "threshold"]
        assert KpiReport.from_row({k: str(v) for k, v in row.items()}) == r

    @settings(max_examples=200)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 40))
    def test_identities(self, seed, N):
        rng = np.random.default_rng(seed)
        labels = rng.integers(0, 2, N)
        scores = rng.uniform(size=N)
        r = kpi_suite(labels, scores, 0.5)
        c = r.counts
        assert c.total == N
        assert r.acc == (c.tp + c.tn) / N
        assert r.acc + (c.fp + c.fn) / N == pytest.approx(1.0, abs=1e-15)
        assert r.tpr == (c.tp / (c.tp + c.fn) if c.tp + c.fn else 1.0)
        assert r.tnr == (c.tn / (c.tn + c.fp) if c.tn + c.fp else 1.0)
        if c.tp > 0:
            prec = c.tp / (c.tp + c.fp)
            rec = c.tp / (c.tp + c.fn)
            assert r.f1 == pytest.approx(2 * prec * rec / (prec + rec), rel=1e-15)
        else:
            assert r.f1 == 0.0
        assert 0.0 <= r.f1 <= 1.0
        assert (r.f1 == 1.0) == (c.fp == 0 and c.fn == 0 and c.tp > 0)

    @settings(max_examples=50)
    @given(st.integers(0, 2**32 - 1))
    def test_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        labels = np.r_[0, 1, rng.integers(0, 2, 30)]
        scores = rng.uniform(size=32)
        perm = rng.permutation(32)
        a, b = kpi_suite(labels, scores), kpi_suite(labels[perm], scores[perm])
        assert a.counts == b.counts and a.auc == pytest.approx(b.auc) and a.err == pytest.approx(b.err)
