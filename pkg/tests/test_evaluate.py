"""Confusion matrices, accuracy metrics, bootstrap confidence intervals."""
import dataclasses

import numpy as np
import pytest

from spectrees.evaluate import (
    PREDICTIONS_HEADER,
    EmptyMatrix,
    LengthMismatch,
    bootstrap_ci,
    compute_metrics,
    format_report,
    group_metrics,
    read_predictions,
    report_from_dict,
    write_predictions,
)


def random_labels(rng, n, n_classes=5, missing_rate=0.0):
    ref = rng.integers(1, n_classes + 1, n)
    pred = np.where(rng.random(n) < 0.7, ref, rng.integers(1, n_classes + 1, n))
    if missing_rate:
        pred = np.where(rng.random(n) < missing_rate, 0, pred)
    return ref, pred


class TestComputeMetrics:
    def test_two_sample_confusion(self):
        m = compute_metrics([1, 1], [1, 2])
        assert m.classes == (1, 2)
        assert m.confusion.tolist() == [[1, 1], [0, 0]]
        assert m.n_missing == 0

    def test_all_missing(self):
        m = compute_metrics([1, 2], [0, 0])
        assert m.confusion.sum() == 0
        assert m.n_missing == 2
        assert m.overall_accuracy == 0.0

    def test_hand_worked_two_class_example(self):
        # confusion [[2,0],[1,1]]
        m = compute_metrics([1, 1, 2, 2], [1, 1, 1, 2])
        assert m.confusion.tolist() == [[2, 0], [1, 1]]
        assert m.overall_accuracy == 0.75
        assert m.recall.tolist() == [1.0, 0.5]
        assert m.macro_average_accuracy == 0.75
        assert m.f1[0] == pytest.approx(0.8)
        assert m.classification_error == 0.25
        assert m.macro_f1 == pytest.approx((0.8 + 2 / 3) / 2)

    def test_perfect_diagonal(self):
        ref = [1, 2, 3, 4, 5, 6, 7, 8, 9]
        m = compute_metrics(ref, ref)
        assert m.overall_accuracy == 1.0
        assert m.macro_average_accuracy == 1.0
        assert (m.precision == 1.0).all() and (m.recall == 1.0).all()
        assert (m.f1 == 1.0).all()
        assert m.classification_error == 0.0

    def test_row_normalized_diagonal_is_recall(self, rng):
        ref, pred = random_labels(rng, 400)
        m = compute_metrics(ref, pred)
        rows = m.confusion.sum(axis=1) + np.array(
            [(np.asarray(ref) == c)[np.asarray(pred) == 0].sum() for c in m.classes])
        # reference_counts include missing; row-normalize against them
        norm = np.diag(m.confusion) / m.reference_counts
        np.testing.assert_allclose(norm, m.recall, atol=1e-12)
        assert rows.tolist() == m.reference_counts.tolist()

    def test_missing_counts_as_false_negative(self):
        m = compute_metrics([1, 1, 1], [1, 0, 0])
        assert m.n_missing == 2
        assert m.overall_accuracy == pytest.approx(1 / 3)
        assert m.recall.tolist() == [pytest.approx(1 / 3)]
        assert m.precision.tolist() == [1.0]
        assert m.reference_counts.tolist() == [3]

    def test_never_predicted_class_flagged(self):
        m = compute_metrics([1, 2], [2, 2])
        i = m.classes.index(1)
        assert m.precision[i] == 0.0
        assert m.precision_zero_division[i]
        assert "never predicted" in format_report(m)

    def test_micro_recall_equals_oa_without_missing(self, rng):
        ref, pred = random_labels(rng, 300)
        m = compute_metrics(ref, pred)
        micro = np.diag(m.confusion).sum() / m.confusion.sum()
        assert micro == pytest.approx(m.overall_accuracy, abs=1e-12)

    def test_label_permutation_invariance(self, rng):
        ref, pred = random_labels(rng, 250, missing_rate=0.1)
        perm = {1: 4, 2: 9, 3: 1, 4: 7, 5: 2, 0: 0}
        m1 = compute_metrics(ref, pred)
        m2 = compute_metrics([perm[r] for r in ref.tolist()],
                             [perm[p] for p in pred.tolist()])
        assert m1.overall_accuracy == pytest.approx(m2.overall_accuracy, abs=1e-12)
        assert m1.macro_average_accuracy == pytest.approx(
            m2.macro_average_accuracy, abs=1e-12)

    def test_single_class_reference_oa_is_recall(self, rng):
        ref = np.full(50, 3)
        pred = np.where(rng.random(50) < 0.8, 3, 5)
        m = compute_metrics(ref, pred)
        i = m.classes.index(3)
        assert m.overall_accuracy == pytest.approx(m.recall[i], abs=1e-12)

    def test_matches_per_sample_recount(self, rng):
        for _ in range(50):
            n = int(rng.integers(2, 120))
            ref = rng.integers(1, 10, n)
            pred = np.where(rng.random(n) < 0.15, 0, rng.integers(1, 10, n))
            m = compute_metrics(ref, pred)
            assert m.overall_accuracy == pytest.approx(
                np.mean(ref == pred), abs=1e-12)
            recalls = [np.mean(pred[ref == c] == c)
                       for c in np.unique(ref)]
            assert m.macro_average_accuracy == pytest.approx(
                np.mean(recalls), abs=1e-12)

    def test_input_validation(self):
        with pytest.raises(LengthMismatch):
            compute_metrics([1, 2], [1])
        with pytest.raises(EmptyMatrix):
            compute_metrics([], [])
        with pytest.raises(ValueError, match="reference"):
            compute_metrics([0, 1], [1, 1])


class TestBootstrapCi:
    def test_perfect_predictions_give_unit_interval(self):
        ref = [1, 2, 3] * 10
        assert bootstrap_ci(ref, ref) == (1.0, 1.0)
        assert bootstrap_ci(ref, ref, "macro_average_accuracy") == (1.0, 1.0)

    def test_deterministic_per_seed(self, rng):
        ref, pred = random_labels(rng, 200)
        a = bootstrap_ci(ref, pred, seed=5)
        b = bootstrap_ci(ref, pred, seed=5)
        c = bootstrap_ci(ref, pred, seed=6)
        assert a == b
        assert a != c

    def test_interval_contains_point_estimate(self, rng):
        for stat in ("overall_accuracy", "macro_average_accuracy"):
            ref, pred = random_labels(rng, 300)
            m = compute_metrics(ref, pred)
            point = getattr(m, stat)
            lo, hi = bootstrap_ci(ref, pred, stat, n_replicates=500, seed=1)
            assert lo <= point <= hi

    def test_width_tracks_binomial_theory(self):
        rng = np.random.default_rng(77)
        n, acc = 400, 0.8
        ref = np.ones(n, dtype=int)
        pred = np.where(rng.random(n) < acc, 1, 2)
        p = float((ref == pred).mean())
        lo, hi = bootstrap_ci(ref, pred, seed=3)
        theory = 2 * 1.96 * np.sqrt(p * (1 - p) / n)
        assert hi - lo == pytest.approx(theory, abs=0.012)

    def test_unknown_statistic_rejected(self):
        with pytest.raises(ValueError):
            bootstrap_ci([1, 2], [1, 2], statistic="kappa")


class TestGroupMetrics:
    def test_single_group(self, rng):
        ref, pred = random_labels(rng, 40)
        out = group_metrics(ref, pred, ["SingleTree"] * 40)
        assert list(out) == ["SingleTree"]
        assert out["SingleTree"].n_total == 40

    def test_absent_group_not_reported(self, rng):
        ref, pred = random_labels(rng, 30)
        groups = ["a"] * 20 + ["b"] * 10
        out = group_metrics(ref, pred, groups)
        assert sorted(out) == ["a", "b"]

    def test_partition_identity(self, rng):
        ref, pred = random_labels(rng, 300, missing_rate=0.05)
        groups = rng.choice(["x", "y", "z"], 300)
        out = group_metrics(ref, pred, groups)
        total = np.zeros((9, 9), dtype=np.int64)
        for m in out.values():
            for i, ci in enumerate(m.classes):
                for j, cj in enumerate(m.classes):
                    total[ci - 1, cj - 1] += m.confusion[i, j]
        g = compute_metrics(ref, pred)
        full = np.zeros((9, 9), dtype=np.int64)
        for i, ci in enumerate(g.classes):
            for j, cj in enumerate(g.classes):
                full[ci - 1, cj - 1] = g.confusion[i, j]
        assert np.array_equal(total, full)
        assert sum(m.n_missing for m in out.values()) == g.n_missing


class TestReportPersistence:
    def test_dict_round_trip_with_ci(self, rng):
        ref, pred = random_labels(rng, 120, missing_rate=0.1)
        m = compute_metrics(ref, pred)
        m = dataclasses.replace(m, ci95={"overall_accuracy": (0.7, 0.8)})
        doc = m.as_dict()
        assert doc["classification_error"] == pytest.approx(1 - m.overall_accuracy)
        back = report_from_dict(doc)
        assert back.classes == m.classes
        assert np.array_equal(back.confusion, m.confusion)
        assert back.overall_accuracy == m.overall_accuracy
        assert back.ci95 == {"overall_accuracy": (0.7, 0.8)}
        assert np.array_equal(back.reference_counts, m.reference_counts)

    def test_predictions_csv_round_trip(self, tmp_path, rng):
        sids = [5, 9, 11]
        codes = [1, 3, 9]
        proba = np.array([[0.7, 0.2, 0.1], [0.1, 0.8, 0.1], [0.0, 0.1, 0.9]])
        p = tmp_path / "predictions.csv"
        write_predictions(p, sids, codes, proba, proba_classes=[1, 3, 9])
        assert open(p).readline().strip() == PREDICTIONS_HEADER
        bs, bc, bp = read_predictions(p)
        assert bs.tolist() == sids and bc.tolist() == codes
        assert bp.shape == (3, 9)
        assert bp[:, 0].tolist() == [0.7, 0.1, 0.0]   # p1
        assert bp[:, 2].tolist() == [0.2, 0.8, 0.1]   # p3
        assert bp[:, 8].tolist() == [0.1, 0.1, 0.9]   # p9
        assert bp[:, 1].tolist() == [0.0, 0.0, 0.0]   # class 2 absent

    def test_header_shape(self):
        assert PREDICTIONS_HEADER.split(",") == (
            ["segment_id", "predicted_code"] + [f"p{i}" for i in range(1, 10)])
