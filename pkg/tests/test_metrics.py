import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wildloop.errors import EmptyMatrix, LengthMismatch, UnknownLabel
from wildloop.ingest import LabelSpace
from wildloop.metrics import (
    ConfusionMatrix,
    collapse_empty,
    confusion,
    format_cm,
    format_report,
    report,
)

TWO = LabelSpace(("empty", "animal"))
THREE = LabelSpace(("empty", "red_fox", "roe_deer"))


class TestConfusion:
    def test_perfect_diagonal(self):
        cm = confusion(["empty", "red_fox", "roe_deer"] * 3,
                       ["empty", "red_fox", "roe_deer"] * 3, THREE)
        assert np.array_equal(cm.counts, np.eye(3, dtype=np.int64) * 3)

    def test_all_predicted_empty(self):
        cm = confusion(["red_fox", "roe_deer", "empty"], ["empty"] * 3, THREE)
        assert cm.counts[:, THREE.empty_index].sum() == 3
        assert cm.counts[:, 1:].sum() == 0

    def test_hand_built_matrix(self):
        true = ["empty"] * 4 + ["red_fox"] * 3 + ["roe_deer"] * 2
        pred = ["empty", "empty", "red_fox", "roe_deer",
                "red_fox", "red_fox", "empty",
                "roe_deer", "red_fox"]
        cm = confusion(true, pred, THREE)
        expected = np.array([[2, 1, 1], [1, 2, 0], [0, 1, 1]])
        assert np.array_equal(cm.counts, expected)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            confusion(["empty"], [], THREE)

    def test_unknown_label(self):
        with pytest.raises(UnknownLabel):
            confusion(["wolf"], ["empty"], THREE)


class TestReport:
    def test_perfect(self):
        cm = ConfusionMatrix(TWO, np.array([[5, 0], [0, 5]]))
        rep = report(cm)
        assert rep.accuracy == 1.0
        assert all(m.f1 == 1.0 for m in rep.per_class.values())

    def test_worked_example(self):
        # cm [[8,2],[4,6]]: hand computation cross-checked with sklearn:
        # precision (8/12, 6/8), recall (0.8, 0.6), F1 (16/22, 2/3),
        # weighted F1 (10*(16/22) + 10*(2/3)) / 20 = 23/33.
        cm = ConfusionMatrix(TWO, np.array([[8, 2], [4, 6]]))
        rep = report(cm)
        assert abs(rep.accuracy - 0.7) < 1e-12
        assert abs(rep.per_class["empty"].precision - 8 / 12) < 1e-12
        assert abs(rep.per_class["animal"].precision - 6 / 8) < 1e-12
        assert abs(rep.per_class["empty"].recall - 0.8) < 1e-12
        assert abs(rep.per_class["animal"].recall - 0.6) < 1e-12
        assert abs(rep.per_class["empty"].f1 - 16 / 22) < 1e-12
        assert abs(rep.per_class["animal"].f1 - 2 / 3) < 1e-12
        assert abs(rep.weighted_f1 - 23 / 33) < 1e-12

    def test_zero_support_class(self):
        # nobody is truly roe_deer; its recall reports 0 with support 0 and
        # weight 0 in the averages
        cm = ConfusionMatrix(THREE, np.array([[3, 0, 1], [0, 2, 1], [0, 0, 0]]))
        rep = report(cm)
        deer = rep.per_class["roe_deer"]
        assert deer.support == 0
        assert deer.recall == 0.0
        without = (4 * rep.per_class["empty"].recall + 3 * rep.per_class["red_fox"].recall) / 7
        assert abs(rep.weighted_recall - without) < 1e-12

    def test_zero_denominator_precision(self):
        cm = ConfusionMatrix(TWO, np.array([[4, 0], [2, 0]]))
        rep = report(cm)
        assert rep.per_class["animal"].precision == 0.0
        assert rep.per_class["animal"].f1 == 0.0

    def test_empty_matrix(self):
        with pytest.raises(EmptyMatrix):
            report(ConfusionMatrix(TWO, np.zeros((2, 2), dtype=np.int64)))

    @given(st.lists(st.integers(min_value=0, max_value=50), min_size=9, max_size=9))
    @settings(max_examples=200, deadline=None)
    def test_weighted_recall_equals_accuracy(self, flat):
        counts = np.array(flat, dtype=np.int64).reshape(3, 3)
        if counts.sum() == 0:
            return
        rep = report(ConfusionMatrix(THREE, counts))
        assert rep.weighted_recall == rep.accuracy
        # independent general-formula computation agrees to float precision
        supports = counts.sum(axis=1)
        recalls = [
            rep.per_class[name].recall for name in THREE.classes
        ]
        general = sum(s * r for s, r in zip(supports, recalls)) / supports.sum()
        assert rep.weighted_recall == pytest.approx(general, abs=1e-12)

    def test_relabeling_invariance(self, rng):
        counts = rng.integers(0, 30, size=(3, 3))
        rep = report(ConfusionMatrix(THREE, counts))
        perm = [2, 0, 1]
        permuted_space = LabelSpace(tuple(THREE.classes[i] for i in perm))
        permuted = counts[np.ix_(perm, perm)]
        rep2 = report(ConfusionMatrix(permuted_space, permuted))
        assert rep2.accuracy == pytest.approx(rep.accuracy, abs=1e-12)
        assert rep2.weighted_f1 == pytest.approx(rep.weighted_f1, abs=1e-12)
        for name in THREE.classes:
            assert rep2.per_class[name].f1 == pytest.approx(rep.per_class[name].f1, abs=1e-12)


class TestCollapseEmpty:
    def test_diagonal_stays_diagonal(self):
        cm = ConfusionMatrix(THREE, np.diag([5, 3, 2]))
        out = collapse_empty(cm)
        assert np.array_equal(out.counts, np.array([[5, 0], [0, 5]]))

    def test_cross_animal_confusion_lands_on_diagonal(self):
        counts = np.zeros((3, 3), dtype=np.int64)
        counts[THREE.index("roe_deer"), THREE.index("red_fox")] = 4
        out = collapse_empty(ConfusionMatrix(THREE, counts))
        assert out.counts[1, 1] == 4

    def test_hand_merged(self):
        counts = np.array([[2, 1, 1], [1, 2, 0], [0, 1, 1]])
        out = collapse_empty(ConfusionMatrix(THREE, counts))
        # by hand: empty-true row (2 | 1+1), animal rows (1+0 | 2+0+1+1)
        assert np.array_equal(out.counts, np.array([[2, 2], [1, 4]]))

    @given(st.lists(st.integers(min_value=0, max_value=20), min_size=9, max_size=9))
    @settings(max_examples=100, deadline=None)
    def test_preserves_total_and_empty_marginals(self, flat):
        counts = np.array(flat, dtype=np.int64).reshape(3, 3)
        cm = ConfusionMatrix(THREE, counts)
        out = collapse_empty(cm)
        assert out.counts.sum() == counts.sum()
        e = THREE.empty_index
        assert out.counts[0].sum() == counts[e].sum()
        assert out.counts[:, 0].sum() == counts[:, e].sum()


class TestFormatting:
    def test_report_table(self):
        rep = report(ConfusionMatrix(TWO, np.array([[8, 2], [4, 6]])))
        text = format_report(rep)
        assert "empty" in text and "accuracy" in text

    def test_cm_table(self):
        text = format_cm(ConfusionMatrix(TWO, np.array([[8, 2], [4, 6]])))
        assert "empty" in text and "animal" in text

    def test_csv_exports(self, tmp_path):
        from wildloop.metrics import cm_to_csv, report_to_csv

        cm = ConfusionMatrix(TWO, np.array([[8, 2], [4, 6]]))
        report_to_csv(report(cm), tmp_path / "rep.csv")
        cm_to_csv(cm, tmp_path / "cm.csv")
        rep_text = (tmp_path / "rep.csv").read_text()
        assert "weighted" in rep_text
        assert (tmp_path / "cm.csv").read_text().splitlines()[1].startswith("empty,8,2")
