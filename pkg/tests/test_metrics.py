"""Balanced accuracy, robustness ratios, and the corruption generator."""

import warnings

import numpy as np
import pytest

from dinakan.corruption import (
    BLUR_RADIUS,
    CONTRAST_DOWN_SCALE,
    CONTRAST_UP_SCALE,
    GAUSSIAN_SIGMA,
    KINDS,
    corrupt_image,
    severity_parameter,
)
from dinakan.metrics import (
    BaselineErrorTable,
    SeverityErrors,
    aggregate,
    balanced_accuracy,
    confusion_matrix,
    corruption_error_ratio,
    relative_error_ratio,
)


def make_baseline(entries):
    table = {("clean", 0): entries.pop("clean")}
    for name, values in entries.items():
        for s, v in enumerate(values, start=1):
            table[(name, s)] = v
    return BaselineErrorTable(table)


class TestBalancedAccuracy:
    def test_binary_mean_of_sensitivity_and_specificity(self):
        # sensitivity 0.8 (4/5 positives), specificity 0.6 (3/5 negatives)
        labels = [1] * 5 + [0] * 5
        preds = [1, 1, 1, 1, 0] + [0, 0, 0, 1, 1]
        assert balanced_accuracy(labels, preds, 2) == pytest.approx(0.7)

    def test_perfect_predictions(self):
        labels = [0, 1, 2, 1, 0]
        assert balanced_accuracy(labels, labels, 3) == 1.0

    def test_three_class_recalls(self):
        # recalls (1.0, 0.5, 0.0) -> macro 0.5
        labels = [0, 0, 1, 1, 2, 2]
        preds = [0, 0, 1, 2, 0, 1]
        assert balanced_accuracy(labels, preds, 3) == pytest.approx(0.5)

    def test_zero_support_class_excluded_with_warning(self):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            value = balanced_accuracy([0, 0, 1], [0, 0, 1], 3)
        assert any("zero support" in str(w.message) for w in caught)
        assert value == 1.0

    def test_sample_order_invariance(self):
        rng = np.random.default_rng(0)
        labels = rng.integers(0, 4, size=60)
        preds = rng.integers(0, 4, size=60)
        base = balanced_accuracy(labels, preds, 4)
        perm = rng.permutation(60)
        assert balanced_accuracy(labels[perm], preds[perm], 4) == pytest.approx(base)

    def test_confusion_matrix_rows_sum_to_support(self):
        labels = np.array([0, 1, 1, 2, 2, 2])
        preds = np.array([0, 1, 0, 2, 2, 1])
        cm = confusion_matrix(labels, preds, 3)
        np.testing.assert_array_equal(cm.sum(axis=1), [1, 2, 3])


class TestErrorRatios:
    def test_identical_to_baseline_gives_one(self):
        baseline = make_baseline({"clean": 0.2, "noise": [0.3, 0.35, 0.4, 0.45, 0.5]})
        errors = SeverityErrors("noise", [0.3, 0.35, 0.4, 0.45, 0.5], 0.2)
        assert corruption_error_ratio(errors, baseline) == pytest.approx(1.0)
        assert relative_error_ratio(errors, baseline) == pytest.approx(1.0)

    def test_half_the_baseline(self):
        baseline = make_baseline({"clean": 0.2, "noise": [0.4] * 5})
        errors = SeverityErrors("noise", [0.2] * 5, 0.2)
        assert corruption_error_ratio(errors, baseline) == pytest.approx(0.5)

    def test_direct_sum_example(self):
        baseline = make_baseline({"clean": 0.1, "noise": [0.2] * 5})
        errors = SeverityErrors("noise", [0.1, 0.2, 0.3, 0.4, 0.5], 0.1)
        assert corruption_error_ratio(errors, baseline) == pytest.approx(1.5)

    def test_no_degradation_gives_zero_relative(self):
        baseline = make_baseline({"clean": 0.2, "noise": [0.4] * 5})
        errors = SeverityErrors("noise", [0.15] * 5, 0.15)
        assert relative_error_ratio(errors, baseline) == pytest.approx(0.0)

    def test_relative_direct_sums(self):
        baseline = make_baseline({"clean": 0.2, "noise": [0.4] * 5})
        errors = SeverityErrors("noise", [0.3] * 5, 0.2)
        assert relative_error_ratio(errors, baseline) == pytest.approx(0.5)

    def test_scale_consistency(self):
        rng = np.random.default_rng(1)
        model_errors = rng.uniform(0.2, 0.5, size=5)
        base_errors = rng.uniform(0.3, 0.6, size=5)
        for scale in (0.5, 1.0, 1.7):
            baseline = make_baseline({"clean": 0.1 * scale,
                                      "noise": list(base_errors * scale)})
            errors = SeverityErrors("noise", list(model_errors * scale), 0.1 * scale)
            ratio = corruption_error_ratio(errors, baseline)
            expected = model_errors.sum() / base_errors.sum()
            assert ratio == pytest.approx(expected)

    def test_zero_baseline_degradation_flagged_undefined(self):
        baseline = make_baseline({"clean": 0.3, "noise": [0.3] * 5})
        errors = SeverityErrors("noise", [0.4] * 5, 0.2)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            assert relative_error_ratio(errors, baseline) is None
        assert any("undefined" in str(w.message) for w in caught)

    def test_missing_baseline_entry(self):
        baseline = make_baseline({"clean": 0.2, "noise": [0.4] * 5})
        errors = SeverityErrors("blur", [0.3] * 5, 0.2)
        with pytest.raises(KeyError, match="blur"):
            corruption_error_ratio(errors, baseline)

    def test_severity_count_enforced(self):
        with pytest.raises(ValueError, match="severity"):
            SeverityErrors("noise", [0.1, 0.2], 0.1)


class TestAggregate:
    def test_single_corruption_is_the_overall(self):
        baseline = make_baseline({"clean": 0.2, "noise": [0.4] * 5})
        per = {"noise": SeverityErrors("noise", [0.3] * 5, 0.25)}
        report = aggregate(per, baseline, bacc_clean=0.75)
        assert report.overall_be == pytest.approx(report.per_corruption_be["noise"])
        assert report.overall_rbe == pytest.approx(report.per_corruption_rbe["noise"])

    def test_mean_of_two(self):
        baseline = make_baseline({
            "clean": 0.2, "a": [0.4] * 5, "b": [0.4] * 5,
        })
        per = {
            "a": SeverityErrors("a", [0.2 + 0.08] * 5, 0.2),   # rbe 0.4
            "b": SeverityErrors("b", [0.2 + 0.12] * 5, 0.2),   # rbe 0.6
        }
        report = aggregate(per, baseline, bacc_clean=0.8)
        assert report.overall_rbe == pytest.approx(0.5)

    def test_category_means_match_flat_recomputation(self):
        rng = np.random.default_rng(2)
        names = [f"c{i}" for i in range(6)]
        categories = {name: ("digital" if i < 3 else "noise") for i, name in enumerate(names)}
        base_entries = {"clean": 0.2}
        per = {}
        for name in names:
            base_entries[name] = list(rng.uniform(0.3, 0.6, size=5))
            per[name] = SeverityErrors(name, list(rng.uniform(0.25, 0.55, size=5)), 0.22)
        baseline = make_baseline(base_entries)
        report = aggregate(per, baseline, bacc_clean=0.78, categories=categories)
        for cat in ("digital", "noise"):
            members = [n for n in names if categories[n] == cat]
            flat = np.mean([report.per_corruption_be[n] for n in members])
            assert report.category_be[cat] == pytest.approx(flat)

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            aggregate({}, make_baseline({"clean": 0.1}), 0.9)

    def test_csv_shape(self):
        baseline = make_baseline({"clean": 0.2, "noise": [0.4] * 5})
        per = {"noise": SeverityErrors("noise", [0.3] * 5, 0.25)}
        text = aggregate(per, baseline, bacc_clean=0.75).csv()
        assert text.splitlines()[0] == "record,name,value"
        assert any(line.startswith("summary,rBE,") for line in text.splitlines())


class TestBaselineTable:
    def test_parse_with_comments(self):
        text = "# reference errors\nclean,0,0.2\nnoise,1,0.3\nnoise, 2 ,0.35\n"
        table = BaselineErrorTable.parse(text)
        assert table.clean() == 0.2
        assert table.get("noise", 2) == 0.35

    def test_dump_parse_round_trip(self):
        table = make_baseline({"clean": 0.21, "noise": [0.3, 0.31, 0.32, 0.33, 0.34]})
        again = BaselineErrorTable.parse(table.dump())
        assert again.entries == table.entries

    def test_malformed_line_reports_lineno(self):
        with pytest.raises(ValueError, match="line 2"):
            BaselineErrorTable.parse("clean,0,0.2\nbogus line\n")


class TestCorruptions:
    def test_severity_table_lookup_exact(self):
        assert severity_parameter("gaussian_noise", 3) == 0.12
        assert GAUSSIAN_SIGMA == (0.04, 0.08, 0.12, 0.18, 0.26)
        assert CONTRAST_UP_SCALE[-1] == 2.0
        assert CONTRAST_DOWN_SCALE[0] == 0.8
        assert BLUR_RADIUS == (1, 2, 3, 4, 5)

    def test_severity_out_of_range(self):
        with pytest.raises(ValueError, match="severity"):
            severity_parameter("gaussian_noise", 6)
        img = np.zeros((1, 4, 4))
        with pytest.raises(ValueError, match="severity"):
            corrupt_image(img, "gaussian_noise", 0)

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown corruption"):
            corrupt_image(np.zeros((1, 4, 4)), "saturate", 1)

    def test_same_seed_bitwise_identical(self):
        rng = np.random.default_rng(3)
        img = rng.uniform(size=(3, 8, 8))
        for kind in KINDS:
            a = corrupt_image(img, kind, 3, seed=17)
            b = corrupt_image(img, kind, 3, seed=17)
            np.testing.assert_array_equal(a, b)

    def test_different_seed_changes_noise(self):
        img = np.full((1, 8, 8), 0.5)
        a = corrupt_image(img, "gaussian_noise", 3, seed=1)
        b = corrupt_image(img, "gaussian_noise", 3, seed=2)
        assert np.abs(a - b).max() > 0

    def test_output_in_unit_interval(self):
        rng = np.random.default_rng(4)
        img = rng.uniform(size=(3, 8, 8))
        for kind in KINDS:
            out = corrupt_image(img, kind, 5, seed=0)
            assert out.min() >= 0.0 and out.max() <= 1.0

    @pytest.mark.parametrize("kind", KINDS)
    def test_distortion_monotone_in_severity(self, kind):
        rng = np.random.default_rng(5)
        img = rng.uniform(0.15, 0.85, size=(3, 16, 16))
        mads = [np.abs(corrupt_image(img, kind, s, seed=11) - img).mean()
                for s in range(1, 6)]
        assert all(a < b for a, b in zip(mads, mads[1:])), mads

    def test_values_outside_unit_interval_rejected(self):
        with pytest.raises(ValueError, match=r"\[0,1\]"):
            corrupt_image(np.full((1, 2, 2), 1.5), "gaussian_noise", 1)
