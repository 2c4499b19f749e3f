import numpy as np
import pytest

from stet.exceptions import (
    DegenerateSeriesError,
    DimensionError,
    InsufficientDataError,
    MappingError,
)
from stet.metrics import (
    MetricsReport,
    accuracy,
    avg_curvature,
    drop_rate,
    nrmse,
    pcc,
    rmse,
    std_across_runs,
)
from stet.tensor import RngState

CATEGORIES = {0: "single-finger", 1: "single-finger", 2: "multi-finger", 3: "wrist", 4: "rest"}


class TestAccuracy:
    def test_all_correct(self):
        labels = np.array([0, 1, 2, 3, 4])
        out = accuracy(labels, labels, CATEGORIES)
        assert all(v == 1.0 for v in out.values())

    def test_random_predictions_near_chance(self):
        rng = RngState(1)
        labels = rng.integers(0, 5, size=20000)
        preds = rng.permutation(len(labels))
        out = accuracy(labels[preds], labels)
        assert abs(out["overall"] - 0.2) < 0.02

    def test_empty_category_absent(self):
        out = accuracy([0, 1], [0, 1], CATEGORIES)
        assert "wrist" not in out
        assert out["single-finger"] == 1.0

    def test_unknown_class_raises(self):
        with pytest.raises(MappingError):
            accuracy([0], [9], CATEGORIES)

    def test_overall_is_weighted_category_mean(self):
        rng = RngState(2)
        labels = rng.integers(0, 5, size=500)
        preds = rng.integers(0, 5, size=500)
        out = accuracy(preds, labels, CATEGORIES)
        weighted = 0.0
        for category in set(CATEGORIES.values()):
            member = np.isin(labels, [c for c, g in CATEGORIES.items() if g == category])
            if member.any():
                weighted += out[category] * member.sum()
        assert out["overall"] == pytest.approx(weighted / len(labels))

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            accuracy([0, 1], [0])


class TestStd:
    def test_identical_runs(self):
        assert std_across_runs([0.9, 0.9, 0.9]) == 0.0

    def test_two_point_formula(self):
        assert std_across_runs([0.8, 1.0]) == pytest.approx(0.1414, abs=1e-4)

    def test_shift_invariance(self):
        runs = [0.7, 0.8, 0.95]
        shifted = [v + 0.03 for v in runs]
        assert std_across_runs(runs) == pytest.approx(std_across_runs(shifted))

    def test_single_run_rejected(self):
        with pytest.raises(InsufficientDataError):
            std_across_runs([0.9])


class TestPcc:
    def test_identity(self):
        y = RngState(3).normal(size=(50, 2))
        assert pcc(y, y) == pytest.approx(1.0)

    def test_negation(self):
        y = RngState(4).normal(size=(50, 2))
        assert pcc(y, -y) == pytest.approx(-1.0)

    def test_affine_invariance(self):
        y = RngState(5).normal(size=50)
        assert pcc(y, 2.0 * y + 5.0) == pytest.approx(1.0)

    def test_zero_variance_rejected(self):
        with pytest.raises(DegenerateSeriesError):
            pcc(np.ones(10), np.arange(10.0))


class TestNrmse:
    def test_perfect_prediction(self):
        y = RngState(6).normal(size=(30, 3))
        assert nrmse(y, y) == 0.0

    def test_constant_offset(self):
        y = np.linspace(0.0, 4.0, 50)  # range 4
        assert nrmse(y, y + 1.0) == pytest.approx(0.25)

    def test_scale_invariance(self):
        y = RngState(7).normal(size=40)
        p = RngState(8).normal(size=40)
        assert nrmse(y, p) == pytest.approx(nrmse(5.0 * y, 5.0 * p))

    def test_flat_true_rejected(self):
        with pytest.raises(DegenerateSeriesError):
            nrmse(np.ones(10), np.arange(10.0))


class TestCurvature:
    def test_affine_trajectory_is_flat(self):
        y = 3.0 * np.arange(100.0) + 7.0
        assert avg_curvature(y) == 0.0

    def test_unit_circle_arc(self):
        # top arc of the unit circle as y(x): curvature is exactly 1
        x = np.linspace(-0.6, 0.6, 1000)
        y = np.sqrt(1.0 - x * x)
        kappa = avg_curvature(y, step=x[1] - x[0])
        assert kappa == pytest.approx(1.0, abs=0.05)

    def test_noise_increases_curvature(self):
        base = np.sin(np.linspace(0, 2 * np.pi, 400))
        noisy = base + 0.05 * RngState(9).normal(size=400)
        assert avg_curvature(noisy) > avg_curvature(base)

    def test_offset_invariance(self):
        y = np.sin(np.linspace(0, 3.0, 200))
        assert avg_curvature(y) == pytest.approx(avg_curvature(y + 11.0))

    def test_too_short_rejected(self):
        with pytest.raises(InsufficientDataError):
            avg_curvature(np.array([1.0, 2.0]))


class TestDropRate:
    def test_no_drop(self):
        assert drop_rate(0.9, 0.9) == 0.0

    def test_ten_percent(self):
        assert drop_rate(0.90, 0.81) == pytest.approx(0.10)

    def test_total_collapse(self):
        assert drop_rate(0.8, 0.0) == 1.0

    def test_zero_raw_rejected(self):
        with pytest.raises(ZeroDivisionError):
            drop_rate(0.0, 0.0)


class TestReport:
    def make_report(self):
        return MetricsReport(
            task="classify",
            overall_accuracy=0.93,
            category_accuracy={"single-finger": 0.9, "rest": 1.0},
            accuracy_std=0.01,
            std_axis="seeds",
            noise_table=[
                {"mode": "additive-gaussian", "intensity": 0.1, "accuracy": 0.85, "drop_rate": 0.086},
            ],
            provenance={"seed": 7, "optimizer": "adam-decoupled-wd"},
        )

    def test_json_round_trip(self, tmp_path):
        report = self.make_report().validate()
        path = report.save(tmp_path / "report.json")
        loaded = MetricsReport.load(path)
        assert loaded == report

    def test_noise_csv(self, tmp_path):
        path = self.make_report().save_noise_csv(tmp_path / "noise.csv")
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "mode,intensity,accuracy,drop_rate"
        assert lines[1].startswith("additive-gaussian,0.1,")

    def test_validate_rejects_bad_accuracy(self):
        report = self.make_report()
        report.overall_accuracy = 1.2
        with pytest.raises(DegenerateSeriesError):
            report.validate()

    def test_unknown_schema_version_rejected(self):
        payload = self.make_report().to_dict()
        payload["schema_version"] = 99
        with pytest.raises(ValueError):
            MetricsReport.from_dict(payload)
