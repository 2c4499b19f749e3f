import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression
from sklearn.model_selection import cross_val_score
from sklearn.neighbors import KNeighborsClassifier

from stet.datasets import (
    TWIN_CLASSES,
    generate_synthetic_angle_dataset,
    generate_synthetic_dataset,
    load_dataset,
    save_dataset,
)
from stet.exceptions import ConfigurationError, ParseError
from stet.signal import Recording
from stet.tensor import RngState


def channel_rms(recordings):
    return np.array([np.sqrt((r.samples**2).mean(axis=0)) for r in recordings])


def envelope_features(recording, k=9):
    a = np.abs(recording.samples)
    kernel = np.ones(k) / k
    smoothed = np.stack(
        [np.convolve(a[:, c], kernel, mode="same") for c in range(a.shape[1])], axis=1
    )
    return smoothed.reshape(-1)


class TestGestureGenerator:
    def test_same_seed_bit_identical(self):
        a = generate_synthetic_dataset(3, 8, 32, 5, seed=9)
        b = generate_synthetic_dataset(3, 8, 32, 5, seed=9)
        assert len(a) == len(b) == 15
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.samples, y.samples)
            assert x.label == y.label

    def test_different_seeds_differ(self):
        a = generate_synthetic_dataset(2, 8, 32, 2, seed=1, twin_pair=False)
        b = generate_synthetic_dataset(2, 8, 32, 2, seed=2, twin_pair=False)
        assert not np.array_equal(a[0].samples, b[0].samples)

    def test_disjoint_channel_classes_rms_separable(self):
        recs = generate_synthetic_dataset(2, 8, 64, 60, seed=5, twin_pair=False)
        X = channel_rms(recs)
        y = np.array([r.label for r in recs])
        acc = cross_val_score(LogisticRegression(max_iter=1000), X, y, cv=5).mean()
        assert acc > 0.95

    def test_twin_pair_blinds_rms_but_not_sequences(self):
        recs = generate_synthetic_dataset(8, 8, 64, 60, seed=5)
        twins = [r for r in recs if r.label in TWIN_CLASSES]
        y = np.array([r.label for r in twins])

        rms_acc = cross_val_score(
            LogisticRegression(max_iter=1000), channel_rms(twins), y, cv=5
        ).mean()
        assert rms_acc <= 0.65

        X_env = np.array([envelope_features(r) for r in twins])
        nn_acc = cross_val_score(KNeighborsClassifier(n_neighbors=1), X_env, y, cv=5).mean()
        assert nn_acc > 0.80

    def test_minimum_classes(self):
        with pytest.raises(ConfigurationError):
            generate_synthetic_dataset(1, 8, 32, 5, seed=0)


class TestAngleGenerator:
    def test_shapes_and_determinism(self):
        a = generate_synthetic_angle_dataset(3, 6, 2, 500, seed=11)
        b = generate_synthetic_angle_dataset(3, 6, 2, 500, seed=11)
        assert len(a) == 3
        assert a[0].samples.shape == (500, 6)
        assert a[0].label.shape == (500, 2)
        assert a[0].is_regression
        np.testing.assert_array_equal(a[1].samples, b[1].samples)
        np.testing.assert_array_equal(a[1].label, b[1].label)

    def test_trajectories_are_smooth(self):
        recs = generate_synthetic_angle_dataset(1, 6, 3, 1000, seed=12)
        angles = recs[0].label
        step_sizes = np.abs(np.diff(angles, axis=0))
        assert step_sizes.max() < 2.0  # degrees per sample


class TestCsvFormat:
    def test_round_trip_12_significant_digits(self, tmp_path):
        recs = generate_synthetic_dataset(2, 4, 16, 2, seed=3, twin_pair=False)
        path = save_dataset(recs, tmp_path / "data.csv")
        loaded = load_dataset(path)
        assert len(loaded) == len(recs)
        for a, b in zip(recs, loaded):
            assert a.label == b.label
            assert a.sample_rate_hz == b.sample_rate_hz
            np.testing.assert_allclose(b.samples, a.samples, rtol=1e-11)

    def test_missing_channel_column_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "subject,label,rate,channel_0,channel_1\n"
            "s,0,1000,0.5,0.25\n"
            "s,0,1000,0.5\n"
        )
        with pytest.raises(ParseError, match="line 3"):
            load_dataset(path)

    def test_non_numeric_cell_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "subject,label,rate,channel_0\n"
            "s,0,1000,0.5\n"
            "s,0,1000,oops\n"
        )
        with pytest.raises(ParseError, match="line 3"):
            load_dataset(path)

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c,d\ns,0,1000,0.5\n")
        with pytest.raises(ParseError, match="line 1"):
            load_dataset(path)

    def test_empty_file_warns(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.warns(UserWarning, match="empty"):
            assert load_dataset(path) == []

    def test_trajectory_labels_rejected(self, tmp_path):
        recs = generate_synthetic_angle_dataset(1, 4, 2, 300, seed=1)
        with pytest.raises(ConfigurationError):
            save_dataset(recs, tmp_path / "data.csv")


class TestRawFormat:
    def test_round_trip_bitwise(self, tmp_path):
        recs = generate_synthetic_dataset(2, 4, 16, 2, seed=4, twin_pair=False)
        path = save_dataset(recs, tmp_path / "data.raw")
        loaded = load_dataset(path)
        for a, b in zip(recs, loaded):
            np.testing.assert_array_equal(a.samples, b.samples)
            assert a.label == b.label
            assert a.sample_rate_hz == b.sample_rate_hz
            assert a.subject_id == b.subject_id

    def test_trajectory_round_trip_bitwise(self, tmp_path):
        recs = generate_synthetic_angle_dataset(2, 4, 3, 200, seed=5)
        path = save_dataset(recs, tmp_path / "angles.raw", format="raw-f64")
        loaded = load_dataset(path, format="raw-f64")
        for a, b in zip(recs, loaded):
            np.testing.assert_array_equal(a.samples, b.samples)
            np.testing.assert_array_equal(a.label, b.label)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.raw"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
        with pytest.raises(ParseError, match="magic"):
            load_dataset(path)

    def test_truncated_file(self, tmp_path):
        recs = generate_synthetic_dataset(2, 4, 16, 1, seed=6, twin_pair=False)
        path = save_dataset(recs, tmp_path / "data.raw")
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(ParseError, match="truncated"):
            load_dataset(path)

    def test_empty_file_warns(self, tmp_path):
        path = tmp_path / "empty.raw"
        path.write_bytes(b"")
        with pytest.warns(UserWarning, match="empty"):
            assert load_dataset(path) == []

    def test_mixed_subject_metadata_preserved(self, tmp_path):
        recs = [
            Recording(samples=np.ones((10, 2)), sample_rate_hz=500.0, label=4, subject_id="s07"),
        ]
        loaded = load_dataset(save_dataset(recs, tmp_path / "one.raw"))
        assert loaded[0].subject_id == "s07"
        assert loaded[0].sample_rate_hz == 500.0
