import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.exceptions import NotFittedError

from stet.exceptions import ConfigurationError, DegenerateChannelError, RangeError
from stet.signal import (
    MinMaxChannelScaler,
    MuLawCompander,
    NoiseSpec,
    Recording,
    SignalSequence,
    fit_normalizers,
    inject_noise,
    normalize_recordings,
    segment_windows,
    window_count,
)
from stet.tensor import RngState


def make_recording(samples, rate=1000.0, label=0):
    return Recording(samples=np.asarray(samples, dtype=float), sample_rate_hz=rate, label=label)


class TestMinMax:
    def test_affine_endpoints(self):
        scaler = MinMaxChannelScaler().fit(np.array([[0.0], [5.0], [10.0]]))
        out = scaler.transform(np.array([[0.0], [5.0], [10.0]]))
        np.testing.assert_allclose(out, [[-1.0], [0.0], [1.0]])

    def test_already_normalized_unchanged(self):
        x = np.array([[-1.0], [0.25], [1.0]])
        out = MinMaxChannelScaler().fit(x).transform(x)
        np.testing.assert_allclose(out, x)

    def test_constant_channel_names_channel(self):
        x = np.column_stack([np.arange(3.0), np.full(3, 2.0)])
        with pytest.raises(DegenerateChannelError, match=r"\[1\]"):
            MinMaxChannelScaler().fit(x)

    def test_fit_transform_idempotent(self):
        x = RngState(1).normal(size=(50, 4)) * 7.0 + 3.0
        once = MinMaxChannelScaler().fit_transform(x)
        twice = MinMaxChannelScaler().fit_transform(once)
        np.testing.assert_allclose(twice, once)

    def test_train_statistics_reused_on_test(self):
        train = RngState(2).normal(size=(100, 2)) * 3.0
        test = RngState(3).normal(size=(40, 2)) * 10.0  # wider than train
        out = MinMaxChannelScaler(clip=False).fit(train).transform(test)
        assert np.abs(out).max() > 1.0  # not rescaled to test extrema

    def test_default_clips_out_of_range_test_data(self):
        train = RngState(2).normal(size=(100, 2)) * 3.0
        test = RngState(3).normal(size=(40, 2)) * 10.0
        out = MinMaxChannelScaler().fit(train).transform(test)
        assert np.abs(out).max() <= 1.0
        assert (np.abs(out) == 1.0).any()  # saturation proves train stats persisted

    def test_recording_lists_round_trip(self):
        recs = [make_recording(RngState(i).normal(size=(30, 3))) for i in range(3)]
        scaler = MinMaxChannelScaler().fit(recs)
        out = scaler.transform(recs)
        assert isinstance(out[0], Recording)
        stacked = np.concatenate([r.samples for r in out])
        assert stacked.min() == pytest.approx(-1.0)
        assert stacked.max() == pytest.approx(1.0)
        back = scaler.inverse_transform(out)
        np.testing.assert_allclose(back[1].samples, recs[1].samples, atol=1e-12)

    def test_requires_fit(self):
        with pytest.raises(NotFittedError):
            MinMaxChannelScaler().transform(np.zeros((2, 2)))


class TestMuLaw:
    def test_zero_fixed_point(self):
        out = MuLawCompander().fit(None).transform(np.array([[0.0]]))
        assert out[0, 0] == 0.0

    def test_endpoints_preserved(self):
        out = MuLawCompander().fit(None).transform(np.array([[-1.0], [1.0]]))
        np.testing.assert_allclose(out, [[-1.0], [1.0]])

    def test_small_magnitude_amplified_value(self):
        # mu=255, x=0.01: ln(1 + 2.55) / ln(256) = 0.22847...
        out = MuLawCompander(mu=255).fit(None).transform(np.array([[0.01]]))
        assert out[0, 0] == pytest.approx(np.log(3.55) / np.log(256.0), abs=1e-12)
        assert out[0, 0] == pytest.approx(0.228, abs=5e-4)

    def test_out_of_range_rejected(self):
        with pytest.raises(RangeError):
            MuLawCompander().fit(None).transform(np.array([[1.5]]))

    def test_nonpositive_mu_rejected(self):
        with pytest.raises(ConfigurationError):
            MuLawCompander(mu=0.0).fit(None)

    @given(
        st.floats(-1.0, 1.0),
        st.floats(-1.0, 1.0),
        st.floats(1.0, 1000.0),
    )
    @settings(max_examples=100, deadline=None)
    def test_monotone_and_odd(self, x1, x2, mu):
        compander = MuLawCompander(mu=mu).fit(None)
        f = lambda v: compander.transform(np.array([[v]]))[0, 0]
        if x1 + 1e-9 < x2:  # strict ordering holds beyond float rounding
            assert f(x1) < f(x2)
        assert f(-x1) == pytest.approx(-f(x1), abs=1e-12)

    def test_inverse_round_trip(self):
        compander = MuLawCompander(mu=255).fit(None)
        x = RngState(4).uniform(-1, 1, size=(20, 2))
        back = compander.inverse_transform(compander.transform(x))
        np.testing.assert_allclose(back, x, atol=1e-12)


class TestNormalizerChain:
    def test_chain_fits_in_order(self):
        recs = [make_recording(RngState(5).normal(size=(100, 2)) * 4.0)]
        fitted = fit_normalizers(["minmax", "mulaw"], recs)
        out = normalize_recordings(fitted, recs)
        assert np.abs(out[0].samples).max() <= 1.0

    def test_unknown_normalizer(self):
        with pytest.raises(ConfigurationError):
            fit_normalizers(["zscore"], [])


class TestSegmentation:
    def test_paper_style_window_layout(self):
        # 1000 ms at 1000 Hz, 200 ms windows, 10 ms overlap: starts 0,190,...,760
        rec = make_recording(np.arange(1000.0)[:, None])
        windows = segment_windows(rec, 200.0, 10.0)
        assert len(windows) == 5
        assert [w.start_sample for w in windows] == [0, 190, 380, 570, 760]
        assert all(w.steps == 200 for w in windows)

    def test_zero_overlap_tiles(self):
        rec = make_recording(np.arange(600.0)[:, None])
        windows = segment_windows(rec, 200.0, 0.0)
        assert [w.start_sample for w in windows] == [0, 200, 400]

    def test_short_recording_warns_and_returns_empty(self):
        rec = make_recording(np.zeros((150, 2)))
        with pytest.warns(UserWarning, match="shorter"):
            assert segment_windows(rec, 200.0, 10.0) == []

    def test_invalid_overlap(self):
        rec = make_recording(np.zeros((400, 1)))
        with pytest.raises(ConfigurationError):
            segment_windows(rec, 100.0, 100.0)

    @given(st.integers(50, 2000), st.integers(20, 100), st.integers(0, 19))
    @settings(max_examples=60, deadline=None)
    def test_window_count_formula(self, n, window_samples, overlap_samples):
        rec = make_recording(np.zeros((n, 1)))
        expected = window_count(n, window_samples, overlap_samples)
        import warnings as _warnings

        with _warnings.catch_warnings():
            _warnings.simplefilter("ignore")
            windows = segment_windows(
                rec, float(window_samples), float(overlap_samples)
            )
        assert len(windows) == expected

    def test_regression_labels_sliced(self):
        trajectory = np.linspace(0, 1, 500)[:, None] * np.array([[1.0, 2.0]])
        rec = Recording(
            samples=np.zeros((500, 3)), sample_rate_hz=1000.0, label=trajectory
        )
        windows = segment_windows(rec, 100.0, 0.0)
        assert len(windows) == 5
        np.testing.assert_array_equal(windows[2].label, trajectory[200:300])


class TestNoise:
    def test_zero_intensity_identity(self):
        x = RngState(6).normal(size=(50, 4))
        for mode in NoiseSpec.MODES:
            out = inject_noise(x, NoiseSpec(mode=mode, intensity=0.0, seed=1))
            np.testing.assert_array_equal(out, x)

    def test_total_signal_loss(self):
        x = RngState(7).normal(size=(50, 4))
        out = inject_noise(x, NoiseSpec(mode="signal-loss", intensity=1.0, seed=1))
        assert (out == 0).all()

    def test_additive_statistics(self):
        x = np.zeros((25000, 4))  # 1e5 entries
        out = inject_noise(x, NoiseSpec(mode="additive-gaussian", intensity=0.1, seed=2))
        n = out.size
        assert abs(out.mean()) < 3 * 0.1 / np.sqrt(n)
        assert abs(out.std() - 0.1) < 0.002

    def test_multiplicative_scales_with_signal(self):
        x = np.full((1000, 1), 2.0)
        out = inject_noise(x, NoiseSpec(mode="multiplicative-gaussian", intensity=0.1, seed=3))
        assert abs(out.mean() - 2.0) < 0.05
        assert abs(out.std() - 0.2) < 0.02

    def test_seed_determinism(self):
        x = RngState(8).normal(size=(30, 2))
        spec = NoiseSpec(mode="signal-loss", intensity=0.3, seed=42)
        np.testing.assert_array_equal(inject_noise(x, spec), inject_noise(x, spec))

    def test_signal_sequence_container_preserved(self):
        window = SignalSequence(values=np.ones((10, 2)), label=3)
        out = inject_noise(window, NoiseSpec(mode="signal-loss", intensity=0.5, seed=4))
        assert isinstance(out, SignalSequence)
        assert out.label == 3

    def test_spec_validation(self):
        with pytest.raises(ConfigurationError):
            NoiseSpec(mode="spooky", intensity=0.1)
        with pytest.raises(ConfigurationError):
            NoiseSpec(mode="signal-loss", intensity=1.5)
        with pytest.raises(ConfigurationError):
            NoiseSpec(mode="additive-gaussian", intensity=-0.1)
