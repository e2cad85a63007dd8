"""Signal types, convolution, NMSE and resampling."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ancbench.errors import ConfigurationError, UndefinedReferenceError
from ancbench.signal import (
    DEFAULT_METRIC,
    ImpulseResponse,
    MetricOptions,
    Signal,
    conv_full,
    conv_truncated,
    convolve,
    corr_truncated,
    nmse,
    nmse_arrays,
    nmse_over_time,
    resample,
)


def direct_full(x, h):
    """O(n*m) reference convolution."""
    out = np.zeros(len(x) + len(h) - 1)
    for i, xi in enumerate(x):
        for j, hj in enumerate(h):
            out[i + j] += xi * hj
    return out


finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


class TestValueTypes:
    def test_signal_rejects_nan(self):
        with pytest.raises(ConfigurationError):
            Signal([0.0, math.nan], 16000)

    def test_signal_rejects_empty(self):
        with pytest.raises(ConfigurationError):
            Signal([], 16000)

    @pytest.mark.parametrize("rate", [0, -16000, 16000.5])
    def test_signal_rejects_bad_rate(self, rate):
        with pytest.raises(ConfigurationError):
            Signal([1.0], rate)

    def test_signal_is_immutable(self):
        x = Signal(np.ones(4), 16000)
        with pytest.raises(ValueError):
            x.samples[0] = 2.0

    def test_signal_copies_input(self):
        raw = np.ones(4)
        x = Signal(raw, 16000)
        raw[0] = 5.0
        assert x.samples[0] == 1.0

    def test_duration_and_energy(self):
        x = Signal(np.full(8000, 0.5), 16000)
        assert x.duration_s == 0.5
        assert x.energy() == pytest.approx(2000.0)

    def test_unit_impulse(self):
        h = ImpulseResponse.unit(16000, delay=3)
        np.testing.assert_array_equal(h.taps, [0, 0, 0, 1])

    def test_metric_options_validate(self):
        with pytest.raises(ConfigurationError):
            MetricOptions(db_floor=10.0)
        with pytest.raises(ConfigurationError):
            MetricOptions(epsilon=0.0)


class TestConvolution:
    def test_delta_is_identity(self, rng):
        x = rng.standard_normal(100)
        np.testing.assert_array_equal(conv_truncated(x, np.array([1.0])), x)

    def test_delay_shifts(self, rng):
        x = rng.standard_normal(50)
        out = conv_truncated(x, np.array([0.0, 0.0, 1.0]))
        np.testing.assert_array_equal(out[2:], x[:-2])
        np.testing.assert_array_equal(out[:2], 0.0)

    def test_random_cases_match_direct_sum(self, rng):
        for _ in range(100):
            n, m = rng.integers(1, 257, size=2)
            x, h = rng.standard_normal(n), rng.standard_normal(m)
            ref = direct_full(x, h)
            np.testing.assert_allclose(conv_full(x, h), ref, rtol=0, atol=1e-12 * max(1, np.abs(ref).max()))
            np.testing.assert_allclose(conv_truncated(x, h), ref[:n], rtol=0, atol=1e-12 * max(1, np.abs(ref).max()))

    def test_fft_path_matches_direct_path(self, rng):
        x, h = rng.standard_normal(4000), rng.standard_normal(512)
        np.testing.assert_allclose(conv_full(x, h), np.convolve(x, h), atol=1e-10)

    def test_rate_mismatch(self):
        with pytest.raises(ConfigurationError):
            convolve(Signal([1.0, 2.0], 16000), ImpulseResponse([1.0], 8000))

    def test_convolve_modes(self, rng):
        x = Signal(rng.standard_normal(20), 16000)
        h = ImpulseResponse(rng.standard_normal(5), 16000)
        assert len(convolve(x, h, "full")) == 24
        assert len(convolve(x, h)) == 20
        with pytest.raises(ConfigurationError):
            convolve(x, h, "same")

    @given(st.lists(finite, min_size=1, max_size=40), st.lists(finite, min_size=1, max_size=12),
           st.lists(finite, min_size=1, max_size=40))
    def test_correlation_is_adjoint(self, xs, hs, rs):
        n = min(len(xs), len(rs))
        x, r, h = np.array(xs[:n]), np.array(rs[:n]), np.array(hs)
        lhs = np.dot(conv_truncated(x, h), r)
        rhs = np.dot(x, corr_truncated(r, h))
        assert lhs == pytest.approx(rhs, abs=1e-9 * (1 + np.abs(x).sum() * np.abs(h).sum() * np.abs(r).sum()))

    @given(st.lists(finite, min_size=1, max_size=30), st.lists(finite, min_size=1, max_size=30))
    def test_commutative(self, a, b):
        np.testing.assert_allclose(conv_full(np.array(a), np.array(b)), conv_full(np.array(b), np.array(a)),
                                   atol=1e-9)


class TestNmse:
    def test_identical_signals_hit_floor(self, rng):
        u = rng.standard_normal(100)
        assert nmse_arrays(u, u) == DEFAULT_METRIC.db_floor

    def test_silent_estimate_is_zero_db(self, rng):
        u = rng.standard_normal(100)
        assert nmse_arrays(u, np.zeros(100)) == 0.0

    def test_sign_flip_is_six_db(self, rng):
        u = rng.standard_normal(100)
        assert nmse_arrays(u, -u) == pytest.approx(10 * math.log10(4.0))

    def test_zero_reference_is_undefined(self):
        with pytest.raises(UndefinedReferenceError):
            nmse_arrays(np.zeros(10), np.ones(10))

    def test_length_mismatch(self):
        with pytest.raises(ConfigurationError):
            nmse_arrays(np.ones(3), np.ones(4))

    def test_signal_rate_mismatch(self):
        with pytest.raises(ConfigurationError):
            nmse(Signal([1.0], 16000), Signal([1.0], 8000))

    def test_custom_floor(self, rng):
        u = rng.standard_normal(10)
        assert nmse_arrays(u, u + 1e-9, MetricOptions(db_floor=-60.0)) == -60.0

    @given(st.lists(finite, min_size=2, max_size=50).filter(lambda v: np.dot(v, v) > 1e-6),
           st.floats(0.01, 100.0))
    def test_scale_invariant(self, vals, scale):
        u = np.array(vals)
        v = np.roll(u, 1) * 0.5
        assert nmse_arrays(scale * u, scale * v) == pytest.approx(nmse_arrays(u, v), abs=1e-9)

    @given(st.integers(1, 50).flatmap(lambda n: st.tuples(st.lists(finite, min_size=n, max_size=n),
                                                           st.lists(finite, min_size=n, max_size=n))))
    def test_bounded_below(self, pair):
        u, v = map(np.array, pair)
        if np.dot(u, u) == 0:
            with pytest.raises(UndefinedReferenceError):
                nmse_arrays(u, v)
        else:
            assert nmse_arrays(u, v) >= DEFAULT_METRIC.db_floor


class TestNmseOverTime:
    def test_window_centres(self, rng):
        u = Signal(rng.standard_normal(16000 * 3), 16000)
        out = nmse_over_time(u, u.with_samples(0.5 * u.samples), window_s=1.0, hop_s=0.5)
        assert [w.time_s for w in out] == [0.5, 1.0, 1.5, 2.0, 2.5]
        for w in out:
            assert w.nmse_db == pytest.approx(10 * math.log10(0.25))

    def test_window_longer_than_signal(self, rng):
        u = Signal(rng.standard_normal(1000), 16000)
        out = nmse_over_time(u, u.with_samples(np.zeros(1000)), window_s=1.0)
        assert len(out) == 1 and out[0].nmse_db == 0.0

    def test_low_energy_window_flagged(self, rng):
        x = np.concatenate([np.zeros(16000), rng.standard_normal(16000)])
        u = Signal(x, 16000)
        out = nmse_over_time(u, u.with_samples(np.zeros_like(x)), window_s=0.5, hop_s=0.5)
        assert out[0].low_energy and out[0].nmse_db == DEFAULT_METRIC.db_floor
        assert not out[-1].low_energy and out[-1].nmse_db == 0.0

    def test_bad_hop(self, rng):
        u = Signal(rng.standard_normal(100), 16000)
        with pytest.raises(ConfigurationError):
            nmse_over_time(u, u, hop_s=0.0)


class TestResample:
    def test_identity_when_rates_match(self, rng):
        x = Signal(rng.standard_normal(100), 16000)
        assert resample(x, 16000) is x

    @pytest.mark.parametrize("src", [8000, 22050, 44100, 48000])
    def test_length(self, src, rng):
        x = Signal(rng.standard_normal(src), src)
        assert len(resample(x, 16000)) == 16000

    @pytest.mark.parametrize("src", [22050, 44100, 48000])
    def test_in_band_tone_preserved(self, src):
        t = np.arange(src) / src
        y = resample(Signal(np.sin(2 * np.pi * 1000 * t), src), 16000)
        ref = np.sin(2 * np.pi * 1000 * np.arange(16000) / 16000)
        core = slice(500, -500)
        assert nmse_arrays(ref[core], y.samples[core]) < -40.0

    def test_out_of_band_tone_rejected(self):
        src = 48000
        t = np.arange(src) / src
        y = resample(Signal(np.sin(2 * np.pi * 10000 * t), src), 16000)
        assert np.sqrt(np.mean(y.samples[500:-500] ** 2)) < 1e-3
