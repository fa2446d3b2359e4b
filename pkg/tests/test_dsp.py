import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from covalign import dsp
from helpers import rand_trialset


def direct_conv_same(x, taps):
    """Naive O(n*m) linear convolution, centered slice. Oracle for the FFT path."""
    n, m = len(x), len(taps)
    padded = np.concatenate([np.zeros(m - 1), x, np.zeros(m - 1)])
    rev = taps[::-1]
    full = np.array([np.dot(padded[i : i + m], rev) for i in range(n + m - 1)])
    delay = (m - 1) // 2
    return full[delay : delay + n]


def tone_amplitude(y, freq, fs, skip):
    """Projection amplitude of a tone over an integer number of cycles."""
    seg = y[skip : len(y) - skip]
    t = np.arange(skip, len(y) - skip) / fs
    n_cycles = freq * len(seg) / fs
    assert abs(n_cycles - round(n_cycles)) < 1e-9, "test bug: choose an integer cycle window"
    a = 2.0 / len(seg) * np.dot(seg, np.sin(2 * np.pi * freq * t))
    b = 2.0 / len(seg) * np.dot(seg, np.cos(2 * np.pi * freq * t))
    return float(np.hypot(a, b))


class TestDesign:
    def test_taps_exactly_symmetric(self):
        taps = dsp.design_bandpass(dsp.FilterSpec(8.0, 32.0, 250.0, 251))
        np.testing.assert_array_equal(taps, taps[::-1])

    def test_dc_response_near_zero(self):
        taps = dsp.design_bandpass(dsp.FilterSpec(8.0, 32.0, 250.0, 251))
        assert abs(taps.sum()) <= 1e-3

    def test_lowpass_unit_dc_gain(self):
        taps = dsp.design_lowpass(30.0, 250.0, 129)
        assert taps.sum() == pytest.approx(1.0, abs=1e-3)

    def test_bad_band_edges_rejected(self):
        with pytest.raises(ValueError):
            dsp.FilterSpec(32.0, 8.0, 250.0)
        with pytest.raises(ValueError):
            dsp.FilterSpec(8.0, 130.0, 250.0)  # above Nyquist
        with pytest.raises(ValueError):
            dsp.FilterSpec(8.0, 32.0, 250.0, n_taps=250)  # even length


class TestOverlapAdd:
    def test_matches_direct_convolution(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(4096)
        taps = dsp.design_bandpass(dsp.FilterSpec(8.0, 32.0, 250.0, 251))
        got = dsp.bandpass_overlap_add(x, taps, block_size=1024)
        want = direct_conv_same(x, taps)
        scale = np.max(np.abs(want))
        assert np.max(np.abs(got - want)) <= 1e-9 * scale

    @settings(max_examples=20, deadline=None)
    @given(block=st.integers(251, 3000), n=st.integers(1, 2000), seed=st.integers(0, 10**6))
    def test_block_size_never_changes_values(self, block, n, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(n)
        taps = dsp.design_bandpass(dsp.FilterSpec(8.0, 32.0, 250.0, 251))
        a = dsp.bandpass_overlap_add(x, taps, block_size=block)
        b = dsp.bandpass_overlap_add(x, taps, block_size=4096)
        np.testing.assert_allclose(a, b, atol=1e-10 * max(1.0, np.max(np.abs(b))))

    def test_impulse_recovers_centered_taps(self):
        taps = dsp.design_bandpass(dsp.FilterSpec(8.0, 32.0, 250.0, 251))
        x = np.zeros(501)
        x[250] = 1.0
        y = dsp.bandpass_overlap_add(x, taps)
        np.testing.assert_allclose(y[250 - 125 : 250 + 126], taps, atol=1e-12)

    def test_zero_in_zero_out(self):
        taps = dsp.design_bandpass(dsp.FilterSpec(8.0, 32.0, 250.0, 251))
        np.testing.assert_array_equal(dsp.bandpass_overlap_add(np.zeros(1000), taps), np.zeros(1000))

    def test_linearity(self):
        rng = np.random.default_rng(1)
        x, y = rng.standard_normal(1500), rng.standard_normal(1500)
        taps = dsp.design_bandpass(dsp.FilterSpec(8.0, 32.0, 250.0, 123))
        lhs = dsp.bandpass_overlap_add(2.0 * x + 3.0 * y, taps)
        rhs = 2.0 * dsp.bandpass_overlap_add(x, taps) + 3.0 * dsp.bandpass_overlap_add(y, taps)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_block_shorter_than_filter_rejected(self):
        taps = dsp.design_bandpass(dsp.FilterSpec(8.0, 32.0, 250.0, 251))
        with pytest.raises(ValueError):
            dsp.bandpass_overlap_add(np.zeros(100), taps, block_size=100)


class TestFrequencyResponse:
    # 8-32 Hz band at 250 Hz, the preprocessing defaults.
    TAPS = dsp.design_bandpass(dsp.FilterSpec(8.0, 32.0, 250.0, 251))

    def test_passband_center_within_1db(self):
        fs, f = 250.0, 20.0
        t = np.arange(4000) / fs
        y = dsp.bandpass_overlap_add(np.sin(2 * np.pi * f * t), self.TAPS)
        amp = tone_amplitude(y, f, fs, skip=500)
        assert abs(20.0 * np.log10(amp)) <= 1.0

    def test_stopband_2hz_attenuated_20db(self):
        fs, f = 250.0, 2.0
        t = np.arange(4000) / fs
        y = dsp.bandpass_overlap_add(np.sin(2 * np.pi * f * t), self.TAPS)
        amp = tone_amplitude(y, f, fs, skip=500)
        assert amp <= 10.0 ** (-20.0 / 20.0)


class TestResample:
    def test_identity_rate(self):
        x = np.random.default_rng(2).standard_normal(100)
        np.testing.assert_array_equal(dsp.resample(x, 250.0, 250.0), x)

    def test_output_length(self):
        x = np.zeros(1000)
        assert len(dsp.resample(x, 500.0, 250.0)) == 500
        assert len(dsp.resample(x, 250.0, 512.0)) == 2048
        assert len(dsp.resample(np.zeros(333), 512.0, 250.0)) == int(round(333 * 250 / 512))

    def test_halving_preserves_tone(self):
        fs_in, fs_out, f = 500.0, 250.0, 10.0
        t = np.arange(1000) / fs_in
        y = dsp.resample(np.sin(2 * np.pi * f * t), fs_in, fs_out)
        assert len(y) == 500
        amp = tone_amplitude(y, f, fs_out, skip=50)
        assert abs(amp - 1.0) <= 0.01
        # frequency from interpolated zero crossings (first to last)
        seg = y[50:450]
        sign_flips = np.flatnonzero(np.diff(np.signbit(seg)))
        times = sign_flips + seg[sign_flips] / (seg[sign_flips] - seg[sign_flips + 1])
        freq = (len(times) - 1) / 2.0 / ((times[-1] - times[0]) / fs_out)
        assert abs(freq - f) <= 0.01 * f

    def test_upsampling_preserves_tone(self):
        fs_in, fs_out, f = 250.0, 500.0, 10.0
        t = np.arange(1000) / fs_in
        y = dsp.resample(np.sin(2 * np.pi * f * t), fs_in, fs_out)
        assert len(y) == 2000
        amp = tone_amplitude(y, f, fs_out, skip=100)
        assert abs(amp - 1.0) <= 0.01

    def test_hg_rate_to_250(self):
        # 512 -> 250 Hz is the awkward real-world ratio (125/256)
        fs_in, fs_out, f = 512.0, 250.0, 11.71875  # 48 cycles in 2048 samples
        t = np.arange(2048) / fs_in
        y = dsp.resample(np.sin(2 * np.pi * f * t), fs_in, fs_out)
        assert len(y) == 1000
        amp = tone_amplitude(y, f, fs_out, skip=116)  # 36 cycles in the interior
        assert abs(amp - 1.0) <= 0.01

    def test_inexpressible_ratio_rejected(self):
        with pytest.raises(ValueError, match="denominator"):
            dsp.resample(np.zeros(100), 1.0, np.pi / 10.0)

    def test_bad_rates_rejected(self):
        with pytest.raises(ValueError):
            dsp.resample(np.zeros(10), 0.0, 250.0)


class TestPreprocessTrialset:
    def test_shapes_and_fs(self):
        ts = rand_trialset(np.random.default_rng(3), n_trials=4, channels=3, samples=500, fs=500.0)
        spec = dsp.FilterSpec(8.0, 32.0, 500.0, 101)
        out = dsp.preprocess_trialset(ts, spec, resample_to=250.0)
        assert out.fs == 250.0
        assert out.samples == 250
        assert out.channels == 3
        assert out.n_trials == 4
        assert out.labels().tolist() == ts.labels().tolist()

    def test_fs_mismatch_rejected(self):
        ts = rand_trialset(np.random.default_rng(4), fs=250.0, samples=300)
        with pytest.raises(ValueError, match="fs"):
            dsp.preprocess_trialset(ts, dsp.FilterSpec(8.0, 32.0, 500.0, 101))
