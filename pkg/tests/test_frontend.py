from __future__ import annotations

import math

import numpy as np
import pytest

from padc.errors import ConfigurationError, ShapeError
from padc.frontend import (
    FrontEndConfig,
    MismatchProfile,
    MzmConfig,
    WaveformKind,
    WaveformSpec,
    alias_frequency,
    dbm_to_volts,
    deinterleave_samples,
    fundamental_gain,
    interleave_samples,
    mzm_transfer,
    quantize,
    sample_frontend,
    sample_linear,
    volts_to_dbm,
)
from padc.metrics import sinad


def test_dbm_conversion_into_50_ohms():
    assert dbm_to_volts(10.0) == pytest.approx(1.0)
    assert volts_to_dbm(1.0) == pytest.approx(10.0)


def test_waveform_spec_resolves_power_into_amplitude():
    spec = WaveformSpec(f0=1e9, power_dbm=10.0)
    assert spec.amplitude == pytest.approx(1.0)


def test_waveform_spec_rejects_missing_level_and_missing_f1():
    with pytest.raises(ConfigurationError):
        WaveformSpec(f0=1e9)
    with pytest.raises(ConfigurationError):
        WaveformSpec(kind=WaveformKind.DUAL_TONE, f0=1e9, amplitude=0.5)
    with pytest.raises(ConfigurationError):
        WaveformSpec(kind=WaveformKind.LFM, f0=1e9, f1=2e9, amplitude=0.5)


def test_interleave_round_robin_order():
    x = interleave_samples([np.array([0.0, 2.0, 4.0]), np.array([1.0, 3.0, 5.0])])
    np.testing.assert_array_equal(x, np.arange(6.0))
    a, b = deinterleave_samples(x, 2)
    np.testing.assert_array_equal(a, [0.0, 2.0, 4.0])
    np.testing.assert_array_equal(b, [1.0, 3.0, 5.0])


def test_deinterleave_rejects_ragged_length():
    with pytest.raises(ShapeError):
        deinterleave_samples(np.arange(7.0), 2)


def test_mzm_transfer_quadrature_and_peak():
    mzm = MzmConfig()
    assert mzm_transfer(0.0, mzm) == pytest.approx(0.5)
    assert mzm_transfer(mzm.v_pi / 2, mzm) == pytest.approx(1.0)


def test_fundamental_gain_tends_to_small_signal_slope():
    mzm = MzmConfig()
    slope = math.pi / (2 * mzm.v_pi)
    assert fundamental_gain(1e-6, mzm) == pytest.approx(slope, rel=1e-6)
    assert fundamental_gain(1.5, mzm) < slope


def test_quantize_mid_tread_and_clipping():
    out = quantize(np.array([-2.0, 0.2, 0.3, 2.0]), bits=2, full_scale=1.0)
    np.testing.assert_allclose(out, [-1.0, 0.0, 0.5, 1.0])


def test_alias_frequency_folds_into_first_zone():
    assert alias_frequency(21.13e9, 20e9) == pytest.approx(1.13e9)
    assert alias_frequency(12e9, 20e9) == pytest.approx(8e9)
    assert alias_frequency(3e9, 20e9) == pytest.approx(3e9)


def test_frontend_config_defaults_mismatches_per_channel():
    cfg = FrontEndConfig(n_channels=3)
    assert len(cfg.mismatches) == 3
    with pytest.raises(ConfigurationError):
        FrontEndConfig(n_channels=2, mismatches=[MismatchProfile()])


def test_noise_free_single_channel_matches_transfer():
    cfg = FrontEndConfig(sample_rate=1e9, n_channels=1)
    spec = WaveformSpec(f0=37e6, amplitude=0.4)
    cs = sample_frontend(spec, cfg, 256)
    t = np.arange(256) / 1e9
    expected = mzm_transfer(0.4 * np.sin(2 * np.pi * 37e6 * t), cfg.mzm) - 0.5
    np.testing.assert_allclose(cs.channels[0], expected, atol=1e-12)


def test_sampling_is_deterministic_in_seed():
    cfg = FrontEndConfig(n_channels=2, noise_sigma=1e-3, jitter_sigma=1e-14, quant_bits=8, rng_seed=4)
    spec = WaveformSpec(f0=1.1e9, amplitude=0.3)
    first = sample_frontend(spec, cfg, 400)
    second = sample_frontend(spec, cfg, 400)
    other = sample_frontend(spec, FrontEndConfig(**{**cfg.model_dump(), "rng_seed": 5}), 400)
    np.testing.assert_array_equal(first.interleaved(), second.interleaved())
    assert not np.array_equal(first.interleaved(), other.interleaved())


def test_sample_count_must_divide_channels():
    with pytest.raises(ShapeError):
        sample_frontend(WaveformSpec(f0=1e9, amplitude=0.3), FrontEndConfig(n_channels=2), 101)


def test_gain_mismatch_scales_only_its_channel():
    spec = WaveformSpec(f0=1.3e9, amplitude=0.3)
    ideal = sample_linear(spec, FrontEndConfig(n_channels=2), 200)
    skewed = sample_linear(
        spec,
        FrontEndConfig(n_channels=2, mismatches=[MismatchProfile(), MismatchProfile(gain=0.5)]),
        200,
    )
    np.testing.assert_allclose(skewed.channels[0], ideal.channels[0])
    np.testing.assert_allclose(skewed.channels[1], 0.5 * ideal.channels[1])
    assert skewed.channel_rate == pytest.approx(10e9)


@pytest.mark.parametrize("bits", [6, 8, 10])
def test_quantizer_sinad_matches_the_ideal_converter(bits):
    n = 2**16
    rng = np.random.default_rng(bits)
    k = np.arange(n)
    values = []
    for _ in range(3):
        x = 0.5 * np.sin(2 * np.pi * 4099 * k / n + rng.uniform(0, 2 * np.pi))
        values.append(sinad(quantize(x, bits=bits, full_scale=0.5), 1.0))
    assert np.mean(values) == pytest.approx(6.02 * bits + 1.76, abs=0.5)


def test_full_scale_sine_is_not_clipped():
    x = 0.5 * np.sin(2 * np.pi * 5 * np.arange(64) / 64 + np.pi / 2)
    assert quantize(x, bits=8, full_scale=0.5).max() == pytest.approx(0.5)


def test_matched_channels_interleave_to_single_channel_sampling():
    spec = WaveformSpec(f0=1.37e9, amplitude=0.6)
    single = sample_frontend(spec, FrontEndConfig(n_channels=1), 400)
    split = sample_frontend(spec, FrontEndConfig(n_channels=4), 400)
    assert split.length == 100
    np.testing.assert_array_equal(split.interleaved(), single.channels[0])


def test_delay_mismatch_shifts_its_channel_in_time():
    delay = 7e-12
    cfg = FrontEndConfig(n_channels=2, mismatches=[MismatchProfile(), MismatchProfile(delay=delay)])
    spec = WaveformSpec(f0=1.3e9, amplitude=0.05)
    cs = sample_linear(spec, cfg, 200)
    gain = fundamental_gain(0.05, cfg.mzm)
    t = (2 * np.arange(100) + 1) / cfg.sample_rate
    expected = gain * 0.05 * np.sin(2 * np.pi * 1.3e9 * (t + delay))
    np.testing.assert_allclose(cs.channels[1], expected, atol=1e-12)


@pytest.mark.parametrize("fraction, low, high", [(0.05, 50.0, None), (0.4, None, 35.0)])
def test_modulator_is_linear_only_for_small_signals(fraction, low, high):
    cfg = FrontEndConfig(sample_rate=1e9, n_channels=1)
    n = 4096
    spec = WaveformSpec(f0=331 * 1e9 / n, amplitude=fraction * cfg.mzm.v_pi)
    value = sinad(sample_frontend(spec, cfg, n).channels[0], cfg.sample_rate)
    if low is not None:
        assert value > low
    if high is not None:
        assert value < high


def test_transfer_and_alias_stay_in_range():
    mzm = MzmConfig(extinction=0.8, bias_error=0.3)
    v = np.linspace(-20.0, 20.0, 2001)
    out = mzm_transfer(v, mzm)
    assert out.min() >= 0.0 and out.max() <= 0.8 + 1e-15
    for f in np.linspace(0.0, 95e9, 400):
        assert 0.0 <= alias_frequency(f, 20e9) <= 10e9
    assert alias_frequency(23.332e9, 100e6) == pytest.approx(32e6)
