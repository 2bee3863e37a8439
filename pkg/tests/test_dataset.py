from __future__ import annotations

import numpy as np
import pytest

from padc.dataset import (
    CorpusConfig,
    allowed_intervals,
    analytic_reference,
    gen_linearization_corpus,
    gen_matching_corpus,
    harmonic_bins,
    harmonic_removal_reference,
    load_corpus,
    matching_reference,
    save_corpus,
    split_dataset,
)
from padc.errors import AmbiguityError, ConfigurationError, FrequencyRangeError
from padc.frontend import (
    FrontEndConfig,
    MismatchProfile,
    WaveformSpec,
    dbm_to_volts,
    fundamental_gain,
    sample_frontend,
    sample_linear,
)
from padc.metrics import sinad

N = 256
FS = float(N)
T = np.arange(N) / FS


def small_settings(**updates) -> CorpusConfig:
    return CorpusConfig(**{"n_pairs": 4, "length": 64, **updates})


def test_harmonic_removal_folds_power_into_fundamental():
    x = np.sin(2 * np.pi * 10 * T) + 0.1 * np.sin(2 * np.pi * 30 * T)
    reference = harmonic_removal_reference(x, 10.0, FS)
    np.testing.assert_allclose(reference, np.sqrt(1.01) * np.sin(2 * np.pi * 10 * T), atol=1e-12)


def test_harmonic_landing_on_fundamental_is_ambiguous():
    with pytest.raises(AmbiguityError):
        harmonic_bins(64.0, FS, N, 5)
    with pytest.raises(FrequencyRangeError):
        harmonic_bins(1.0, FS, N, 5)


def test_matching_reference_removes_the_gain_image():
    gain = 0.8
    x = np.sin(2 * np.pi * 10 * T)
    x[1::2] *= gain
    reference = matching_reference(x, 10.0, FS, 2)
    amplitude = np.hypot((1 + gain) / 2, (1 - gain) / 2)
    np.testing.assert_allclose(reference, amplitude * np.sin(2 * np.pi * 10 * T), atol=1e-12)


def test_analytic_reference_uses_linear_equivalent_gain():
    cfg = FrontEndConfig()
    spec = WaveformSpec(f0=1e9, amplitude=0.5)
    reference = analytic_reference(spec, cfg, 100)
    t = np.arange(100) / cfg.sample_rate
    gain = fundamental_gain(0.5, cfg.mzm)
    np.testing.assert_allclose(reference, gain * 0.5 * np.sin(2 * np.pi * 1e9 * t))


def test_allowed_intervals_exclude_stop_bands_and_honour_f_max():
    assert allowed_intervals(CorpusConfig(), 10e9) == [(0.0, 4e9), (6e9, 10e9)]
    subsampled = CorpusConfig(f_min=400e6, f_max=450e6, stop_bands=[])
    assert allowed_intervals(subsampled, 50e6) == [(400e6, 450e6)]


def test_linearization_corpus_is_deterministic_and_bin_exact():
    cfg = FrontEndConfig()
    first = gen_linearization_corpus(cfg, rng_seed=5, settings=small_settings())
    second = gen_linearization_corpus(cfg, rng_seed=5, settings=small_settings())
    assert len(first.pairs) == 4
    assert first.train == second.train and first.valid == second.valid
    assert len(first.valid) == 1 and not set(first.train) & set(first.valid)
    for a, b in zip(first.pairs, second.pairs):
        np.testing.assert_array_equal(a.original[0], b.original[0])
        np.testing.assert_array_equal(a.reference, b.reference)
        cycles = a.spec.f0 * 64 / cfg.sample_rate
        assert cycles == pytest.approx(round(cycles))
        assert not 4e9 <= a.spec.f0 <= 6e9


def test_matching_corpus_shapes():
    cfg = FrontEndConfig(
        n_channels=2, mismatches=[MismatchProfile(), MismatchProfile(delay=7e-12, gain=0.98)]
    )
    corpus = gen_matching_corpus(cfg, rng_seed=2, settings=small_settings(n_pairs=3))
    assert corpus.kind == "matching"
    assert corpus.n_inputs == 2
    for pair in corpus.pairs:
        assert [len(c) for c in pair.original] == [64, 64]
        assert len(pair.reference) == 128
    with pytest.raises(ConfigurationError):
        gen_matching_corpus(FrontEndConfig(), settings=small_settings())


def test_unusable_band_reports_configuration_error():
    settings = small_settings(f_min=0.0, f_max=1e6, stop_bands=[], max_draws=5)
    with pytest.raises(ConfigurationError):
        gen_linearization_corpus(FrontEndConfig(), settings=settings)


def test_split_rejects_oversized_requests():
    corpus = gen_linearization_corpus(FrontEndConfig(), settings=small_settings())
    with pytest.raises(ConfigurationError):
        split_dataset(corpus, 4, 1, 0)


def test_corpus_persists_to_disk(tmp_path):
    corpus = gen_linearization_corpus(FrontEndConfig(), rng_seed=9, settings=small_settings())
    save_corpus(corpus, tmp_path, csv=True)
    loaded = load_corpus(tmp_path)
    assert loaded.kind == corpus.kind
    assert (loaded.train, loaded.valid) == (corpus.train, corpus.valid)
    assert (tmp_path / "pairs" / "pair_0000_original.csv").exists()
    for a, b in zip(corpus.pairs, loaded.pairs):
        np.testing.assert_array_equal(a.original[0], b.original[0])
        np.testing.assert_array_equal(a.reference, b.reference)
        assert a.spec.f0 == b.spec.f0


def _exact_bin_tones(count: int, n: int, fs: float, max_harmonic: int = 5):
    rng = np.random.default_rng(2024)
    tones = []
    while len(tones) < count:
        f0 = int(rng.integers(8, n // 2 - 8)) * fs / n
        try:
            _, bins = harmonic_bins(f0, fs, n, max_harmonic)
        except AmbiguityError:
            continue
        # harmonics folding onto each other would add coherently
        if any(abs(a - b) <= 4 for i, a in enumerate(bins) for b in bins[i + 1 :]):
            continue
        tones.append((f0, dbm_to_volts(rng.uniform(-2.0, 15.0)), rng.uniform(0, 2 * np.pi)))
    return tones


def test_frequency_oracle_agrees_with_analytic_oracle():
    cfg = FrontEndConfig()
    n = 1000
    for f0, amplitude, phase in _exact_bin_tones(50, n, cfg.sample_rate):
        spec = WaveformSpec(f0=f0, amplitude=amplitude, phase=phase)
        distorted = sample_frontend(spec, cfg, n).channels[0]
        reference = harmonic_removal_reference(distorted, f0, cfg.sample_rate)
        ideal = analytic_reference(spec, cfg, n)
        error = np.sum((reference - ideal) ** 2)
        assert 10 * np.log10(np.sum(ideal**2) / error) >= 60.0, f0
        assert np.sum(reference**2) == pytest.approx(np.sum(distorted**2), rel=1e-9)


def test_matching_reference_conserves_power():
    gain = 0.9
    x = np.sin(2 * np.pi * 10 * T + 0.4)
    x[1::2] = gain * np.sin(2 * np.pi * 10 * (T[1::2] + 0.0007) + 0.4)
    reference = matching_reference(x, 10.0, FS, 2)
    assert np.sum(reference**2) == pytest.approx(np.sum(x**2), rel=1e-9)


def test_matching_reference_removes_every_image_for_four_channels():
    n = 1024
    delays = [0.0, 3e-12, 7e-12, 10e-12]
    gains = [1.0, 1.02, 0.97, 1.01]
    cfg = FrontEndConfig(
        n_channels=4,
        mismatches=[MismatchProfile(delay=d, gain=g) for d, g in zip(delays, gains)],
    )
    f0 = 101 * cfg.sample_rate / n
    x = sample_linear(WaveformSpec(f0=f0, amplitude=0.3), cfg, n).interleaved()
    spectrum = np.abs(np.fft.rfft(x))
    for k in (155, 357, 411):
        assert spectrum[k] > 1e-6 * spectrum[101]
    reference = matching_reference(x, f0, cfg.sample_rate, 4)
    assert sinad(x, cfg.sample_rate) < 40.0
    assert sinad(reference, cfg.sample_rate) >= 80.0
