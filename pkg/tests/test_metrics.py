from __future__ import annotations

import numpy as np
import pytest

from padc.errors import AmbiguityError, ShapeError
from padc.metrics import (
    analyze,
    enob,
    multitone_sfdr,
    power_spectrum,
    sfdr,
    sinad,
    spur_level_dbc,
    stft,
    stft_distortion_ratio,
    stft_image_level,
)

N = 1024
FS = float(N)  # one bin per hertz
T = np.arange(N) / FS


def tone(bin_hz: float, amplitude: float = 1.0) -> np.ndarray:
    return amplitude * np.sin(2 * np.pi * bin_hz * T)


def test_enob_from_sinad():
    assert enob(1.76) == pytest.approx(0.0)
    assert enob(6.02 * 8 + 1.76) == pytest.approx(8.0)


def test_power_spectrum_conserves_mean_square():
    x = tone(37) + 0.3 * tone(90)
    assert power_spectrum(x, FS).power.sum() == pytest.approx(np.mean(x**2))


def test_clean_tone_has_very_high_sinad():
    assert sinad(tone(37), FS) > 100.0


def test_sinad_of_tone_in_white_noise():
    n = 4096
    t = np.arange(n) / n
    x = np.sin(2 * np.pi * 301 * t) + 0.01 * np.random.default_rng(0).normal(size=n)
    assert sinad(x, float(n)) == pytest.approx(10 * np.log10(0.5 / 1e-4), abs=0.5)


def test_sfdr_against_a_single_harmonic():
    x = tone(100) + 1e-3 * tone(300)
    assert sfdr(x, FS) == pytest.approx(60.0, abs=1e-6)


def test_equal_tones_are_ambiguous():
    with pytest.raises(AmbiguityError):
        sinad(tone(100) + tone(200), FS)


def test_short_record_is_rejected():
    with pytest.raises(ShapeError):
        sinad(np.ones(10), FS)


def test_spur_level_relative_to_carrier():
    x = tone(100) + 0.01 * tone(200)
    assert spur_level_dbc(x, FS, 200.0) == pytest.approx(-40.0, abs=1e-6)


def test_multitone_sfdr_uses_mean_tone_power():
    x = tone(100, 0.5) + tone(150, 0.5) + tone(400, 0.005)
    assert multitone_sfdr(x, FS, [100.0, 150.0]) == pytest.approx(40.0, abs=1e-6)


def test_stft_grid_geometry():
    grid = stft(tone(37), FS, 128, 64)
    assert grid.power.shape == (65, 15)
    assert grid.freqs[1] == pytest.approx(FS / 128)
    assert grid.to_frame().shape == (65 * 15, 4)


def test_stft_distortion_ratio_of_third_harmonic():
    x = tone(128) + 0.01 * tone(384)
    grid = stft(x, FS, 128, 64)
    assert stft_distortion_ratio(grid) == pytest.approx(40.0, abs=1e-3)


def test_stft_image_level_of_two_channel_image():
    # a two-channel interleaving image of f sits at fs/2 - f
    x = tone(128) + 0.01 * tone(FS / 2 - 128)
    grid = stft(x, FS, 128, 64)
    assert stft_image_level(grid, 2) == pytest.approx(-40.0, abs=1e-3)


def test_analyze_reports_fundamental_and_optional_stft():
    report = analyze(tone(37) + 1e-3 * tone(111), FS, stft_window=128, stft_hop=32)
    assert report.fundamental_hz == pytest.approx(37.0)
    assert report.sfdr_db == pytest.approx(60.0, abs=1e-6)
    assert report.enob_bits == pytest.approx(enob(report.sinad_db))
    assert report.stft is not None
    assert set(report.summary()) == {"sinad_db", "enob_bits", "sfdr_db", "fundamental_hz"}


@pytest.mark.parametrize("scale", [1e-3, 0.37, 7.5])
def test_figures_of_merit_ignore_overall_amplitude(scale):
    rng = np.random.default_rng(4)
    x = tone(100) + 1e-3 * tone(300) + 2e-4 * tone(417) + 1e-3 * rng.normal(size=N)
    assert sinad(scale * x, FS) == pytest.approx(sinad(x, FS), abs=1e-9)
    assert sfdr(scale * x, FS) == pytest.approx(sfdr(x, FS), abs=1e-9)


def test_analyze_sinad_matches_the_standalone_measure():
    rng = np.random.default_rng(9)
    x = tone(37) + 1e-3 * tone(111) + 1e-4 * rng.normal(size=N)
    report = analyze(x, FS)
    assert report.sinad_db == sinad(x, FS)
    assert report.sfdr_db == sfdr(x, FS)
