"""Single-tone converter metrics: SINAD, ENOB, SFDR, spectra and STFT.

SINAD uses a Hann window by default and SFDR a Blackman window; both windows
are the periodic (DFT-even) variants so exact-bin tones leak into a fixed
number of neighbouring bins. Power is always measured over a cluster of
``cluster`` bins either side of a peak, and the DC bins ``0..cluster`` are
excluded from every sum.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import windows

from .errors import AmbiguityError, ConfigurationError, ShapeError
from .frontend import alias_frequency

MIN_LENGTH = 64
DEFAULT_CLUSTER = 3
DOMINANCE_DB = 3.0
_POWER_FLOOR = 1e-30


def enob(sinad_db: float) -> float:
    return (sinad_db - 1.76) / 6.02


def _window(name: str, n: int) -> np.ndarray:
    if name in ("rectangular", "boxcar", "none"):
        return np.ones(n)
    if name == "hann":
        return windows.hann(n, sym=False)
    if name == "blackman":
        return windows.blackman(n, sym=False)
    raise ConfigurationError(f"unknown window {name!r}")


@dataclass
class Spectrum:
    """One-sided power spectrum; ``power`` sums to the mean-square of the windowed record."""

    freqs: np.ndarray
    power: np.ndarray

    @property
    def power_db(self) -> np.ndarray:
        return 10.0 * np.log10(self.power + _POWER_FLOOR)

    def bin_of(self, frequency: float) -> int:
        step = self.freqs[1] - self.freqs[0]
        return int(round(frequency / step))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"frequency_hz": self.freqs, "power_db": self.power_db})


def power_spectrum(x, sample_rate: float, window: str = "rectangular") -> Spectrum:
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    w = _window(window, n)
    power = np.abs(np.fft.rfft(x * w)) ** 2 / (n * np.sum(w**2))
    power[1:] *= 2.0
    if n % 2 == 0:
        power[-1] /= 2.0
    return Spectrum(freqs=np.fft.rfftfreq(n, d=1.0 / sample_rate), power=power)


def _cluster_slice(k: int, cluster: int, n_bins: int) -> slice:
    return slice(max(k - cluster, 0), min(k + cluster, n_bins - 1) + 1)


@dataclass
class _ToneSplit:
    fundamental_bin: int
    signal_power: float
    residual: np.ndarray  # power with DC and the fundamental cluster zeroed
    next_cluster_power: float


def _split_tone(spectrum: Spectrum, cluster: int) -> _ToneSplit:
    power = spectrum.power.copy()
    n_bins = power.shape[0]
    power[: cluster + 1] = 0.0
    if not np.any(power > 0):
        raise AmbiguityError("spectrum holds no tone outside DC")
    k = int(np.argmax(power))
    fund = _cluster_slice(k, cluster, n_bins)
    signal = float(power[fund].sum())
    residual = power.copy()
    residual[fund] = 0.0
    next_power = 0.0
    if np.any(residual > 0):
        j = int(np.argmax(residual))
        next_power = float(residual[_cluster_slice(j, cluster, n_bins)].sum())
    if next_power > 0 and 10 * np.log10(signal / next_power) < DOMINANCE_DB:
        raise AmbiguityError(
            f"no dominant tone: fundamental only {10 * np.log10(signal / next_power):.2f} dB "
            "above the next cluster"
        )
    return _ToneSplit(k, signal, residual, next_power)


def _check_length(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] < MIN_LENGTH:
        raise ShapeError(f"metrics need a 1-D record of at least {MIN_LENGTH} samples")
    return x


def _sinad_db(split: _ToneSplit) -> float:
    noise = max(float(split.residual.sum()), split.signal_power * _POWER_FLOOR)
    return 10.0 * np.log10(split.signal_power / noise)


def sinad(x, sample_rate: float, window: str = "hann", cluster: int = DEFAULT_CLUSTER) -> float:
    x = _check_length(x)
    return _sinad_db(_split_tone(power_spectrum(x, sample_rate, window), cluster))


def sfdr(x, sample_rate: float, window: str = "blackman", cluster: int = DEFAULT_CLUSTER) -> float:
    x = _check_length(x)
    split = _split_tone(power_spectrum(x, sample_rate, window), cluster)
    spur = max(split.next_cluster_power, split.signal_power * _POWER_FLOOR)
    return 10.0 * np.log10(split.signal_power / spur)


def spur_level_dbc(
    x, sample_rate: float, spur_hz: float, window: str = "blackman", cluster: int = DEFAULT_CLUSTER
) -> float:
    """Power at the first-zone image of ``spur_hz`` relative to the fundamental, in dBc."""
    x = _check_length(x)
    spectrum = power_spectrum(x, sample_rate, window)
    split = _split_tone(spectrum, cluster)
    k = spectrum.bin_of(alias_frequency(spur_hz, sample_rate))
    spur = float(spectrum.power[_cluster_slice(k, cluster, spectrum.power.shape[0])].sum())
    return 10.0 * np.log10(max(spur, split.signal_power * _POWER_FLOOR) / split.signal_power)


def multitone_sfdr(
    x,
    sample_rate: float,
    tones_hz: Iterable[float],
    window: str = "blackman",
    cluster: int = DEFAULT_CLUSTER,
) -> float:
    """Mean tone power over the largest cluster that is neither DC nor a tone."""
    x = _check_length(x)
    spectrum = power_spectrum(x, sample_rate, window)
    power = spectrum.power.copy()
    n_bins = power.shape[0]
    power[: cluster + 1] = 0.0
    tone_powers = []
    for tone in tones_hz:
        s = _cluster_slice(spectrum.bin_of(alias_frequency(tone, sample_rate)), cluster, n_bins)
        tone_powers.append(float(power[s].sum()))
        power[s] = 0.0
    if not tone_powers or min(tone_powers) <= 0:
        raise AmbiguityError("a requested tone carries no power")
    j = int(np.argmax(power))
    spur = max(float(power[_cluster_slice(j, cluster, n_bins)].sum()), _POWER_FLOOR)
    return 10.0 * np.log10(np.mean(tone_powers) / spur)


@dataclass
class Stft:
    times: np.ndarray
    freqs: np.ndarray
    power: np.ndarray  # linear, [frequency x frame]
    sample_rate: float

    @property
    def power_db(self) -> np.ndarray:
        return 10.0 * np.log10(self.power + _POWER_FLOOR)

    def ridge(self, skip_dc: int = 0) -> np.ndarray:
        """Peak frequency bin per frame."""
        return np.argmax(self.power[skip_dc:], axis=0) + skip_dc

    def to_frame(self) -> pd.DataFrame:
        n_freq, n_frames = self.power.shape
        return pd.DataFrame(
            {
                "frame": np.repeat(np.arange(n_frames), n_freq),
                "time_s": np.repeat(self.times, n_freq),
                "frequency_hz": np.tile(self.freqs, n_frames),
                "power_db": self.power_db.T.reshape(-1),
            }
        )


def stft(x, sample_rate: float, window_len: int, hop: int, window: str = "hann") -> Stft:
    x = np.asarray(x, dtype=np.float64)
    if window_len < 2 or window_len > x.shape[0] or hop < 1:
        raise ConfigurationError(
            f"bad STFT geometry: window_len={window_len}, hop={hop}, length={x.shape[0]}"
        )
    w = _window(window, window_len)
    frames = sliding_window_view(x, window_len)[::hop] * w
    power = np.abs(np.fft.rfft(frames, axis=1)).T ** 2 / np.sum(w**2)
    starts = np.arange(frames.shape[0]) * hop
    return Stft(
        times=(starts + window_len / 2) / sample_rate,
        freqs=np.fft.rfftfreq(window_len, d=1.0 / sample_rate),
        power=power,
        sample_rate=sample_rate,
    )


def stft_distortion_ratio(grid: Stft, cluster: int = 2) -> float:
    """Ridge power over everything else (DC excluded), accumulated over frames, in dB."""
    power = grid.power.copy()
    power[: cluster + 1] = 0.0
    ridge = np.argmax(power, axis=0)
    rows = np.arange(power.shape[0])[:, None]
    on_ridge = np.abs(rows - ridge[None, :]) <= cluster
    signal = float(power[on_ridge].sum())
    distortion = max(float(power[~on_ridge].sum()), signal * _POWER_FLOOR)
    return 10.0 * np.log10(signal / distortion)


def stft_image_level(grid: Stft, n_channels: int, cluster: int = 2) -> float:
    """Power of the interleaving images of the ridge (m*fs/N - f) relative to the ridge, in dB."""
    power = grid.power.copy()
    power[: cluster + 1] = 0.0
    n_freq = power.shape[0]
    step = grid.freqs[1] - grid.freqs[0]
    ridge = np.argmax(power, axis=0)
    signal = image = 0.0
    for frame, k in enumerate(ridge):
        signal += float(power[_cluster_slice(k, cluster, n_freq), frame].sum())
        f = grid.freqs[k]
        for m in range(1, n_channels):
            image_hz = alias_frequency(m * grid.sample_rate / n_channels - f, grid.sample_rate)
            image_bin = int(round(image_hz / step))
            if abs(image_bin - k) > 2 * cluster:
                image += float(power[_cluster_slice(image_bin, cluster, n_freq), frame].sum())
    return 10.0 * np.log10(max(image, signal * _POWER_FLOOR) / signal)


@dataclass
class MetricsReport:
    sinad_db: float
    enob_bits: float
    sfdr_db: float
    fundamental_hz: float
    spectrum: Spectrum = field(repr=False)
    stft: Optional[Stft] = field(default=None, repr=False)

    def summary(self) -> Dict[str, float]:
        return {
            "sinad_db": self.sinad_db,
            "enob_bits": self.enob_bits,
            "sfdr_db": self.sfdr_db,
            "fundamental_hz": self.fundamental_hz,
        }


def analyze(
    x,
    sample_rate: float,
    *,
    stft_window: Optional[int] = None,
    stft_hop: Optional[int] = None,
    sinad_window: str = "hann",
    cluster: int = DEFAULT_CLUSTER,
) -> MetricsReport:
    x = _check_length(x)
    spectrum = power_spectrum(x, sample_rate, sinad_window)
    split = _split_tone(spectrum, cluster)
    sinad_db = _sinad_db(split)
    grid = None
    if stft_window is not None:
        grid = stft(x, sample_rate, stft_window, stft_hop or max(1, stft_window // 4))
    return MetricsReport(
        sinad_db=sinad_db,
        enob_bits=enob(sinad_db),
        sfdr_db=sfdr(x, sample_rate, cluster=cluster),
        fundamental_hz=float(spectrum.freqs[split.fundamental_bin]),
        spectrum=spectrum,
        stft=grid,
    )
