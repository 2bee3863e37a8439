"""Photonic front-end and electronic quantization simulator.

Synthesizes analytic RF test waveforms and pushes them through the sampling
chain: optical pulse sampling in a Mach-Zehnder modulator, round-robin
demultiplexing into ``n_channels`` quantization channels (each with its own
delay, gain and offset), additive noise, timing jitter and a uniform quantizer.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Sequence

import numpy as np
from pydantic import Field, model_validator
from scipy.special import jv

from .errors import ConfigurationError, ShapeError
from .schema import PadcModel

logger = logging.getLogger("padc.frontend")

LOAD_OHMS = 50.0


def dbm_to_volts(power_dbm: float) -> float:
    """Peak voltage of a sine delivering ``power_dbm`` into 50 ohms."""
    return math.sqrt(2.0 * 10 ** (power_dbm / 10.0) * 1e-3 * LOAD_OHMS)


def volts_to_dbm(amplitude: float) -> float:
    return 10.0 * math.log10(amplitude**2 / (2.0 * LOAD_OHMS) / 1e-3)


class WaveformKind(str, Enum):
    SINE = "sine"
    DUAL_TONE = "dual_tone"
    LFM = "lfm"


class WaveformSpec(PadcModel):
    kind: WaveformKind = WaveformKind.SINE
    f0: float
    f1: Optional[float] = None
    amplitude: Optional[float] = None
    phase: float = 0.0
    chirp_duration: Optional[float] = None
    power_dbm: Optional[float] = None

    @model_validator(mode="before")
    @classmethod
    def _resolve_amplitude(cls, data):
        if not isinstance(data, dict):
            return data
        amplitude, power_dbm = data.get("amplitude"), data.get("power_dbm")
        if amplitude is None and power_dbm is None:
            raise ValueError("one of amplitude or power_dbm is required")
        if power_dbm is not None:
            derived = dbm_to_volts(float(power_dbm))
            if amplitude is not None and not math.isclose(amplitude, derived, rel_tol=1e-9):
                raise ValueError("amplitude and power_dbm disagree; give only one")
            data = {**data, "amplitude": derived}
        return data

    @model_validator(mode="after")
    def _check_fields(self) -> "WaveformSpec":
        if self.f0 <= 0:
            raise ValueError("f0 must be positive")
        if self.amplitude is None or self.amplitude <= 0:
            raise ValueError("amplitude must be positive")
        if self.kind in (WaveformKind.DUAL_TONE, WaveformKind.LFM):
            if self.f1 is None or self.f1 <= 0:
                raise ValueError(f"{self.kind.value} needs a positive f1")
        if self.kind is WaveformKind.LFM:
            if self.chirp_duration is None or self.chirp_duration <= 0:
                raise ValueError("lfm needs a positive chirp_duration")
        return self


class MzmConfig(PadcModel):
    v_pi: float = 3.5
    bias_error: float = 0.0
    extinction: float = 1.0

    @model_validator(mode="after")
    def _check(self) -> "MzmConfig":
        if self.v_pi <= 0:
            raise ValueError("v_pi must be positive")
        if abs(self.bias_error) >= math.pi / 2:
            raise ValueError("|bias_error| must stay below pi/2")
        if not 0.0 < self.extinction <= 1.0:
            raise ValueError("extinction must lie in (0, 1]")
        return self


class MismatchProfile(PadcModel):
    delay: float = 0.0
    gain: float = 1.0
    offset: float = 0.0

    @model_validator(mode="after")
    def _check(self) -> "MismatchProfile":
        if self.gain <= 0:
            raise ValueError("gain must be positive")
        return self


class FrontEndConfig(PadcModel):
    sample_rate: float = 20e9
    n_channels: int = Field(default=1, ge=1)
    mzm: MzmConfig = MzmConfig()
    mismatches: List[MismatchProfile] = Field(default_factory=list)
    noise_sigma: float = Field(default=0.0, ge=0.0)
    jitter_sigma: float = Field(default=0.0, ge=0.0)
    quant_bits: Optional[int] = Field(default=None, ge=1)
    full_scale: float = Field(default=0.5, gt=0.0)
    rng_seed: int = 0

    @model_validator(mode="before")
    @classmethod
    def _default_mismatches(cls, data):
        if isinstance(data, dict) and not data.get("mismatches"):
            data = {**data, "mismatches": [MismatchProfile()] * int(data.get("n_channels", 1))}
        return data

    @model_validator(mode="after")
    def _check(self) -> "FrontEndConfig":
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if len(self.mismatches) != self.n_channels:
            raise ValueError(
                f"{len(self.mismatches)} mismatch profiles for {self.n_channels} channels"
            )
        return self

    @property
    def channel_rate(self) -> float:
        return self.sample_rate / self.n_channels


@dataclass
class ChannelSet:
    """Demultiplexed samples; channel m holds interleaved indices m, m+N, m+2N, ..."""

    channels: List[np.ndarray]
    sample_rate: float

    def __post_init__(self) -> None:
        self.channels = [np.asarray(c, dtype=np.float64) for c in self.channels]
        if not self.channels:
            raise ShapeError("a ChannelSet needs at least one channel")
        lengths = {c.shape[0] for c in self.channels}
        if len(lengths) != 1 or any(c.ndim != 1 for c in self.channels):
            raise ShapeError(f"channels must be 1-D and equal length, got {sorted(lengths)}")

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @property
    def length(self) -> int:
        return self.channels[0].shape[0]

    @property
    def channel_phase(self) -> List[int]:
        return list(range(self.n_channels))

    @property
    def channel_rate(self) -> float:
        return self.sample_rate / self.n_channels

    def interleaved(self) -> np.ndarray:
        return interleave_samples(self.channels)


def interleave_samples(channels: Sequence[np.ndarray]) -> np.ndarray:
    n = len(channels)
    out = np.empty(n * len(channels[0]), dtype=np.float64)
    for m, channel in enumerate(channels):
        out[m::n] = channel
    return out


def deinterleave_samples(x: np.ndarray, n_channels: int) -> List[np.ndarray]:
    if len(x) % n_channels:
        raise ShapeError(f"length {len(x)} is not divisible by {n_channels} channels")
    return [np.array(x[m::n_channels]) for m in range(n_channels)]


def waveform_phase(spec: WaveformSpec, times: np.ndarray) -> np.ndarray:
    """Instantaneous phase argument of a Sine or LFM waveform."""
    t = np.asarray(times, dtype=np.float64)
    if spec.kind is WaveformKind.SINE:
        return 2 * np.pi * spec.f0 * t + spec.phase
    if spec.kind is WaveformKind.LFM:
        rate = (spec.f1 - spec.f0) / (2.0 * spec.chirp_duration)
        return 2 * np.pi * (spec.f0 * t + rate * t**2) + spec.phase
    raise ConfigurationError(f"{spec.kind.value} has no single phase argument")


def synth_waveform(spec: WaveformSpec, times: np.ndarray) -> np.ndarray:
    t = np.asarray(times, dtype=np.float64)
    if not np.all(np.isfinite(t)):
        raise ConfigurationError("sample times must be finite")
    if spec.kind is WaveformKind.DUAL_TONE:
        # each tone carries A/2 so the peak matches a single tone of amplitude A
        return spec.amplitude * (np.sin(2 * np.pi * spec.f0 * t) + np.sin(2 * np.pi * spec.f1 * t)) / 2
    return spec.amplitude * np.sin(waveform_phase(spec, t))


def mzm_transfer(v, cfg: MzmConfig):
    return cfg.extinction * 0.5 * (1.0 + np.sin(np.pi * np.asarray(v) / cfg.v_pi + cfg.bias_error))


def fundamental_gain(amplitude: float, mzm: MzmConfig, max_harmonic: int = 5) -> float:
    """Volts-out per volt-in of a power-conserving linear equivalent of the MZM.

    A tone of peak ``amplitude`` leaves the centered MZM as a Bessel series of
    harmonics; folding the power of harmonics up to ``max_harmonic`` back into
    the fundamental gives the amplitude a harmonic-free reference carries.
    Tends to the small-signal slope as the amplitude goes to zero.
    """
    slope = mzm.extinction * np.pi / (2.0 * mzm.v_pi) * math.cos(mzm.bias_error)
    if amplitude <= 0:
        return slope
    a = np.pi * amplitude / mzm.v_pi
    orders = np.arange(1, max_harmonic + 1)
    power = jv(orders, a) ** 2
    odd = power[orders % 2 == 1].sum()
    even = power[orders % 2 == 0].sum()
    folded = mzm.extinction * math.sqrt(
        math.cos(mzm.bias_error) ** 2 * odd + math.sin(mzm.bias_error) ** 2 * even
    )
    return folded / amplitude


def quantize(x: np.ndarray, bits: int, full_scale: float) -> np.ndarray:
    """Uniform mid-tread quantizer over [-full_scale, +full_scale], clipping outside."""
    if bits < 1 or full_scale <= 0:
        raise ConfigurationError("quantizer needs bits >= 1 and full_scale > 0")
    step = 2.0 * full_scale / 2**bits
    levels = np.round(np.asarray(x, dtype=np.float64) / step) * step
    return np.clip(levels, -full_scale, full_scale)


def alias_frequency(f: float, sample_rate: float) -> float:
    """Image of ``f`` in the first Nyquist zone [0, sample_rate / 2]."""
    r = f % sample_rate
    return r if r <= sample_rate / 2 else sample_rate - r


def _sample(
    spec: WaveformSpec,
    cfg: FrontEndConfig,
    n_samples: int,
    transfer: Callable[[np.ndarray], np.ndarray],
) -> ChannelSet:
    n = cfg.n_channels
    if n_samples <= 0 or n_samples % n:
        raise ShapeError(f"n_samples={n_samples} is not a positive multiple of {n} channels")
    rng = np.random.default_rng(cfg.rng_seed)
    k = np.arange(n_samples)
    m = k % n
    delays = np.array([p.delay for p in cfg.mismatches])
    gains = np.array([p.gain for p in cfg.mismatches])
    offsets = np.array([p.offset for p in cfg.mismatches])

    t = k / cfg.sample_rate + delays[m]
    if cfg.jitter_sigma > 0:
        t = t + rng.normal(0.0, cfg.jitter_sigma, n_samples)
    x = gains[m] * transfer(synth_waveform(spec, t)) + offsets[m]
    if cfg.noise_sigma > 0:
        x = x + rng.normal(0.0, cfg.noise_sigma, n_samples)
    if cfg.quant_bits is not None:
        x = quantize(x, cfg.quant_bits, cfg.full_scale)
    return ChannelSet(channels=deinterleave_samples(x, n), sample_rate=cfg.sample_rate)


def sample_frontend(spec: WaveformSpec, cfg: FrontEndConfig, n_samples: int) -> ChannelSet:
    """Sample ``spec`` through the full non-linear chain; deterministic in ``cfg.rng_seed``."""
    center = 0.5 * cfg.mzm.extinction
    logger.debug(
        "Sampling front-end",
        extra={"kind": spec.kind.value, "f0": spec.f0, "n_samples": n_samples},
    )
    return _sample(spec, cfg, n_samples, lambda v: mzm_transfer(v, cfg.mzm) - center)


def sample_linear(
    spec: WaveformSpec, cfg: FrontEndConfig, n_samples: int, max_harmonic: int = 5
) -> ChannelSet:
    """Same chain with the MZM replaced by its power-conserving linear equivalent."""
    gain = fundamental_gain(spec.amplitude, cfg.mzm, max_harmonic)
    return _sample(spec, cfg, n_samples, lambda v: gain * v)
