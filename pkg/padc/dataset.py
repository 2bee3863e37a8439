"""Training corpora of (original, reference) pairs for both nets.

References are built the way a bench would build them: take the DFT of the
distorted record, zero the harmonic (or interleaving-spur) bin clusters, and
fold the removed power back into the fundamental cluster. ``analytic_reference``
is the simulation-only ground truth used to cross-check that procedure.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import Field, model_validator

from .errors import AmbiguityError, ConfigurationError, FrequencyRangeError, ShapeError
from .formats import (
    read_channelset,
    read_manifest,
    write_channelset,
    write_channelset_csv,
    write_manifest,
)
from .frontend import (
    ChannelSet,
    FrontEndConfig,
    WaveformKind,
    WaveformSpec,
    alias_frequency,
    fundamental_gain,
    interleave_samples,
    sample_frontend,
    sample_linear,
    synth_waveform,
)
from .schema import PadcModel, config_hash, with_updates

logger = logging.getLogger("padc.dataset")

GUARD_BINS = 2
MIN_REFERENCE_LENGTH = 64
DEFAULT_VALID_FRACTION = 50 / 417

Recover = Callable[[np.ndarray], np.ndarray]


class CorpusConfig(PadcModel):
    n_pairs: int = Field(default=417, ge=1)
    valid_fraction: float = Field(default=DEFAULT_VALID_FRACTION, ge=0.0, lt=1.0)
    length: int = Field(default=1000, ge=MIN_REFERENCE_LENGTH)
    f_min: float = Field(default=0.0, ge=0.0)
    f_max: Optional[float] = None
    stop_bands: List[Tuple[float, float]] = Field(default_factory=lambda: [(4e9, 6e9)])
    amp_dbm_min: float = -2.0
    amp_dbm_max: float = 15.0
    snap_to_bin: bool = True
    max_harmonic: int = Field(default=5, ge=2)
    max_draws: int = Field(default=1000, ge=1)

    @model_validator(mode="after")
    def _check(self) -> "CorpusConfig":
        if self.amp_dbm_max < self.amp_dbm_min:
            raise ValueError("amp_dbm_max is below amp_dbm_min")
        if self.f_max is not None and self.f_max <= self.f_min:
            raise ValueError("f_max must exceed f_min")
        return self

    def split_sizes(self, n_pairs: int) -> Tuple[int, int]:
        n_valid = int(round(n_pairs * self.valid_fraction))
        if self.valid_fraction > 0 and n_pairs >= 2:
            n_valid = max(1, n_valid)
        return n_pairs - n_valid, n_valid


@dataclass
class DataPair:
    original: List[np.ndarray]
    reference: np.ndarray
    sample_rate: float  # rate of the reference sequence
    spec: WaveformSpec
    config_hash: str
    seed: int
    channel: Optional[int] = None

    def __post_init__(self) -> None:
        lengths = {len(c) for c in self.original}
        if len(lengths) != 1:
            raise ShapeError("original channels differ in length")
        if len(self.reference) != sum(len(c) for c in self.original):
            raise ShapeError(
                f"reference length {len(self.reference)} != total original length "
                f"{sum(len(c) for c in self.original)}"
            )

    @property
    def n_inputs(self) -> int:
        return len(self.original)


@dataclass
class Corpus:
    kind: str  # "linearization" or "matching"
    pairs: List[DataPair]
    train: List[int]
    valid: List[int]
    rng_seed: int
    meta: Dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if set(self.train) & set(self.valid):
            raise ConfigurationError("train and validation indices overlap")

    @property
    def n_inputs(self) -> int:
        return self.pairs[0].n_inputs if self.pairs else 0


# -- reference oracles -------------------------------------------------------


def _bin(frequency: float, n: int, sample_rate: float) -> int:
    return int(round(frequency * n / sample_rate))


def _fundamental_bin(f0: float, n: int, sample_rate: float, guard: int) -> int:
    kf = _bin(alias_frequency(f0, sample_rate), n, sample_rate)
    if kf <= guard or kf >= n // 2 - guard:
        raise FrequencyRangeError(
            f"fundamental image {alias_frequency(f0, sample_rate):.6g} Hz is within {guard} bins "
            "of DC or Nyquist"
        )
    return kf


def harmonic_bins(
    f0: float, sample_rate: float, n: int, max_harmonic: int, guard: int = GUARD_BINS
) -> Tuple[int, List[int]]:
    """Fundamental bin and the aliased bins of harmonics 2..max_harmonic."""
    kf = _fundamental_bin(f0, n, sample_rate, guard)
    bins = []
    for order in range(2, max_harmonic + 1):
        kh = _bin(alias_frequency(order * f0, sample_rate), n, sample_rate)
        if abs(kh - kf) <= 2 * guard:
            raise AmbiguityError(f"harmonic {order} aliases onto the fundamental cluster")
        bins.append(kh)
    return kf, bins


def spur_bins(
    f0: float, sample_rate: float, n: int, n_channels: int, guard: int = GUARD_BINS
) -> Tuple[int, List[int], List[int]]:
    """Fundamental bin, signal-image spur bins, and offset spur bins for N-way interleaving."""
    kf = _fundamental_bin(f0, n, sample_rate, guard)
    images, offsets = [], []
    for m in range(1, n_channels):
        carrier = m * sample_rate / n_channels
        for f in (carrier + f0, carrier - f0):
            images.append(_bin(alias_frequency(f, sample_rate), n, sample_rate))
        offsets.append(_bin(alias_frequency(carrier, sample_rate), n, sample_rate))
    for k in images + offsets:
        if abs(k - kf) <= 2 * guard:
            raise AmbiguityError("an interleaving spur falls on the fundamental cluster")
    return kf, images, offsets


def _cluster_mask(n_bins: int, centers: Sequence[int], guard: int) -> np.ndarray:
    mask = np.zeros(n_bins, dtype=bool)
    for k in centers:
        mask[max(k - guard, 0) : min(k + guard, n_bins - 1) + 1] = True
    return mask


def _fold_into_fundamental(
    x: np.ndarray, kf: int, folded: Sequence[int], dropped: Sequence[int], guard: int
) -> np.ndarray:
    n = x.shape[0]
    spectrum = np.fft.rfft(x)
    n_bins = spectrum.shape[0]
    weight = np.full(n_bins, 2.0)
    weight[0] = 1.0
    if n % 2 == 0:
        weight[-1] = 1.0
    power = weight * np.abs(spectrum) ** 2

    fund = _cluster_mask(n_bins, [kf], guard)
    removed = _cluster_mask(n_bins, folded, guard) & ~fund
    discarded = _cluster_mask(n_bins, dropped, guard) & ~fund & ~removed
    p_fund = float(power[fund].sum())
    if p_fund <= 0:
        raise AmbiguityError("fundamental cluster carries no power")
    p_removed = float(power[removed].sum())

    spectrum[removed] = 0.0
    spectrum[discarded] = 0.0
    spectrum[fund] *= np.sqrt((p_fund + p_removed) / p_fund)
    return np.fft.irfft(spectrum, n=n)


def _as_record(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] < MIN_REFERENCE_LENGTH:
        raise ShapeError(f"reference construction needs >= {MIN_REFERENCE_LENGTH} samples")
    return x


def harmonic_removal_reference(
    x, f0: float, sample_rate: float, max_harmonic: int = 5, guard: int = GUARD_BINS
) -> np.ndarray:
    x = _as_record(x)
    kf, bins = harmonic_bins(f0, sample_rate, x.shape[0], max_harmonic, guard)
    return _fold_into_fundamental(x, kf, bins, [], guard)


def matching_reference(
    x_interleaved, f0: float, sample_rate: float, n_channels: int, guard: int = GUARD_BINS
) -> np.ndarray:
    """Remove interleaving spurs; signal images fold into the fundamental, offset spurs are dropped."""
    x = _as_record(x_interleaved)
    kf, images, offsets = spur_bins(f0, sample_rate, x.shape[0], n_channels, guard)
    return _fold_into_fundamental(x, kf, images, offsets, guard)


def analytic_reference(
    spec: WaveformSpec, cfg: FrontEndConfig, n: int, max_harmonic: int = 5
) -> np.ndarray:
    """Ideal mismatch-free, noise-free samples on the aggregate grid, at the linear-equivalent gain."""
    t = np.arange(n) / cfg.sample_rate
    return fundamental_gain(spec.amplitude, cfg.mzm, max_harmonic) * synth_waveform(spec, t)


# -- corpus generation -------------------------------------------------------


def allowed_intervals(settings: CorpusConfig, nyquist: float) -> List[Tuple[float, float]]:
    """Draw band as disjoint open intervals; an explicit f_max may lie above Nyquist (subsampling)."""
    upper = settings.f_max if settings.f_max is not None else nyquist
    intervals = [(settings.f_min, upper)]
    for lo, hi in sorted(settings.stop_bands):
        next_intervals = []
        for a, b in intervals:
            if hi <= a or lo >= b:
                next_intervals.append((a, b))
                continue
            if lo > a:
                next_intervals.append((a, lo))
            if hi < b:
                next_intervals.append((hi, b))
        intervals = next_intervals
    return [(a, b) for a, b in intervals if b > a]


def _in_intervals(f: float, intervals: List[Tuple[float, float]]) -> bool:
    return any(a < f < b for a, b in intervals)


def draw_tone(
    rng: np.random.Generator,
    settings: CorpusConfig,
    intervals: List[Tuple[float, float]],
    bin_step: float,
    accept: Callable[[float], None],
) -> WaveformSpec:
    """Draw a sine from the allowed band; ``accept`` raises for unusable frequencies."""
    widths = np.array([b - a for a, b in intervals])
    edges = np.concatenate([[0.0], np.cumsum(widths)])
    for _ in range(settings.max_draws):
        u = rng.uniform(0.0, edges[-1])
        idx = min(int(np.searchsorted(edges, u, side="right")) - 1, len(intervals) - 1)
        f0 = intervals[idx][0] + u - edges[idx]
        power_dbm = rng.uniform(settings.amp_dbm_min, settings.amp_dbm_max)
        phase = rng.uniform(0.0, 2 * np.pi)
        if settings.snap_to_bin:
            f0 = round(f0 / bin_step) * bin_step
        if f0 <= 0 or not _in_intervals(f0, intervals):
            continue
        try:
            accept(f0)
        except (AmbiguityError, FrequencyRangeError):
            continue
        return WaveformSpec(
            kind=WaveformKind.SINE, f0=float(f0), power_dbm=float(power_dbm), phase=float(phase)
        )
    raise ConfigurationError(f"no usable tone frequency after {settings.max_draws} draws")


def _pair_seed(rng_seed: int, index: int) -> int:
    return rng_seed ^ index


def _prepare(
    cfg: FrontEndConfig, n_pairs: Optional[int], settings: Optional[CorpusConfig]
) -> Tuple[CorpusConfig, int, List[Tuple[float, float]]]:
    settings = settings or CorpusConfig()
    n_pairs = settings.n_pairs if n_pairs is None else n_pairs
    if n_pairs < 1:
        raise ConfigurationError("a corpus needs at least one pair")
    intervals = allowed_intervals(settings, cfg.sample_rate / 2)
    if not intervals:
        raise ConfigurationError("frequency range is empty after stop-band exclusions")
    return settings, n_pairs, intervals


def _finish(
    kind: str,
    pairs: List[DataPair],
    settings: CorpusConfig,
    cfg: FrontEndConfig,
    rng_seed: int,
) -> Corpus:
    corpus = Corpus(
        kind=kind,
        pairs=pairs,
        train=list(range(len(pairs))),
        valid=[],
        rng_seed=rng_seed,
        meta={
            "frontend": cfg.model_dump(mode="json"),
            "settings": settings.model_dump(mode="json"),
            "config_hash": config_hash(cfg),
        },
    )
    n_train, n_valid = settings.split_sizes(len(pairs))
    corpus = split_dataset(corpus, n_train, n_valid, rng_seed)
    logger.info(
        "Corpus generated",
        extra={"kind": kind, "pairs": len(pairs), "train": n_train, "valid": n_valid},
    )
    return corpus


def gen_linearization_corpus(
    cfg: FrontEndConfig,
    n_pairs: Optional[int] = None,
    rng_seed: int = 0,
    settings: Optional[CorpusConfig] = None,
) -> Corpus:
    """Single-channel sine pairs; pair i is taken from channel ``i % n_channels``."""
    settings, n_pairs, intervals = _prepare(cfg, n_pairs, settings)
    n_ch, length = cfg.n_channels, settings.length
    rate = cfg.channel_rate
    digest = config_hash(cfg)

    def accept(f0: float) -> None:
        harmonic_bins(f0, rate, length, settings.max_harmonic)

    pairs = []
    for i in range(n_pairs):
        seed = _pair_seed(rng_seed, i)
        rng = np.random.default_rng(seed)
        spec = draw_tone(rng, settings, intervals, rate / length, accept)
        channel = i % n_ch
        cs = sample_frontend(spec, with_updates(cfg, rng_seed=seed), n_ch * length)
        original = cs.channels[channel]
        reference = harmonic_removal_reference(original, spec.f0, rate, settings.max_harmonic)
        pairs.append(DataPair([original], reference, rate, spec, digest, seed, channel))
    return _finish("linearization", pairs, settings, cfg, rng_seed)


def gen_matching_corpus(
    cfg: FrontEndConfig,
    n_pairs: Optional[int] = None,
    rng_seed: int = 0,
    settings: Optional[CorpusConfig] = None,
    linearizer: Optional[Recover] = None,
) -> Corpus:
    """Mismatched channel pairs against a spur-free interleaved reference.

    Without ``linearizer`` the channels come from the linear-equivalent front-end
    (clean tones with mismatch applied). With it, the full non-linear front-end
    is sampled and each channel is passed through ``linearizer`` first.
    """
    if cfg.n_channels < 2:
        raise ConfigurationError("matching corpora need at least two channels")
    settings, n_pairs, intervals = _prepare(cfg, n_pairs, settings)
    n_ch, length = cfg.n_channels, settings.length
    total = n_ch * length
    digest = config_hash(cfg)

    def accept(f0: float) -> None:
        spur_bins(f0, cfg.sample_rate, total, n_ch)

    pairs = []
    for i in range(n_pairs):
        seed = _pair_seed(rng_seed, i)
        rng = np.random.default_rng(seed)
        spec = draw_tone(rng, settings, intervals, cfg.sample_rate / total, accept)
        pair_cfg = with_updates(cfg, rng_seed=seed)
        if linearizer is None:
            channels = sample_linear(spec, pair_cfg, total, settings.max_harmonic).channels
        else:
            channels = [linearizer(c) for c in sample_frontend(spec, pair_cfg, total).channels]
        reference = matching_reference(interleave_samples(channels), spec.f0, cfg.sample_rate, n_ch)
        pairs.append(DataPair(channels, reference, cfg.sample_rate, spec, digest, seed))
    return _finish("matching", pairs, settings, cfg, rng_seed)


def split_dataset(corpus: Corpus, n_train: int, n_valid: int, rng_seed: int) -> Corpus:
    if n_train < 0 or n_valid < 0 or n_train + n_valid > len(corpus.pairs):
        raise ConfigurationError(
            f"cannot split {len(corpus.pairs)} pairs into {n_train} train + {n_valid} validation"
        )
    order = np.random.default_rng(rng_seed).permutation(len(corpus.pairs))
    return Corpus(
        kind=corpus.kind,
        pairs=corpus.pairs,
        train=sorted(int(i) for i in order[:n_train]),
        valid=sorted(int(i) for i in order[n_train : n_train + n_valid]),
        rng_seed=rng_seed,
        meta=corpus.meta,
    )


# -- persistence --------------------------------------------------------------


def _pair_paths(directory: Path, index: int) -> Tuple[Path, Path]:
    stem = directory / "pairs" / f"pair_{index:04d}"
    return stem.with_name(stem.name + "_original.padc"), stem.with_name(stem.name + "_reference.padc")


def save_corpus(corpus: Corpus, directory: Path, csv: bool = False) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    records = []
    for index, pair in enumerate(corpus.pairs):
        original_path, reference_path = _pair_paths(directory, index)
        original = ChannelSet(channels=pair.original, sample_rate=pair.sample_rate)
        reference = ChannelSet(channels=[pair.reference], sample_rate=pair.sample_rate)
        write_channelset(original, original_path)
        write_channelset(reference, reference_path)
        if csv:
            write_channelset_csv(original, original_path.with_suffix(".csv"))
            write_channelset_csv(reference, reference_path.with_suffix(".csv"))
        records.append(
            {
                "index": index,
                "seed": pair.seed,
                "channel": pair.channel,
                "sample_rate": pair.sample_rate,
                "spec": pair.spec.model_dump(mode="json"),
            }
        )
    write_manifest(
        directory / "manifest.json",
        {
            "kind": corpus.kind,
            "n_pairs": len(corpus.pairs),
            "n_inputs": corpus.n_inputs,
            "rng_seed": corpus.rng_seed,
            "train": corpus.train,
            "valid": corpus.valid,
            **corpus.meta,
            "pairs": records,
        },
    )


def load_corpus(directory: Path) -> Corpus:
    manifest = read_manifest(directory / "manifest.json")
    pairs = []
    for record in manifest["pairs"]:
        original_path, reference_path = _pair_paths(directory, record["index"])
        original = read_channelset(original_path)
        reference = read_channelset(reference_path)
        pairs.append(
            DataPair(
                original=original.channels,
                reference=reference.channels[0],
                sample_rate=record["sample_rate"],
                spec=WaveformSpec(**record["spec"]),
                config_hash=manifest.get("config_hash", ""),
                seed=record["seed"],
                channel=record["channel"],
            )
        )
    meta = {k: manifest[k] for k in ("frontend", "settings", "config_hash") if k in manifest}
    return Corpus(
        kind=manifest["kind"],
        pairs=pairs,
        train=list(manifest["train"]),
        valid=list(manifest["valid"]),
        rng_seed=manifest["rng_seed"],
        meta=meta,
    )
