"""Study orchestration: training runs, linearization/matching studies and ENOB characterization."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..config import REFERENCE_RATE, RunConfig, StudyConfig
from ..dataset import CorpusConfig, allowed_intervals, load_corpus
from ..engine import Net, NetKind
from ..errors import ConfigurationError, StateError
from ..frontend import (
    WaveformKind,
    WaveformSpec,
    alias_frequency,
    interleave_samples,
    sample_frontend,
    sample_linear,
)
from ..metrics import (
    MetricsReport,
    analyze,
    multitone_sfdr,
    sfdr,
    spur_level_dbc,
    stft,
    stft_distortion_ratio,
    stft_image_level,
)
from ..nets import linearizer, recover
from ..schema import with_updates
from ..training import TrainHistory, TrainResult, TrainState, load_checkpoint, train
from . import render
from .common import (
    build_corpus,
    build_net_for,
    mean_input_sinad,
    safe_metric,
    snap,
    study_frontend,
)
from .sweep import SweepResult, SweepRow, run_multichannel_sweep

logger = logging.getLogger("padc.experiments")

TRAIN_STATE_FILE = "train_state.npz"
ENOB_TONES = {
    "default-20gs": [3.44e9, 21.13e9],
    "low-noise-100ms": [23.332e9],
}
ENOB_AMPLITUDE = 1.2
EDGE_MARGIN = 0.02


@dataclass
class HeldOutSignal:
    name: str
    spec: WaveformSpec


@dataclass
class SignalReport:
    """Before/after view of one held-out signal."""

    name: str
    spec: WaveformSpec
    sample_rate: float
    before: np.ndarray
    after: np.ndarray
    metrics: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    reports: Optional[Tuple[MetricsReport, MetricsReport]] = None
    stft_window: Optional[int] = None
    stft_hop: Optional[int] = None

    def improvement(self, metric: str) -> float:
        before, after = self.metrics[metric]
        return after - before

    def flat_metrics(self) -> Dict[str, float]:
        out = {}
        for key, (before, after) in self.metrics.items():
            out[f"{key}_before"] = before
            out[f"{key}_after"] = after
        return out


@dataclass
class StudyReport:
    name: str
    histories: Dict[str, TrainHistory] = field(default_factory=dict)
    nets: Dict[str, Net] = field(default_factory=dict)
    signals: List[SignalReport] = field(default_factory=list)
    extra: Dict[str, object] = field(default_factory=dict)

    def signal(self, name: str) -> SignalReport:
        for signal in self.signals:
            if signal.name == name:
                return signal
        raise KeyError(name)


# -- training runs -------------------------------------------------------------


def run_training(
    cfg: RunConfig,
    kind: NetKind,
    out_dir: Path,
    corpus_dir: Optional[Path] = None,
    linearizer_path: Optional[Path] = None,
    resume: bool = False,
) -> TrainResult:
    """Train one net and write checkpoints, history CSV, state and manifest to ``out_dir``."""
    if corpus_dir is not None:
        corpus = load_corpus(corpus_dir)
        if corpus.kind != kind.value:
            raise ConfigurationError(f"corpus at {corpus_dir} is a {corpus.kind} corpus")
    else:
        linearize = linearizer(load_checkpoint(linearizer_path)) if linearizer_path else None
        corpus = build_corpus(cfg, kind, linearize=linearize)
    net = build_net_for(cfg, kind, corpus.n_inputs)

    state = None
    state_path = out_dir / TRAIN_STATE_FILE
    if resume:
        if not state_path.exists():
            raise StateError(f"nothing to resume: {state_path} does not exist")
        state = TrainState.load(state_path)
        logger.info("Resuming training", extra={"from_step": state.step, "path": str(state_path)})

    result = train(net, corpus, cfg.train, state=state, on_validation=lambda s: s.save(state_path))
    render.write_training(result, cfg, out_dir, corpus)
    result.state.save(state_path)
    return result


# -- held-out signals ----------------------------------------------------------


def _band(cfg: RunConfig) -> Tuple[float, float]:
    intervals = allowed_intervals(cfg.dataset, cfg.frontend.sample_rate / 2)
    if not intervals:
        raise ConfigurationError("draw band is empty")
    return max(intervals, key=lambda iv: iv[1] - iv[0])


def _lfm(f0: float, f1: float, amplitude: float, duration: float) -> WaveformSpec:
    return WaveformSpec(kind=WaveformKind.LFM, f0=f0, f1=f1, amplitude=amplitude, chirp_duration=duration)


def linearization_signals(cfg: RunConfig, rate: float, n: int) -> List[HeldOutSignal]:
    if cfg.frontend.sample_rate == REFERENCE_RATE:
        sine, tones, chirp = 833e6, (712e6, 752e6), (1.60e9, 2.20e9)
    else:
        lo, hi = _band(cfg)
        width = hi - lo
        sine = lo + 0.47 * width
        tones = (lo + 0.35 * width, lo + 0.6 * width)
        chirp = (lo + 0.2 * width, lo + 0.8 * width)
    dual = WaveformSpec(
        kind=WaveformKind.DUAL_TONE,
        f0=snap(tones[0], rate, n),
        f1=snap(tones[1], rate, n),
        amplitude=0.72,
    )
    return [
        HeldOutSignal("sine", WaveformSpec(f0=snap(sine, rate, n), amplitude=0.36)),
        HeldOutSignal("dual_tone", dual),
        HeldOutSignal("lfm", _lfm(chirp[0], chirp[1], 0.36, n / rate)),
    ]


def matching_signals(cfg: RunConfig, rate: float, n: int) -> List[HeldOutSignal]:
    if cfg.frontend.sample_rate == REFERENCE_RATE:
        sine, chirp = 1.468e9, (1.40e9, 1.80e9)
    else:
        lo, hi = _band(cfg)
        sine, chirp = lo + 0.3 * (hi - lo), (lo + 0.25 * (hi - lo), lo + 0.45 * (hi - lo))
    return [
        HeldOutSignal("sine", WaveformSpec(f0=snap(sine, rate, n), amplitude=0.42)),
        HeldOutSignal("lfm", _lfm(chirp[0], chirp[1], 0.42, n / rate)),
    ]


def _both(signal: SignalReport, metric: Callable[[np.ndarray], float]) -> Tuple[float, float]:
    return metric(signal.before), metric(signal.after)


def _sine_metrics(signal: SignalReport) -> None:
    before = analyze(signal.before, signal.sample_rate)
    after = analyze(signal.after, signal.sample_rate)
    signal.reports = (before, after)
    for key in ("sinad_db", "enob_bits", "sfdr_db"):
        signal.metrics[key] = (getattr(before, key), getattr(after, key))


def _score_linearization(signal: SignalReport, study: StudyConfig) -> None:
    spec, fs = signal.spec, signal.sample_rate
    if spec.kind is WaveformKind.SINE:
        _sine_metrics(signal)
    elif spec.kind is WaveformKind.DUAL_TONE:
        signal.metrics["multitone_sfdr_db"] = _both(
            signal, lambda x: safe_metric(lambda: multitone_sfdr(x, fs, [spec.f0, spec.f1]))
        )
    else:
        signal.stft_window, signal.stft_hop = study.stft_window, study.stft_hop
        signal.metrics["stft_distortion_ratio_db"] = _both(
            signal, lambda x: stft_distortion_ratio(stft(x, fs, study.stft_window, study.stft_hop))
        )


def _score_matching(signal: SignalReport, n_channels: int, study: StudyConfig) -> None:
    spec, fs = signal.spec, signal.sample_rate
    if spec.kind is WaveformKind.SINE:
        _sine_metrics(signal)
        spurs = [m * fs / n_channels - spec.f0 for m in range(1, n_channels)]
        signal.metrics["spur_level_dbc"] = _both(
            signal, lambda x: max(spur_level_dbc(x, fs, f) for f in spurs)
        )
    else:
        signal.stft_window, signal.stft_hop = study.stft_window, study.stft_hop
        signal.metrics["stft_image_level_db"] = _both(
            signal, lambda x: stft_image_level(stft(x, fs, study.stft_window, study.stft_hop), n_channels)
        )


# -- studies -------------------------------------------------------------------


def run_linearization_study(cfg: RunConfig, out_dir: Optional[Path] = None) -> StudyReport:
    """Train a linearization net on sines only; score a held-out sine, a dual tone and a chirp."""
    frontend = study_frontend(cfg)
    settings = with_updates(cfg.dataset, n_pairs=cfg.study.n_pairs)
    corpus = build_corpus(cfg, NetKind.LINEARIZATION, frontend, settings)
    result = train(build_net_for(cfg, NetKind.LINEARIZATION, 1), corpus, cfg.train)
    net = result.net

    n_ch, n = frontend.n_channels, cfg.study.eval_length
    rate = frontend.channel_rate
    report = StudyReport(name="linearization", histories={"linearization": result.history})
    report.nets = {"linearization": net, "linearization_best": result.best_net}
    report.extra["mean_input_sinad_db"] = mean_input_sinad(corpus)
    for held_out in linearization_signals(cfg, rate, n):
        raw = sample_frontend(held_out.spec, frontend, n_ch * n).channels[0]
        signal = SignalReport(held_out.name, held_out.spec, rate, raw, recover(net, [raw]))
        _score_linearization(signal, cfg.study)
        report.signals.append(signal)
        logger.info(
            "Held-out signal scored",
            extra={"study": "linearization", "signal": held_out.name, **signal.flat_metrics()},
        )
    if out_dir is not None:
        render.write_study(report, cfg, out_dir)
    return report


def run_matching_study(cfg: RunConfig, out_dir: Optional[Path] = None) -> StudyReport:
    """Train a matching net on mismatched channels; score a held-out sine and a chirp."""
    frontend = study_frontend(cfg)
    if frontend.n_channels < 2:
        raise ConfigurationError("the matching study needs a front-end with at least two channels")
    settings = with_updates(cfg.dataset, n_pairs=cfg.study.n_pairs)
    corpus = build_corpus(cfg, NetKind.MATCHING, frontend, settings)
    result = train(build_net_for(cfg, NetKind.MATCHING, frontend.n_channels), corpus, cfg.train)
    net = result.net

    n_ch, n = frontend.n_channels, cfg.study.eval_length
    fs = frontend.sample_rate
    report = StudyReport(name="matching", histories={"matching": result.history})
    report.nets = {"matching": net, "matching_best": result.best_net}
    report.extra["mean_input_sinad_db"] = mean_input_sinad(corpus)
    for held_out in matching_signals(cfg, fs, n_ch * n):
        channels = sample_linear(held_out.spec, frontend, n_ch * n).channels
        before, after = interleave_samples(channels), recover(net, channels)
        signal = SignalReport(held_out.name, held_out.spec, fs, before, after)
        _score_matching(signal, n_ch, cfg.study)
        report.signals.append(signal)
        logger.info(
            "Held-out signal scored",
            extra={"study": "matching", "signal": held_out.name, **signal.flat_metrics()},
        )
    if out_dir is not None:
        render.write_study(report, cfg, out_dir)
    return report


def cascade(lin_net: Net, match_net: Optional[Net], channels: Sequence[np.ndarray]) -> np.ndarray:
    """Linearize each channel, then align the channels with the matching net."""
    linear = [recover(lin_net, [c]) for c in channels]
    if match_net is None:
        return linear[0] if len(linear) == 1 else interleave_samples(linear)
    return recover(match_net, linear)


def sfdr_tones(fs: float, n: int, count: int) -> List[float]:
    """``count`` bin-exact tones spread across the first Nyquist zone, clear of DC and Nyquist."""
    if count <= 0:
        return []
    lo, hi = EDGE_MARGIN * fs / 2, (1 - EDGE_MARGIN) * fs / 2
    return [snap(f, fs, n) for f in np.linspace(lo, hi, count + 2)[1:-1]]


def nyquist_zone(frequency: float, sample_rate: float) -> int:
    """0 for the first zone [0, fs/2), 1 for [fs/2, fs), and so on."""
    return int(frequency // (sample_rate / 2))


def zone_settings(settings: CorpusConfig, zone: int, nyquist: float) -> CorpusConfig:
    """Draw band covering Nyquist zone ``zone``; the first zone keeps the configured band.

    Delay mismatch acts on the true input frequency, so a matching net only
    removes it for tones from the zone it was trained in.
    """
    if zone == 0:
        return settings
    return with_updates(settings, f_min=zone * nyquist, f_max=(zone + 1) * nyquist, stop_bands=[])


def run_enob_characterization(cfg: RunConfig, out_dir: Optional[Path] = None) -> StudyReport:
    """Before/after ENOB through the linearization-then-matching cascade, plus SFDR over frequency."""
    frontend = with_updates(cfg.frontend, rng_seed=cfg.seed)
    settings = with_updates(cfg.dataset, n_pairs=cfg.study.n_pairs)
    lin_corpus = build_corpus(cfg, NetKind.LINEARIZATION, frontend, settings)
    lin = train(build_net_for(cfg, NetKind.LINEARIZATION, 1), lin_corpus, cfg.train)
    report = StudyReport(name="enob", histories={"linearization": lin.history})
    report.nets = {"linearization": lin.net}
    n_ch = frontend.n_channels
    matching: Dict[int, Net] = {}

    def match_net_for(frequency: float) -> Optional[Net]:
        if n_ch < 2:
            return None
        zone = nyquist_zone(frequency, frontend.sample_rate)
        if zone not in matching:
            zone_cfg = zone_settings(settings, zone, frontend.sample_rate / 2)
            corpus = build_corpus(
                cfg, NetKind.MATCHING, frontend, zone_cfg, linearize=linearizer(lin.net)
            )
            match = train(build_net_for(cfg, NetKind.MATCHING, n_ch), corpus, cfg.train)
            name = "matching" if zone == 0 else f"matching_zone{zone}"
            report.histories[name] = match.history
            report.nets[name] = match.net
            matching[zone] = match.net
        return matching[zone]

    fs, total = frontend.sample_rate, n_ch * cfg.study.eval_length
    tones = ENOB_TONES.get(cfg.preset) or [0.5 * sum(_band(cfg))]
    for tone in tones:
        spec = WaveformSpec(f0=snap(tone, fs, total), amplitude=ENOB_AMPLITUDE)
        cs = sample_frontend(spec, frontend, total)
        after = cascade(lin.net, match_net_for(spec.f0), cs.channels)
        signal = SignalReport(f"tone_{tone / 1e9:g}GHz", spec, fs, cs.interleaved(), after)
        _sine_metrics(signal)
        report.signals.append(signal)
        logger.info(
            "ENOB measured",
            extra={
                "tone_hz": spec.f0,
                "alias_hz": alias_frequency(spec.f0, fs),
                "enob_before": signal.metrics["enob_bits"][0],
                "enob_after": signal.metrics["enob_bits"][1],
            },
        )

    rows = []
    for tone in sfdr_tones(fs, total, cfg.study.sfdr_tones):
        cs = sample_frontend(WaveformSpec(f0=tone, amplitude=ENOB_AMPLITUDE), frontend, total)
        after = cascade(lin.net, match_net_for(tone), cs.channels)
        rows.append(
            {
                "frequency_hz": tone,
                "sfdr_before_db": safe_metric(lambda: sfdr(cs.interleaved(), fs)),
                "sfdr_after_db": safe_metric(lambda: sfdr(after, fs)),
            }
        )
    report.extra["sfdr_sweep"] = rows
    if rows:
        report.extra["sfdr_band_average"] = {
            "before_db": float(np.nanmean([r["sfdr_before_db"] for r in rows])),
            "after_db": float(np.nanmean([r["sfdr_after_db"] for r in rows])),
        }
    if out_dir is not None:
        render.write_study(report, cfg, out_dir)
    return report


__all__ = [
    "HeldOutSignal",
    "SignalReport",
    "StudyReport",
    "SweepResult",
    "SweepRow",
    "cascade",
    "nyquist_zone",
    "run_enob_characterization",
    "run_linearization_study",
    "run_matching_study",
    "run_multichannel_sweep",
    "run_training",
    "zone_settings",
]
