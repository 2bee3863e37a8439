"""Command-line entrypoint and structured logging for padc."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextvars import ContextVar
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

from . import __version__
from .config import RunConfig, StudyConfig, resolve_config
from .dataset import save_corpus
from .engine import NetKind
from .errors import ConfigurationError, PadcError, ShapeError
from .formats import read_channelset, write_channelset, write_channelset_csv, write_manifest
from .frontend import ChannelSet, WaveformKind, WaveformSpec, sample_frontend, sample_linear
from .metrics import analyze
from .nets import recover
from .schema import with_updates

logger = logging.getLogger("padc.cli")
run_id_ctx: ContextVar[str | None] = ContextVar("run_id", default=None)

_RECORD_FIELDS = set(vars(logging.LogRecord("", 0, "", 0, "", (), None))) | {"message", "asctime"}


class JSONLogFormatter(logging.Formatter):
    """Simple JSON log formatter for structured logging."""

    def format(self, record: logging.LogRecord) -> str:  # noqa: D401
        data = {
            "level": record.levelname,
            "message": record.getMessage(),
            "logger": record.name,
            "time": self.formatTime(record, datefmt="%Y-%m-%dT%H:%M:%S%z"),
        }
        if record.exc_info:
            data["exc_info"] = self.formatException(record.exc_info)
        run_id = run_id_ctx.get()
        if run_id:
            data["run_id"] = run_id
        data.update({k: v for k, v in vars(record).items() if k not in _RECORD_FIELDS})
        return json.dumps(data, ensure_ascii=False, default=str)


def configure_logging(level: Optional[str] = None) -> None:
    handler = logging.StreamHandler(stream=sys.stdout)
    handler.setFormatter(JSONLogFormatter())
    root = logging.getLogger()
    root.setLevel((level or os.getenv("PADC_LOG_LEVEL", "INFO")).upper())
    root.handlers.clear()
    root.addHandler(handler)


# -- argument handling ---------------------------------------------------------


def parse_channels(text: str) -> List[int]:
    """``"2..4"`` or ``"2,3,8"`` to a list of channel counts."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            return list(range(int(lo), int(hi) + 1))
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A..B or a comma list, got {text!r}") from None


def _common(parser: argparse.ArgumentParser, out_required: bool = True) -> None:
    parser.add_argument("--preset", help="front-end preset: default-20gs or low-noise-100ms")
    parser.add_argument("--config", type=Path, help="INI config file layered over the preset")
    parser.add_argument("--seed", type=int, help="seed for corpora, net initialization and sampling")
    parser.add_argument("--pairs", type=int, help="number of training pairs to generate")
    parser.add_argument("--steps", type=int, help="total optimizer steps")
    parser.add_argument("--validation-every", type=int, help="steps between validation passes")
    parser.add_argument("--out", type=Path, required=out_required, help="output directory")
    parser.add_argument("--force", action="store_true", help="write into an existing output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="padc", description=__doc__)
    parser.add_argument("--version", action="version", version=f"padc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="build and persist a training corpus")
    _common(p)
    p.add_argument(
        "--kind",
        choices=[k.value for k in NetKind],
        default=NetKind.LINEARIZATION.value,
        help="which net the corpus trains",
    )
    p.add_argument("--linearizer", type=Path, help="linearization checkpoint for cascade matching corpora")
    p.add_argument("--csv", action="store_true", help="also write every pair as CSV")

    for name, kind in (("train-linearize", NetKind.LINEARIZATION), ("train-match", NetKind.MATCHING)):
        p = sub.add_parser(name, help=f"train a {kind.value} net")
        _common(p)
        p.add_argument("--corpus", type=Path, help="corpus directory written by `generate`")
        p.add_argument("--resume", action="store_true", help="continue from train_state.npz in --out")
        if kind is NetKind.MATCHING:
            p.add_argument("--linearizer", type=Path, help="linearization checkpoint for a cascade corpus")
        p.set_defaults(kind=kind.value)

    p = sub.add_parser("eval", help="recover a ChannelSet file with a checkpoint and report metrics")
    p.add_argument("--checkpoint", type=Path, required=True, help="net checkpoint (.padn) file")
    p.add_argument("--input", type=Path, required=True, help="ChannelSet (.padc) file")
    p.add_argument("--out", type=Path, help="directory for metrics and spectrum CSVs")
    p.add_argument("--force", action="store_true", help="write into an existing output directory")
    p.add_argument("--stft", action="store_true", help="add STFT CSVs")
    p.add_argument(
        "--stft-window", type=int, default=StudyConfig().stft_window, help="STFT segment length, samples"
    )
    p.add_argument("--stft-hop", type=int, default=StudyConfig().stft_hop, help="STFT hop, samples")

    p = sub.add_parser("sweep", help="multichannel expandability sweep")
    _common(p)
    p.add_argument("--parallel", type=int, help="worker processes (capped by PADC_THREADS)")
    p.add_argument("--channels", type=parse_channels, help="channel counts, e.g. 2..4")
    p.add_argument("--draws", type=int, help="mismatch draws per channel count")
    p.add_argument("--control", action="store_true", help="add a zero-mismatch control row per N")

    p = sub.add_parser("simulate", help="sample a waveform through the front-end into a ChannelSet")
    _common(p, out_required=True)
    p.add_argument(
        "--kind",
        choices=[k.value for k in WaveformKind],
        default=WaveformKind.SINE.value,
        help="test waveform",
    )
    p.add_argument("--f0", type=float, required=True, help="tone or chirp start frequency, Hz")
    p.add_argument("--f1", type=float, help="second tone or chirp end frequency, Hz")
    level = p.add_mutually_exclusive_group(required=True)
    level.add_argument("--amplitude", type=float, help="peak volts")
    level.add_argument("--power-dbm", type=float, help="power into 50 ohms")
    p.add_argument("--phase", type=float, default=0.0, help="start phase, radians")
    p.add_argument("--chirp-duration", type=float, help="LFM sweep duration, seconds")
    p.add_argument("--samples", type=int, default=10_000, help="samples per channel")
    p.add_argument("--linear", action="store_true", help="use the linear-equivalent modulator")
    p.add_argument("--csv", action="store_true", help="also write the ChannelSet as CSV")

    p = sub.add_parser("study", help="run a scripted desk-scale study")
    p.add_argument("study", choices=["linearization", "matching", "enob"], help="which study to run")
    _common(p)
    p.add_argument("--noisy", action="store_true", help="keep preset noise, jitter and quantization")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Dict[str, Any]]:
    overrides: Dict[str, Dict[str, Any]] = {}

    def put(section: str, key: str, value: Any) -> None:
        if value is not None:
            overrides.setdefault(section, {})[key] = value

    put("run", "out", str(args.out) if getattr(args, "out", None) else None)
    seed = getattr(args, "seed", None)
    put("run", "seed", seed)
    put("net", "rng_seed", seed)
    put("train", "rng_seed", seed)
    put("train", "total_steps", getattr(args, "steps", None))
    put("train", "validation_every", getattr(args, "validation_every", None))
    pairs = getattr(args, "pairs", None)
    if args.command == "study":
        put("study", "n_pairs", pairs)
        if args.noisy:
            put("study", "noise_free", False)
    elif args.command == "sweep":
        put("sweep", "n_pairs", pairs)
        put("sweep", "steps", args.steps)
        put("sweep", "parallel", args.parallel)
        put("sweep", "channels", args.channels)
        put("sweep", "draws", args.draws)
        if args.control:
            put("sweep", "include_control", True)
    else:
        put("dataset", "n_pairs", pairs)
    return overrides


def load_run_config(args: argparse.Namespace) -> RunConfig:
    overrides = _overrides(args)
    train = overrides.get("train", {})
    if "total_steps" in train and "validation_every" not in train:
        base = resolve_config(args.preset, args.config)
        if train["total_steps"] >= 1:
            train["validation_every"] = min(base.train.validation_every, train["total_steps"])
    return resolve_config(args.preset, args.config, overrides)


def prepare_out(path: Path, force: bool, resume: bool = False) -> Path:
    """Refuse to touch a non-empty directory unless forced (or resuming into it)."""
    if path.exists() and not path.is_dir():
        raise ConfigurationError(f"{path} exists and is not a directory")
    if path.exists() and any(path.iterdir()) and not (force or resume):
        raise ConfigurationError(f"{path} already exists; pass --force to write into it")
    path.mkdir(parents=True, exist_ok=True)
    return path


# -- commands ------------------------------------------------------------------


def cmd_generate(args: argparse.Namespace) -> int:
    from .experiments.common import build_corpus
    from .nets import linearizer
    from .training import load_checkpoint

    cfg = load_run_config(args)
    out = prepare_out(cfg.out_dir, args.force)
    kind = NetKind(args.kind)
    linearize = linearizer(load_checkpoint(args.linearizer)) if args.linearizer else None
    corpus = build_corpus(cfg, kind, linearize=linearize)
    corpus.meta["run"] = cfg.manifest()
    save_corpus(corpus, out, csv=args.csv)
    logger.info("Corpus written", extra={"out": str(out), "pairs": len(corpus.pairs)})
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    from .experiments import run_training

    cfg = load_run_config(args)
    out = prepare_out(cfg.out_dir, args.force, resume=args.resume)
    result = run_training(
        cfg,
        NetKind(args.kind),
        out,
        corpus_dir=args.corpus,
        linearizer_path=getattr(args, "linearizer", None),
        resume=args.resume,
    )
    last = result.history.records[-1] if result.history.records else None
    if last is not None:
        print(f"step {last.step}: train_loss {last.train_loss:.6g} valid_loss {last.valid_loss:.6g} "
              f"mean_valid_sinad_db {last.mean_valid_sinad_db:.2f}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    from .experiments.render import write_metrics
    from .frontend import interleave_samples
    from .training import load_checkpoint

    net = load_checkpoint(args.checkpoint)
    cs = read_channelset(args.input)
    if net.n_inputs == cs.n_channels:
        after = recover(net, cs.channels)
    elif net.n_inputs == 1:
        after = interleave_samples([recover(net, [c]) for c in cs.channels])
    else:
        raise ShapeError(f"checkpoint takes {net.n_inputs} channels, input holds {cs.n_channels}")
    window = args.stft_window if args.stft else None
    before_report = analyze(cs.interleaved(), cs.sample_rate, stft_window=window, stft_hop=args.stft_hop)
    after_report = analyze(after, cs.sample_rate, stft_window=window, stft_hop=args.stft_hop)
    for label, report in (("before", before_report), ("after", after_report)):
        print(
            f"{label}: SINAD {report.sinad_db:.2f} dB, ENOB {report.enob_bits:.2f} bits, "
            f"SFDR {report.sfdr_db:.2f} dB, fundamental {report.fundamental_hz:.6g} Hz"
        )
    if args.out is not None:
        out = prepare_out(args.out, args.force)
        write_metrics(before_report, after_report, out)
        write_channelset(ChannelSet(channels=[after], sample_rate=cs.sample_rate), out / "recovered.padc")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    from .experiments import run_multichannel_sweep

    cfg = load_run_config(args)
    out = prepare_out(cfg.out_dir, args.force)
    result = run_multichannel_sweep(cfg, out)
    print(f"{len(result.rows)} rows, {len(result.failures)} failed, flatness {result.flatness_db():.2f} dB")
    return 2 if result.failures else 0


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = load_run_config(args)
    out = prepare_out(cfg.out_dir, args.force)
    spec = WaveformSpec(
        kind=WaveformKind(args.kind),
        f0=args.f0,
        f1=args.f1,
        amplitude=args.amplitude,
        power_dbm=args.power_dbm,
        phase=args.phase,
        chirp_duration=args.chirp_duration,
    )
    frontend = with_updates(cfg.frontend, rng_seed=cfg.seed)
    sampler = sample_linear if args.linear else sample_frontend
    cs = sampler(spec, frontend, frontend.n_channels * args.samples)
    write_channelset(cs, out / "signal.padc")
    if args.csv:
        write_channelset_csv(cs, out / "signal.csv")
    write_manifest(
        out / "manifest.json",
        {"kind": "simulate", "spec": spec.model_dump(mode="json"), "linear": args.linear, **cfg.manifest()},
    )
    logger.info("Signal written", extra={"out": str(out), "channels": cs.n_channels, "length": cs.length})
    return 0


def cmd_study(args: argparse.Namespace) -> int:
    from .experiments import run_enob_characterization, run_linearization_study, run_matching_study

    runners: Dict[str, Callable] = {
        "linearization": run_linearization_study,
        "matching": run_matching_study,
        "enob": run_enob_characterization,
    }
    cfg = load_run_config(args)
    out = prepare_out(cfg.out_dir, args.force)
    report = runners[args.study](cfg, out)
    for signal in report.signals:
        for metric, (before, after) in signal.metrics.items():
            print(f"{signal.name} {metric}: {before:.2f} -> {after:.2f}")
    return 0


COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    "generate": cmd_generate,
    "train-linearize": cmd_train,
    "train-match": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "study": cmd_study,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging()
    token = run_id_ctx.set(f"{args.command}-{os.urandom(4).hex()}")
    try:
        return COMMANDS[args.command](args)
    except PadcError as exc:
        logger.error("Command failed", extra={"command": args.command, "error": str(exc)})
        print(f"padc {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        logger.error("I/O failure", extra={"command": args.command, "error": str(exc)})
        print(f"padc {args.command}: {exc}", file=sys.stderr)
        return 3
    finally:
        run_id_ctx.reset(token)


if __name__ == "__main__":
    sys.exit(main())
