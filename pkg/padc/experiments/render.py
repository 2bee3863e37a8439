"""Rendering utilities: study results to CSV, JSON manifests and an HTML summary."""
from __future__ import annotations

import logging
from pathlib import Path
from typing import TYPE_CHECKING, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
import scipy
from jinja2 import Environment, FileSystemLoader, select_autoescape

from .. import __version__
from ..config import RunConfig
from ..dataset import Corpus
from ..formats import write_manifest
from ..metrics import MetricsReport, power_spectrum, stft
from ..schema import config_hash
from ..training import TrainResult, save_checkpoint

if TYPE_CHECKING:
    from . import StudyReport
    from .sweep import SweepResult

logger = logging.getLogger("padc.experiments")

WAVEFORM_SAMPLES = 512
FLOAT_FORMAT = "%.10g"
SUMMARY_COLUMNS = ["signal", "frequency_hz", "metric", "before", "after", "improvement"]

TABLE_STYLE = """
<style>
body { font-family: sans-serif; margin: 2rem; color: #111827; }
.meta { color: #6b7280; font-size: 0.875rem; }
.table-card { margin-top: 1.5rem; }
.table-card h3 { font-weight: 600; margin-bottom: 0.5rem; }
.table-card table { width: 100%; border-collapse: collapse; table-layout: fixed; }
.table-card th, .table-card td { border: 1px solid #e5e7eb; padding: 0.5rem; font-size: 0.875rem; }
.table-card tbody tr:nth-child(odd) { background-color: #f9fafb; }
</style>
"""

_env = Environment(
    loader=FileSystemLoader(Path(__file__).parent / "templates"),
    autoescape=select_autoescape(["html"]),
)


def versions() -> Dict[str, str]:
    return {
        "padc": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
    }


def base_manifest(cfg: RunConfig, kind: str) -> dict:
    return {"kind": kind, "versions": versions(), "seed": cfg.seed, **cfg.manifest()}


def render_report(cfg: RunConfig, title: str, tables: List[Tuple[str, pd.DataFrame]], notes=()) -> str:
    template = _env.get_template("report.html")
    return template.render(
        title=title,
        version=__version__,
        preset=cfg.preset,
        config_hash=config_hash(cfg),
        notes=list(notes),
        table_style=TABLE_STYLE,
        tables=[
            {"caption": caption, "html": frame.to_html(index=False, float_format=lambda v: f"{v:.4g}")}
            for caption, frame in tables
        ],
    )


def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def write_training(result: TrainResult, cfg: RunConfig, out_dir: Path, corpus: Corpus) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(result.net, out_dir / "net.padn")
    save_checkpoint(result.best_net, out_dir / "best.padn")
    result.history.write_csv(out_dir / "history.csv")
    manifest = base_manifest(cfg, f"train-{result.net.kind.value}")
    manifest.update(
        {
            "corpus": {
                "kind": corpus.kind,
                "n_pairs": len(corpus.pairs),
                "train": len(corpus.train),
                "valid": len(corpus.valid),
                "rng_seed": corpus.rng_seed,
                "config_hash": corpus.meta.get("config_hash"),
            },
            "steps": result.state.step,
            "input_scale": result.state.scale,
            "best_loss": result.state.best_loss,
            "parameters": result.net.parameter_count(),
        }
    )
    write_manifest(out_dir / "manifest.json", manifest)
    logger.info("Training outputs written", extra={"out": str(out_dir)})


def summary_frame(report: "StudyReport") -> pd.DataFrame:
    rows = []
    for signal in report.signals:
        for metric, (before, after) in signal.metrics.items():
            rows.append(
                {
                    "signal": signal.name,
                    "frequency_hz": signal.spec.f0,
                    "metric": metric,
                    "before": before,
                    "after": after,
                    "improvement": after - before,
                }
            )
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def _signal_frames(signal) -> Dict[str, pd.DataFrame]:
    n = min(WAVEFORM_SAMPLES, len(signal.before))
    frames = {
        "waveform": pd.DataFrame(
            {
                "time_s": np.arange(n) / signal.sample_rate,
                "before": signal.before[:n],
                "after": signal.after[:n],
            }
        )
    }
    for label, x in (("before", signal.before), ("after", signal.after)):
        frames[f"spectrum_{label}"] = power_spectrum(x, signal.sample_rate, "blackman").to_frame()
        if signal.stft_window is not None:
            grid = stft(x, signal.sample_rate, signal.stft_window, signal.stft_hop)
            frames[f"stft_{label}"] = grid.to_frame()
    return frames


def write_study(report: "StudyReport", cfg: RunConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    tables: List[Tuple[str, pd.DataFrame]] = []

    summary = summary_frame(report)
    _write_csv(summary, out_dir / "summary.csv")
    tables.append(("Before / after metrics", summary))

    for name, history in report.histories.items():
        history.write_csv(out_dir / f"history_{name}.csv")
        tables.append((f"Training history: {name}", history.to_frame()))
    for name, net in report.nets.items():
        save_checkpoint(net, out_dir / f"{name}.padn")
    for signal in report.signals:
        for label, frame in _signal_frames(signal).items():
            _write_csv(frame, out_dir / f"{signal.name}_{label}.csv")

    extra: Dict[str, object] = {}
    for key, value in report.extra.items():
        if isinstance(value, list):
            frame = pd.DataFrame(value)
            _write_csv(frame, out_dir / f"{key}.csv")
            tables.append((key.replace("_", " ").capitalize(), frame))
        else:
            extra[key] = value

    manifest = base_manifest(cfg, f"study-{report.name}")
    manifest["results"] = {signal.name: signal.flat_metrics() for signal in report.signals}
    manifest["extra"] = extra
    write_manifest(out_dir / "manifest.json", manifest)
    html = render_report(cfg, f"{report.name.capitalize()} study", tables)
    (out_dir / "report.html").write_text(html, encoding="utf-8")
    logger.info("Study outputs written", extra={"study": report.name, "out": str(out_dir)})


def write_sweep(result: "SweepResult", cfg: RunConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = result.to_frame()
    means = result.per_channel_means()
    _write_csv(rows, out_dir / "sweep.csv")
    _write_csv(means, out_dir / "sweep_by_channels.csv")
    manifest = base_manifest(cfg, "sweep")
    manifest.update(
        {
            "rows": len(result.rows),
            "failures": len(result.failures),
            "flatness_db": result.flatness_db(),
        }
    )
    write_manifest(out_dir / "manifest.json", manifest)
    notes: List[str] = []
    if result.failures:
        notes.append(f"{len(result.failures)} row(s) failed; see the error column.")
    html = render_report(
        cfg,
        "Multichannel sweep",
        [("Mean SINAD by channel count", means), ("All rows", rows)],
        notes,
    )
    (out_dir / "report.html").write_text(html, encoding="utf-8")
    logger.info("Sweep outputs written", extra={"out": str(out_dir), "rows": len(result.rows)})


def write_metrics(before: MetricsReport, after: Optional[MetricsReport], out_dir: Path) -> pd.DataFrame:
    """Write an eval summary with one row per stage plus the spectra (and STFTs) behind it."""
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for label, report in (("before", before), ("after", after)):
        if report is None:
            continue
        rows.append({"stage": label, **report.summary()})
        _write_csv(report.spectrum.to_frame(), out_dir / f"spectrum_{label}.csv")
        if report.stft is not None:
            _write_csv(report.stft.to_frame(), out_dir / f"stft_{label}.csv")
    frame = pd.DataFrame(rows)
    _write_csv(frame, out_dir / "metrics.csv")
    return frame
