"""Multichannel expandability sweep: N = 2..8 channels over seeded mismatch draws."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from ..config import REFERENCE_RATE, RunConfig, SweepConfig
from ..engine import NetKind
from ..frontend import MismatchProfile
from ..limits import effective_parallelism
from ..schema import config_hash, with_updates
from ..training import evaluate, train
from . import render
from .common import build_corpus, build_net_for, mean_input_sinad, study_frontend

logger = logging.getLogger("padc.experiments")

CONTROL_DRAW = -1


@dataclass
class SweepRow:
    n_channels: int
    draw_index: int
    delays: List[float]
    gains: List[float]
    input_sinad_db: float = float("nan")
    final_mean_valid_sinad_db: float = float("nan")
    steps: int = 0
    status: str = "finished"
    error: Optional[str] = None

    @property
    def improvement_db(self) -> float:
        return self.final_mean_valid_sinad_db - self.input_sinad_db


@dataclass
class SweepResult:
    rows: List[SweepRow] = field(default_factory=list)

    @property
    def failures(self) -> List[SweepRow]:
        return [row for row in self.rows if row.status != "finished"]

    def counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for row in self.rows:
            counts[row.status] = counts.get(row.status, 0) + 1
        return counts

    def to_frame(self) -> pd.DataFrame:
        records = []
        for row in self.rows:
            record = asdict(row)
            record["delays"] = ";".join(f"{d:.6g}" for d in row.delays)
            record["gains"] = ";".join(f"{g:.6g}" for g in row.gains)
            records.append(record)
        return pd.DataFrame(records, columns=[f.name for f in fields(SweepRow)])

    def per_channel_means(self) -> pd.DataFrame:
        """Mean input and recovered SINAD per channel count over finished mismatch draws."""
        frame = self.to_frame()
        frame = frame[(frame["status"] == "finished") & (frame["draw_index"] != CONTROL_DRAW)]
        return (
            frame.groupby("n_channels")[["input_sinad_db", "final_mean_valid_sinad_db"]]
            .mean()
            .reset_index()
        )

    def flatness_db(self) -> float:
        means = self.per_channel_means()["final_mean_valid_sinad_db"]
        return float(means.max() - means.min()) if len(means) else float("nan")


def draw_mismatch(
    sweep: SweepConfig, n_channels: int, draw_index: int, seed: int, sample_rate: float
) -> List[MismatchProfile]:
    """Channel 0 is the reference; the others get seeded delay and gain errors."""
    if draw_index == CONTROL_DRAW:
        return [MismatchProfile() for _ in range(n_channels)]
    rng = np.random.default_rng([seed, n_channels, draw_index])
    scale = REFERENCE_RATE / sample_rate
    profiles = [MismatchProfile()]
    for _ in range(1, n_channels):
        delay = rng.uniform(sweep.delay_min, sweep.delay_max) * scale
        gain = rng.uniform(1.0 - sweep.gain_spread, 1.0 + sweep.gain_spread)
        profiles.append(MismatchProfile(delay=float(delay), gain=float(gain)))
    return profiles


def sweep_jobs(sweep: SweepConfig) -> List[Tuple[int, int]]:
    draws = list(range(sweep.draws))
    if sweep.include_control:
        draws = [CONTROL_DRAW] + draws
    return [(n, d) for n in sorted(set(sweep.channels)) for d in draws]


def run_sweep_row(cfg: RunConfig, n_channels: int, draw_index: int) -> SweepRow:
    """Train one matching net; failures are reported in the row, never raised."""
    base = study_frontend(cfg, noise_free=cfg.sweep.noise_free)
    profiles = draw_mismatch(cfg.sweep, n_channels, draw_index, cfg.seed, base.sample_rate)
    row = SweepRow(
        n_channels=n_channels,
        draw_index=draw_index,
        delays=[p.delay for p in profiles],
        gains=[p.gain for p in profiles],
    )
    steps = cfg.sweep.steps or cfg.train.total_steps
    try:
        frontend = with_updates(base, n_channels=n_channels, mismatches=[p.model_dump() for p in profiles])
        settings = with_updates(
            cfg.dataset, n_pairs=cfg.sweep.n_pairs, length=cfg.sweep.total_length // n_channels
        )
        corpus = build_corpus(cfg, NetKind.MATCHING, frontend, settings)
        row.input_sinad_db = mean_input_sinad(corpus)
        train_cfg = with_updates(
            cfg.train, total_steps=steps, validation_every=min(cfg.train.validation_every, steps)
        )
        result = train(build_net_for(cfg, NetKind.MATCHING, n_channels), corpus, train_cfg)
        _, row.final_mean_valid_sinad_db = evaluate(result.net, corpus)
        row.steps = result.state.step
    except Exception as exc:
        logger.exception("Sweep row failed", extra={"n_channels": n_channels, "draw_index": draw_index})
        row.status, row.error = "error", f"{type(exc).__name__}: {exc}"
    return row


def run_multichannel_sweep(cfg: RunConfig, out_dir: Optional[Path] = None) -> SweepResult:
    """Run every (N, draw) row, in parallel up to ``PADC_THREADS``; rows come back sorted."""
    sweep_id = config_hash(cfg)
    jobs = sweep_jobs(cfg.sweep)
    workers = effective_parallelism(cfg.sweep.parallel)
    logger.info("Sweep started", extra={"rows": len(jobs), "workers": workers, "sweep_id": sweep_id})

    def settle(row: SweepRow) -> SweepRow:
        logger.info(
            "Sweep row done",
            extra={
                "n_channels": row.n_channels,
                "draw_index": row.draw_index,
                "status": row.status,
                "sinad_db": row.final_mean_valid_sinad_db,
            },
        )
        return row

    rows: List[SweepRow] = []
    if workers == 1:
        for n, d in jobs:
            rows.append(settle(run_sweep_row(cfg, n, d)))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(run_sweep_row, cfg, n, d): (n, d) for n, d in jobs}
            for future in as_completed(futures):
                n, d = futures[future]
                try:
                    row = future.result()
                except Exception as exc:
                    row = SweepRow(n, d, [], [], status="error", error=f"{type(exc).__name__}: {exc}")
                rows.append(settle(row))

    result = SweepResult(sorted(rows, key=lambda r: (r.n_channels, r.draw_index)))
    logger.info("Sweep finished", extra={"sweep_id": sweep_id, **result.counts()})
    if out_dir is not None:
        render.write_sweep(result, cfg, out_dir)
    return result
