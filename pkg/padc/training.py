"""Training loop: L1 loss, seeded pair sampling, validation cadence and resumable state."""
from __future__ import annotations

import json
import logging
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import Field, model_validator

from .dataset import Corpus, DataPair
from .engine import Net, OptimizerKind, OptimizerState, backward, forward, load_net, opt_step, save_net
from .errors import (
    AmbiguityError,
    ConfigurationError,
    FormatError,
    ShapeError,
    TrainingDivergedError,
)
from .metrics import sinad
from .nets import fold_scale, recover
from .schema import PadcModel

logger = logging.getLogger("padc.training")

HISTORY_COLUMNS = ["step", "train_loss", "valid_loss", "mean_valid_sinad_db"]


class TrainConfig(PadcModel):
    total_steps: int = Field(default=50_000, ge=1)
    validation_every: int = Field(default=1000, ge=1)
    learning_rate: float = Field(default=1e-3, gt=0.0)
    optimizer: OptimizerKind = OptimizerKind.ADAM
    rng_seed: int = 0
    batch_size: int = Field(default=1, ge=1)
    sequence_length: Optional[int] = Field(default=None, ge=1)  # net output samples per pair
    target_rms: float = Field(default=0.25, gt=0.0)
    normalize: bool = True

    @model_validator(mode="after")
    def _check(self) -> "TrainConfig":
        if self.validation_every > self.total_steps:
            raise ValueError("validation_every exceeds total_steps")
        return self


def l1_loss(output, reference) -> float:
    output, reference = np.asarray(output, dtype=np.float64), np.asarray(reference, dtype=np.float64)
    if output.shape != reference.shape:
        raise ShapeError(f"output {output.shape} and reference {reference.shape} differ")
    return float(np.mean(np.abs(output - reference)))


def l1_grad(output: np.ndarray, reference: np.ndarray) -> np.ndarray:
    return np.sign(output - reference) / output.shape[0]


@dataclass
class HistoryRecord:
    step: int
    train_loss: float
    valid_loss: float
    mean_valid_sinad_db: float


@dataclass
class TrainHistory:
    records: List[HistoryRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def append(self, record: HistoryRecord) -> None:
        self.records.append(record)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([vars(r) for r in self.records], columns=HISTORY_COLUMNS)

    def write_csv(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.17g")

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "TrainHistory":
        return cls(
            [
                HistoryRecord(
                    int(row.step),
                    float(row.train_loss),
                    float(row.valid_loss),
                    float(row.mean_valid_sinad_db),
                )
                for row in frame.itertuples(index=False)
            ]
        )

    @classmethod
    def read_csv(cls, path: Path) -> "TrainHistory":
        return cls.from_frame(pd.read_csv(path))


@dataclass
class TrainState:
    """Everything needed to continue a run bit for bit; params live in the normalized domain."""

    params: Dict[str, np.ndarray]
    optimizer: OptimizerState
    scale: float
    step: int = 0
    history: TrainHistory = field(default_factory=TrainHistory)
    best_params: Dict[str, np.ndarray] = field(default_factory=dict)
    best_loss: float = float("inf")
    running_sum: float = 0.0
    running_count: int = 0

    def save(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        arrays = {f"param/{k}": v for k, v in self.params.items()}
        arrays.update({f"best/{k}": v for k, v in self.best_params.items()})
        arrays.update({f"opt/{k}": v for k, v in self.optimizer.arrays().items()})
        frame = self.history.to_frame()
        arrays["history"] = frame[HISTORY_COLUMNS].to_numpy(dtype=np.float64).reshape(-1, 4)
        meta = {
            "step": self.step,
            "scale": self.scale,
            "best_loss": self.best_loss,
            "running_sum": self.running_sum,
            "running_count": self.running_count,
            "optimizer": {
                "algorithm": self.optimizer.algorithm.value,
                "learning_rate": self.optimizer.learning_rate,
                "beta1": self.optimizer.beta1,
                "beta2": self.optimizer.beta2,
                "eps": self.optimizer.eps,
                "step": self.optimizer.step,
            },
        }
        arrays["meta"] = np.array(json.dumps(meta))
        with path.open("wb") as handle:
            np.savez(handle, **arrays)

    @classmethod
    def load(cls, path: Path) -> "TrainState":
        try:
            with np.load(path, allow_pickle=False) as archive:
                data = {name: archive[name] for name in archive.files}
            return cls._from_arrays(data)
        except (ValueError, zipfile.BadZipFile, EOFError, KeyError, TypeError) as exc:
            raise FormatError(f"{path.name} is not a training state archive: {exc}", 0) from exc

    @classmethod
    def _from_arrays(cls, data: Dict[str, np.ndarray]) -> "TrainState":
        meta = json.loads(str(data["meta"]))

        def group(prefix: str) -> Dict[str, np.ndarray]:
            return {k[len(prefix) :]: np.array(v) for k, v in data.items() if k.startswith(prefix)}

        opt_meta = meta["optimizer"]
        optimizer = OptimizerState(
            algorithm=opt_meta["algorithm"],
            learning_rate=opt_meta["learning_rate"],
            beta1=opt_meta["beta1"],
            beta2=opt_meta["beta2"],
            eps=opt_meta["eps"],
            step=opt_meta["step"],
            first=group("opt/first/"),
            second=group("opt/second/"),
        )
        history = TrainHistory.from_frame(pd.DataFrame(data["history"], columns=HISTORY_COLUMNS))
        return cls(
            params=group("param/"),
            optimizer=optimizer,
            scale=meta["scale"],
            step=meta["step"],
            history=history,
            best_params=group("best/"),
            best_loss=meta["best_loss"],
            running_sum=meta["running_sum"],
            running_count=meta["running_count"],
        )


@dataclass
class TrainResult:
    net: Net  # final parameters, raw units
    best_net: Net  # lowest validation loss seen, raw units
    history: TrainHistory
    state: TrainState


def corpus_scale(corpus: Corpus, target_rms: float = 0.25) -> float:
    """Factor that brings the RMS of the training originals to ``target_rms``."""
    samples = np.concatenate([c for i in corpus.train for c in corpus.pairs[i].original])
    rms = float(np.sqrt(np.mean(samples**2)))
    if not np.isfinite(rms) or rms == 0.0:
        raise ConfigurationError("training originals have zero or non-finite RMS")
    return target_rms / rms


def _check_compatible(net: Net, corpus: Corpus, cfg: TrainConfig) -> None:
    if not corpus.train:
        raise ConfigurationError("corpus has no training pairs")
    if corpus.n_inputs != net.n_inputs:
        raise ConfigurationError(f"corpus pairs have {corpus.n_inputs} channels, net takes {net.n_inputs}")
    min_length = 2 * net.receptive_radius() + 1
    for pair in corpus.pairs:
        if cfg.sequence_length is not None and len(pair.reference) != cfg.sequence_length:
            raise ConfigurationError(
                f"pair length {len(pair.reference)} differs from sequence_length {cfg.sequence_length}"
            )
        if len(pair.reference) < min_length:
            raise ConfigurationError(f"pairs shorter than the receptive field ({min_length} samples)")


def _validate(net: Net, pairs: List[DataPair], scale: float) -> tuple[float, float]:
    losses, sinads = [], []
    for pair in pairs:
        out = recover(net, [c * scale for c in pair.original]) / scale
        losses.append(l1_loss(out, pair.reference))
        try:
            sinads.append(sinad(out, pair.sample_rate))
        except (AmbiguityError, ShapeError):
            sinads.append(float("nan"))
    valid_loss = float(np.mean(losses)) if losses else float("nan")
    finite = np.array([s for s in sinads if np.isfinite(s)])
    return valid_loss, float(finite.mean()) if finite.size else float("nan")


def evaluate(net: Net, corpus: Corpus) -> tuple[float, float]:
    """Loss and mean SINAD of a raw-unit ``net`` over the validation split (train if empty)."""
    return _validate(net, [corpus.pairs[i] for i in corpus.valid or corpus.train], 1.0)


def _snapshot(params: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    return {k: v.copy() for k, v in params.items()}


def _with_params(net: Net, params: Dict[str, np.ndarray]) -> Net:
    out = net.copy()
    out.load_parameters(params)
    return out


def new_train_state(net: Net, corpus: Corpus, cfg: TrainConfig) -> TrainState:
    scale = corpus_scale(corpus, cfg.target_rms) if cfg.normalize else 1.0
    params = _snapshot(fold_scale(net, 1.0 / scale).parameters())
    optimizer = OptimizerState.create(cfg.optimizer, params, learning_rate=cfg.learning_rate)
    return TrainState(params=params, optimizer=optimizer, scale=scale, best_params=_snapshot(params))


def train(
    net: Net,
    corpus: Corpus,
    cfg: TrainConfig,
    state: Optional[TrainState] = None,
    on_validation: Optional[Callable[[TrainState], None]] = None,
) -> TrainResult:
    """Train a copy of ``net`` on ``corpus``; pass ``state`` to continue an earlier run."""
    _check_compatible(net, corpus, cfg)
    state = state or new_train_state(net, corpus, cfg)
    working = net.copy()
    working.load_parameters(state.params)
    state.params = working.parameters()
    scale = state.scale
    train_pairs = [corpus.pairs[i] for i in corpus.train]
    valid_pairs = [corpus.pairs[i] for i in corpus.valid]
    logger.info(
        "Training started",
        extra={
            "kind": net.kind.value,
            "from_step": state.step,
            "total_steps": cfg.total_steps,
            "train_pairs": len(train_pairs),
            "valid_pairs": len(valid_pairs),
            "scale": scale,
        },
    )

    for step in range(state.step + 1, cfg.total_steps + 1):
        picks = np.random.default_rng([cfg.rng_seed, step]).integers(0, len(train_pairs), cfg.batch_size)
        grads: Dict[str, np.ndarray] = {}
        step_loss = 0.0
        for pick in picks:
            pair = train_pairs[int(pick)]
            xs = [c * scale for c in pair.original]
            reference = pair.reference * scale
            out = forward(working, xs)
            step_loss += l1_loss(out, reference)
            for name, g in backward(working, xs, l1_grad(out, reference)).items():
                grads[name] = grads[name] + g if name in grads else g
        if cfg.batch_size > 1:
            grads = {name: g / cfg.batch_size for name, g in grads.items()}
        opt_step(state.optimizer, state.params, grads)
        working.clear_cache()
        state.step = step
        step_loss /= cfg.batch_size * scale

        if not np.isfinite(step_loss) or not all(np.all(np.isfinite(p)) for p in state.params.values()):
            logger.error("Training diverged", extra={"step": step, "loss": step_loss})
            raise TrainingDivergedError(
                f"non-finite loss or parameters at step {step}", history=state.history
            )
        state.running_sum += step_loss
        state.running_count += 1

        if step % cfg.validation_every == 0:
            valid_loss, mean_sinad = _validate(working, valid_pairs, scale)
            record = HistoryRecord(step, state.running_sum / state.running_count, valid_loss, mean_sinad)
            state.history.append(record)
            state.running_sum, state.running_count = 0.0, 0
            criterion = valid_loss if valid_pairs else record.train_loss
            if criterion < state.best_loss:
                state.best_loss = criterion
                state.best_params = _snapshot(state.params)
            logger.info("Validation", extra=vars(record))
            if on_validation is not None:
                on_validation(state)

    state.params = _snapshot(state.params)
    result = TrainResult(
        net=fold_scale(_with_params(net, state.params), scale),
        best_net=fold_scale(_with_params(net, state.best_params), scale),
        history=state.history,
        state=state,
    )
    logger.info("Training finished", extra={"steps": state.step, "records": len(state.history)})
    return result


def save_checkpoint(net: Net, path: Path) -> None:
    save_net(net, path)
    logger.info("Checkpoint saved", extra={"path": str(path), "kind": net.kind.value})


def load_checkpoint(path: Path) -> Net:
    return load_net(path)
