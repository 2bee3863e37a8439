"""Run configuration: named presets, INI files and command-line overrides.

Precedence, lowest first: preset, config file, CLI flags. A config file holds
flat ``key = value`` lines under ``[frontend]``, ``[dataset]``, ``[net]``,
``[train]``, ``[sweep]``, ``[study]`` and ``[run]``. Values are read as JSON when
they parse (numbers, booleans, lists) and as plain strings otherwise; dotted
keys such as ``mzm.v_pi`` address nested fields.
"""
from __future__ import annotations

import configparser
import copy
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import Field, model_validator

from .dataset import CorpusConfig
from .errors import ConfigurationError
from .frontend import FrontEndConfig
from .nets import NetSpec
from .schema import PadcModel, config_hash
from .training import TrainConfig

logger = logging.getLogger("padc.config")

SECTIONS = ("frontend", "dataset", "net", "train", "sweep", "study", "run")
DEFAULT_PRESET = "default-20gs"
REFERENCE_RATE = 20e9


class SweepConfig(PadcModel):
    """Multichannel expandability protocol; delays are quoted at ``REFERENCE_RATE``."""

    channels: List[int] = Field(default_factory=lambda: list(range(2, 9)))
    draws: int = Field(default=10, ge=1)
    delay_min: float = 3.5e-12
    delay_max: float = 10.5e-12
    gain_spread: float = Field(default=0.05, ge=0.0, lt=1.0)
    include_control: bool = False
    noise_free: bool = False
    total_length: int = Field(default=1680, ge=64)
    n_pairs: int = Field(default=64, ge=2)
    steps: Optional[int] = Field(default=None, ge=1)
    parallel: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _check(self) -> "SweepConfig":
        if not self.channels or any(n < 2 for n in self.channels):
            raise ValueError("sweep channel counts must all be >= 2")
        if self.delay_max < self.delay_min or self.delay_min < 0:
            raise ValueError("delay range is empty or negative")
        for n in self.channels:
            if self.total_length % n:
                raise ValueError(f"total_length {self.total_length} is not divisible by {n} channels")
        return self


class StudyConfig(PadcModel):
    """Desk-scale study knobs shared by the linearization, matching and ENOB runs."""

    n_pairs: int = Field(default=64, ge=2)
    noise_free: bool = True
    eval_length: int = Field(default=10_000, ge=64)  # per-channel samples of held-out signals
    stft_window: int = Field(default=256, ge=8)
    stft_hop: int = Field(default=64, ge=1)
    sfdr_tones: int = Field(default=8, ge=0)


class RunConfig(PadcModel):
    preset: str = DEFAULT_PRESET
    frontend: FrontEndConfig = FrontEndConfig()
    dataset: CorpusConfig = CorpusConfig()
    net: NetSpec = NetSpec()
    train: TrainConfig = TrainConfig()
    sweep: SweepConfig = SweepConfig()
    study: StudyConfig = StudyConfig()
    # excluded from manifests and the config hash
    out: Optional[str] = Field(default=None, exclude=True)
    seed: int = 0

    @property
    def out_dir(self) -> Path:
        return Path(self.out or "padc-out")

    def manifest(self) -> Dict[str, Any]:
        return {"config": self.model_dump(mode="json"), "config_hash": config_hash(self)}


def _preset_default_20gs() -> Dict[str, Dict[str, Any]]:
    return {
        "frontend": {
            "sample_rate": 20e9,
            "n_channels": 2,
            "mzm": {"v_pi": 3.5, "bias_error": 0.0, "extinction": 1.0},
            "mismatches": [
                {"delay": 0.0, "gain": 1.0, "offset": 0.0},
                {"delay": 7e-12, "gain": 0.98, "offset": 0.0},
            ],
            "noise_sigma": 1.3e-3,
            "jitter_sigma": 26.5e-15,
            "quant_bits": 8,
            "full_scale": 0.5,
        },
        "dataset": {
            "n_pairs": 417,
            "valid_fraction": 50 / 417,
            "f_min": 0.0,
            "f_max": 10e9,
            "stop_bands": [[4e9, 6e9]],
            "amp_dbm_min": -2.0,
            "amp_dbm_max": 15.0,
        },
    }


def _preset_low_noise_100ms() -> Dict[str, Dict[str, Any]]:
    return {
        "frontend": {
            "sample_rate": 100e6,
            "n_channels": 1,
            "mzm": {"v_pi": 3.5, "bias_error": 0.0, "extinction": 1.0},
            "noise_sigma": 4.3e-4,
            "jitter_sigma": 2e-15,
            "quant_bits": 12,
            "full_scale": 0.5,
        },
        "dataset": {
            "n_pairs": 274,
            "valid_fraction": 30 / 274,
            "f_min": 400e6,
            "f_max": 450e6,
            "stop_bands": [],
            "amp_dbm_min": -2.0,
            "amp_dbm_max": 15.0,
        },
    }


PRESETS = {
    "default-20gs": _preset_default_20gs,
    "low-noise-100ms": _preset_low_noise_100ms,
}


def preset_sections(name: str) -> Dict[str, Dict[str, Any]]:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _set_dotted(section: Dict[str, Any], key: str, value: Any) -> None:
    parts = key.split(".")
    target = section
    for part in parts[:-1]:
        target = target.setdefault(part, {})
        if not isinstance(target, dict):
            raise ConfigurationError(f"{key}: {part} is not a nested table")
    target[parts[-1]] = value


def load_ini(path: Path) -> Dict[str, Dict[str, Any]]:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with path.open(encoding="utf-8") as handle:
            parser.read_file(handle)
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}") from exc
    sections: Dict[str, Dict[str, Any]] = {}
    for name in parser.sections():
        if name not in SECTIONS:
            raise ConfigurationError(f"unknown config section [{name}] in {path}")
        table: Dict[str, Any] = {}
        for key, raw in parser.items(name):
            _set_dotted(table, key, _parse_value(raw))
        sections[name] = table
    return sections


def _merge(base: Dict[str, Any], layer: Dict[str, Any]) -> Dict[str, Any]:
    out = copy.deepcopy(base)
    for key, value in layer.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _apply_layer(merged: Dict[str, Dict[str, Any]], layer: Dict[str, Dict[str, Any]]) -> None:
    for name, table in layer.items():
        current = merged.setdefault(name, {})
        if name == "frontend" and "n_channels" in table and "mismatches" not in table:
            current.pop("mismatches", None)
        merged[name] = _merge(current, table)


def resolve_config(
    preset: Optional[str] = None,
    config_path: Optional[Path] = None,
    overrides: Optional[Dict[str, Dict[str, Any]]] = None,
) -> RunConfig:
    """Merge preset, config file and overrides into a validated ``RunConfig``."""
    file_sections = load_ini(config_path) if config_path is not None else {}
    name = preset or file_sections.get("run", {}).get("preset") or DEFAULT_PRESET
    merged: Dict[str, Dict[str, Any]] = {}
    _apply_layer(merged, preset_sections(name))
    _apply_layer(merged, file_sections)
    _apply_layer(merged, overrides or {})
    run = merged.pop("run", {})
    run["preset"] = name
    config = RunConfig(**run, **merged)
    logger.debug("Config resolved", extra={"preset": name, "config_hash": config_hash(config)})
    return config
