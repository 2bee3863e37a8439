"""On-disk formats: PADC ChannelSet binaries, CSV exports and JSON manifests."""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import FormatError
from .frontend import ChannelSet

CHANNELSET_MAGIC = b"PADC"
CHANNELSET_VERSION = 1
_HEADER = struct.Struct("<4sHIId")


def encode_channelset(cs: ChannelSet) -> bytes:
    header = _HEADER.pack(CHANNELSET_MAGIC, CHANNELSET_VERSION, cs.n_channels, cs.length, cs.sample_rate)
    return header + b"".join(c.astype("<f8").tobytes() for c in cs.channels)


def decode_channelset(payload: bytes) -> ChannelSet:
    if len(payload) < _HEADER.size:
        raise FormatError("truncated ChannelSet header", len(payload))
    magic, version, n_channels, length, sample_rate = _HEADER.unpack_from(payload, 0)
    if magic != CHANNELSET_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {CHANNELSET_MAGIC!r}", 0)
    if version != CHANNELSET_VERSION:
        raise FormatError(f"unsupported ChannelSet version {version}", 4)
    if n_channels < 1:
        raise FormatError("ChannelSet declares zero channels", 6)
    expected = _HEADER.size + n_channels * length * 8
    if len(payload) != expected:
        raise FormatError(
            f"payload is {len(payload)} bytes, header implies {expected}", min(len(payload), expected)
        )
    samples = np.frombuffer(payload, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    channels = [samples[m * length : (m + 1) * length].copy() for m in range(n_channels)]
    return ChannelSet(channels=channels, sample_rate=sample_rate)


def write_channelset(cs: ChannelSet, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_channelset(cs))


def read_channelset(path: Path) -> ChannelSet:
    return decode_channelset(path.read_bytes())


def channelset_frame(cs: ChannelSet) -> pd.DataFrame:
    return pd.DataFrame({f"ch{m}": channel for m, channel in enumerate(cs.channels)})


def write_channelset_csv(cs: ChannelSet, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    channelset_frame(cs).to_csv(path, index=False, float_format="%.17g")


def serialize_metadata(metadata: dict) -> str:
    return json.dumps(metadata, indent=2, ensure_ascii=False) + "\n"


def write_manifest(path: Path, metadata: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(serialize_metadata(metadata), encoding="utf-8")


def read_manifest(path: Path) -> dict:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest {path.name} is not valid JSON: {exc.msg}", exc.pos) from exc
