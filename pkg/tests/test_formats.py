from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from padc.errors import FormatError
from padc.formats import (
    decode_channelset,
    encode_channelset,
    read_channelset,
    read_manifest,
    write_channelset,
    write_channelset_csv,
    write_manifest,
)
from padc.frontend import ChannelSet


def _channelset() -> ChannelSet:
    return ChannelSet(channels=[np.array([0.1, -0.2, 0.3]), np.array([1.0, 2.0, 3.0])], sample_rate=20e9)


def test_channelset_file_round_trip(tmp_path):
    path = tmp_path / "signal.padc"
    write_channelset(_channelset(), path)
    loaded = read_channelset(path)
    assert loaded.sample_rate == 20e9
    assert loaded.n_channels == 2
    np.testing.assert_array_equal(loaded.interleaved(), _channelset().interleaved())


def test_encoded_size_is_header_plus_samples():
    assert len(encode_channelset(_channelset())) == 22 + 2 * 3 * 8


def test_decode_rejects_bad_magic_and_truncation():
    payload = encode_channelset(_channelset())
    with pytest.raises(FormatError) as bad_magic:
        decode_channelset(b"XXXX" + payload[4:])
    assert bad_magic.value.offset == 0
    with pytest.raises(FormatError):
        decode_channelset(payload[:-3])
    with pytest.raises(FormatError):
        decode_channelset(payload[:10])


def test_channelset_csv_has_one_column_per_channel(tmp_path):
    path = tmp_path / "signal.csv"
    write_channelset_csv(_channelset(), path)
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["ch0", "ch1"]
    np.testing.assert_allclose(frame["ch1"], [1.0, 2.0, 3.0])


def test_manifest_round_trip_and_invalid_json(tmp_path):
    path = tmp_path / "manifest.json"
    write_manifest(path, {"kind": "simulate", "seed": 3})
    assert read_manifest(path) == {"kind": "simulate", "seed": 3}
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(FormatError):
        read_manifest(path)
