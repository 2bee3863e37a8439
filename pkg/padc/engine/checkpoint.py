"""Self-describing binary checkpoints for ``Net``.

Layout, little-endian::

    magic "PADN" | version u16 | kind u8 | n_inputs u8 | n_layers u16
    per layer: in_ch u32 | out_ch u32 | kernel u32 | activation u8
               | weights f64[out][in][kernel] | bias f64[out]

Layers are written in ``Net.named_layers`` order. Bit 7 of the kind byte is set
when the global skip connection is disabled. A block carries a shortcut exactly
when it changes width, so the block structure is recovered from the widths.
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import List

import numpy as np

from ..errors import FormatError, ShapeError
from .graph import Net, NetKind, ResidualBlock
from .layers import ACTIVATION_CODES, ConvLayer

MAGIC = b"PADN"
VERSION = 1
NO_SKIP_FLAG = 0x80
_HEADER = struct.Struct("<4sHBBH")
_LAYER = struct.Struct("<IIIB")
_KIND_CODES = {NetKind.LINEARIZATION: 0, NetKind.MATCHING: 1}
_KINDS = {code: kind for kind, code in _KIND_CODES.items()}
_ACTIVATIONS = {code: act for act, code in ACTIVATION_CODES.items()}


def encode_net(net: Net) -> bytes:
    kind = _KIND_CODES[net.kind] | (0 if net.global_skip else NO_SKIP_FLAG)
    layers = net.layers()
    chunks = [_HEADER.pack(MAGIC, VERSION, kind, net.n_inputs, len(layers))]
    for layer in layers:
        chunks.append(
            _LAYER.pack(
                layer.in_channels,
                layer.out_channels,
                layer.kernel_width,
                ACTIVATION_CODES[layer.activation],
            )
        )
        chunks.append(layer.weights.astype("<f8").tobytes())
        chunks.append(layer.bias.astype("<f8").tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, payload: bytes) -> None:
        self.payload = payload
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.payload):
            raise FormatError(f"truncated checkpoint while reading {what}", self.offset)
        chunk = self.payload[self.offset : self.offset + size]
        self.offset += size
        return chunk


def _read_layer(reader: _Reader, index: int) -> ConvLayer:
    start = reader.offset
    in_ch, out_ch, kernel, act_code = _LAYER.unpack(reader.take(_LAYER.size, f"layer {index} header"))
    if in_ch == 0 or out_ch == 0 or kernel % 2 == 0:
        raise FormatError(f"layer {index} has impossible shape {out_ch}x{in_ch}x{kernel}", start)
    if act_code not in _ACTIVATIONS:
        raise FormatError(f"layer {index} has unknown activation code {act_code}", start + 12)
    n_weights = out_ch * in_ch * kernel
    weights = np.frombuffer(reader.take(8 * n_weights, f"layer {index} weights"), dtype="<f8")
    bias = np.frombuffer(reader.take(8 * out_ch, f"layer {index} bias"), dtype="<f8")
    return ConvLayer(
        weights.astype(np.float64).reshape(out_ch, in_ch, kernel),
        bias.astype(np.float64),
        _ACTIVATIONS[act_code],
    )


def _group_blocks(layers: List[ConvLayer], offset: int) -> List[ResidualBlock]:
    blocks, i = [], 0
    while i < len(layers):
        if i + 1 >= len(layers):
            raise FormatError("dangling convolution between input and output layers", offset)
        conv_a, conv_b = layers[i], layers[i + 1]
        i += 2
        shortcut = None
        if conv_a.in_channels != conv_b.out_channels:
            if i >= len(layers):
                raise FormatError("width-changing block is missing its shortcut", offset)
            shortcut = layers[i]
            i += 1
        try:
            blocks.append(ResidualBlock(conv_a, conv_b, shortcut))
        except ShapeError as exc:
            raise FormatError(f"inconsistent residual block: {exc}", offset) from exc
    return blocks


def decode_net(payload: bytes) -> Net:
    reader = _Reader(payload)
    magic, version, kind_byte, n_inputs, n_layers = _HEADER.unpack(reader.take(_HEADER.size, "header"))
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", 4)
    kind_code = kind_byte & ~NO_SKIP_FLAG
    if kind_code not in _KINDS:
        raise FormatError(f"unknown net kind {kind_code}", 6)
    if n_inputs < 1 or n_layers < n_inputs + 1:
        raise FormatError(f"{n_layers} layers cannot hold {n_inputs} inputs and an output", 7)

    layers = [_read_layer(reader, index) for index in range(n_layers)]
    if reader.offset != len(payload):
        raise FormatError(f"{len(payload) - reader.offset} trailing bytes after last layer", reader.offset)
    try:
        return Net(
            kind=_KINDS[kind_code],
            input_layers=layers[:n_inputs],
            blocks=_group_blocks(layers[n_inputs:-1], _HEADER.size),
            output_layer=layers[-1],
            global_skip=not (kind_byte & NO_SKIP_FLAG),
        )
    except ShapeError as exc:
        raise FormatError(f"layers do not form a valid net: {exc}", _HEADER.size) from exc


def save_net(net: Net, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_net(net))


def load_net(path: Path) -> Net:
    return decode_net(path.read_bytes())
