"""Linearization and matching net builders."""
from __future__ import annotations

import logging
from typing import List, Sequence

import numpy as np
from pydantic import Field, model_validator

from .engine import Activation, ConvLayer, Net, NetKind, ResidualBlock, forward
from .errors import ConfigurationError
from .schema import PadcModel

logger = logging.getLogger("padc.nets")

DEFAULT_PYRAMID = [34, 38, 44, 52]


class NetSpec(PadcModel):
    kind: NetKind = NetKind.LINEARIZATION
    n_inputs: int = Field(default=1, ge=1, le=255)
    base_channels: int = Field(default=32, ge=1)
    pyramid: List[int] = Field(default_factory=lambda: list(DEFAULT_PYRAMID))
    kernel_width: int = Field(default=3, ge=1)
    rng_seed: int = 0
    global_skip: bool = True

    @model_validator(mode="after")
    def _check(self) -> "NetSpec":
        if self.kernel_width % 2 == 0:
            raise ValueError("kernel_width must be odd")
        if any(width < 1 for width in self.pyramid):
            raise ValueError("pyramid widths must be positive")
        if any(b < a for a, b in zip(self.pyramid, self.pyramid[1:])):
            raise ValueError("pyramid must be nondecreasing")
        return self


def _build(spec: NetSpec) -> Net:
    rng = np.random.default_rng(spec.rng_seed)
    k = spec.kernel_width
    input_layers = [ConvLayer.he_uniform(1, spec.base_channels, k, rng) for _ in range(spec.n_inputs)]
    blocks, width = [], spec.base_channels
    for j in spec.pyramid:
        conv_a = ConvLayer.he_uniform(width, j, k, rng, Activation.RELU)
        conv_b = ConvLayer.he_uniform(j, j, k, rng, Activation.RELU)
        shortcut = ConvLayer.he_uniform(width, j, 1, rng) if j != width else None
        blocks.append(ResidualBlock(conv_a, conv_b, shortcut))
        width = j
    net = Net(
        kind=spec.kind,
        input_layers=input_layers,
        blocks=blocks,
        output_layer=ConvLayer.zeros(width, 1, k),
        global_skip=spec.global_skip,
    )
    logger.debug(
        "Net built",
        extra={"kind": spec.kind.value, "n_inputs": spec.n_inputs, "parameters": net.parameter_count()},
    )
    return net


def build_linearization_net(spec: NetSpec) -> Net:
    if spec.kind is not NetKind.LINEARIZATION or spec.n_inputs != 1:
        raise ConfigurationError("a linearization net needs kind=linearization and n_inputs=1")
    return _build(spec)


def build_matching_net(spec: NetSpec) -> Net:
    if spec.kind is not NetKind.MATCHING or spec.n_inputs < 2:
        raise ConfigurationError("a matching net needs kind=matching and n_inputs >= 2")
    return _build(spec)


def build_net(spec: NetSpec) -> Net:
    if spec.kind is NetKind.LINEARIZATION:
        return build_linearization_net(spec)
    return build_matching_net(spec)


def describe(net: Net) -> List[str]:
    """One line per layer: name, in->out channels, kernel width, activation."""
    lines = [
        f"{name}: {layer.in_channels}->{layer.out_channels} k={layer.kernel_width} {layer.activation.value}"
        for name, layer in net.named_layers()
    ]
    lines.append(f"global_skip: {'on' if net.global_skip else 'off'}")
    return lines


def channel_path(net: Net) -> List[int]:
    """Widths along the main path, input to output."""
    path = [1, net.input_layers[0].out_channels]
    for block in net.blocks:
        path += [block.conv_a.out_channels, block.conv_b.out_channels]
    return path + [net.output_layer.out_channels]


def recover(net: Net, channels: Sequence[np.ndarray]) -> np.ndarray:
    """Inference: run the net without keeping a gradient cache."""
    return forward(net, channels, keep_cache=False)


def linearizer(net: Net):
    """Single-channel callable suitable for ``gen_matching_corpus(linearizer=...)``."""
    if net.n_inputs != 1:
        raise ConfigurationError("only single-input nets can linearize a channel")
    return lambda x: recover(net, [x])


def fold_scale(net: Net, scale: float) -> Net:
    """Copy of a net trained on inputs multiplied by ``scale`` that accepts raw inputs.

    Input-layer weights absorb ``scale``; the output layer absorbs ``1/scale`` so the
    result is in raw units, matching the global skip.
    """
    if not np.isfinite(scale) or scale <= 0:
        raise ConfigurationError(f"scale must be positive and finite, got {scale}")
    folded = net.copy()
    for layer in folded.input_layers:
        layer.weights *= scale
    folded.output_layer.weights /= scale
    folded.output_layer.bias /= scale
    return folded
