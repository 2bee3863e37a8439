"""Residual conv nets: forward evaluation and reverse-mode gradients."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ShapeError, StateError
from .layers import (
    ConvCache,
    ConvLayer,
    conv_backward,
    conv_forward,
    deinterleave_arrays,
    interleave_arrays,
)


class NetKind(str, Enum):
    LINEARIZATION = "linearization"
    MATCHING = "matching"


@dataclass
class ResidualBlock:
    """Two ReLU convs; ``shortcut`` is a width-1 projection when the width changes."""

    conv_a: ConvLayer
    conv_b: ConvLayer
    shortcut: Optional[ConvLayer] = None

    def __post_init__(self) -> None:
        if self.conv_a.out_channels != self.conv_b.in_channels:
            raise ShapeError("conv_a output width does not feed conv_b")
        changes_width = self.conv_a.in_channels != self.conv_b.out_channels
        if changes_width != (self.shortcut is not None):
            raise ShapeError("a block has a shortcut projection exactly when it changes width")
        if self.shortcut is not None and (
            self.shortcut.kernel_width != 1
            or self.shortcut.in_channels != self.conv_a.in_channels
            or self.shortcut.out_channels != self.conv_b.out_channels
        ):
            raise ShapeError("shortcut must be a width-1 projection from block input to block output")

    @property
    def in_channels(self) -> int:
        return self.conv_a.in_channels

    @property
    def out_channels(self) -> int:
        return self.conv_b.out_channels


@dataclass
class _BlockTape:
    a: ConvCache
    b: ConvCache
    shortcut: Optional[ConvCache]


@dataclass
class _Tape:
    inputs: List[np.ndarray]
    input_caches: List[ConvCache]
    blocks: List[_BlockTape]
    output: ConvCache


@dataclass
class Net:
    kind: NetKind
    input_layers: List[ConvLayer]
    blocks: List[ResidualBlock]
    output_layer: ConvLayer
    global_skip: bool = True
    _tape: Optional[_Tape] = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.input_layers:
            raise ShapeError("a net needs at least one input layer")
        widths = {(layer.in_channels, layer.out_channels) for layer in self.input_layers}
        if len(widths) != 1 or next(iter(widths))[0] != 1:
            raise ShapeError("input layers must all map 1 channel to the same width")
        width = self.input_layers[0].out_channels
        for block in self.blocks:
            if block.in_channels != width:
                raise ShapeError(f"block expects {block.in_channels} channels, gets {width}")
            width = block.out_channels
        if self.output_layer.in_channels != width or self.output_layer.out_channels != 1:
            raise ShapeError(f"output layer must map {width} channels to 1")

    @property
    def n_inputs(self) -> int:
        return len(self.input_layers)

    def named_layers(self) -> List[Tuple[str, ConvLayer]]:
        named = [(f"input.{m}", layer) for m, layer in enumerate(self.input_layers)]
        for i, block in enumerate(self.blocks):
            named.append((f"block.{i}.conv_a", block.conv_a))
            named.append((f"block.{i}.conv_b", block.conv_b))
            if block.shortcut is not None:
                named.append((f"block.{i}.shortcut", block.shortcut))
        named.append(("output", self.output_layer))
        return named

    def layers(self) -> List[ConvLayer]:
        return [layer for _, layer in self.named_layers()]

    def parameters(self) -> Dict[str, np.ndarray]:
        """Live views of every weight and bias, keyed in a fixed order."""
        params: Dict[str, np.ndarray] = {}
        for name, layer in self.named_layers():
            params[f"{name}.weight"] = layer.weights
            params[f"{name}.bias"] = layer.bias
        return params

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.parameters().values()))

    def load_parameters(self, values: Dict[str, np.ndarray]) -> None:
        params = self.parameters()
        if set(values) != set(params):
            raise ShapeError("parameter names do not match this net")
        for name, target in params.items():
            source = np.asarray(values[name], dtype=np.float64)
            if source.shape != target.shape:
                raise ShapeError(f"{name}: expected {target.shape}, got {source.shape}")
            target[...] = source

    def receptive_radius(self) -> int:
        """Output samples depend only on inputs within this many aggregate-grid samples."""
        n = self.n_inputs
        radius = n * (self.input_layers[0].kernel_width // 2)
        for block in self.blocks:
            radius += block.conv_a.kernel_width // 2 + block.conv_b.kernel_width // 2
        return radius + self.output_layer.kernel_width // 2

    def copy(self) -> "Net":
        return Net(
            kind=self.kind,
            input_layers=[layer.copy() for layer in self.input_layers],
            blocks=[copy.deepcopy(block) for block in self.blocks],
            output_layer=self.output_layer.copy(),
            global_skip=self.global_skip,
        )

    def clear_cache(self) -> None:
        self._tape = None


def _check_inputs(net: Net, inputs: Sequence[np.ndarray]) -> List[np.ndarray]:
    if len(inputs) != net.n_inputs:
        raise ShapeError(f"net takes {net.n_inputs} inputs, got {len(inputs)}")
    xs = [np.asarray(x, dtype=np.float64) for x in inputs]
    if any(x.ndim != 1 for x in xs) or len({x.shape[0] for x in xs}) != 1:
        raise ShapeError("inputs must be 1-D sequences of equal length")
    if xs[0].shape[0] == 0:
        raise ShapeError("inputs are empty")
    return xs


def _merge(arrays: List[np.ndarray]) -> np.ndarray:
    return arrays[0] if len(arrays) == 1 else interleave_arrays(arrays)


def forward(net: Net, inputs: Sequence[np.ndarray], keep_cache: bool = True) -> np.ndarray:
    """Evaluate the net on one channel per input layer; returns N*L output samples."""
    xs = _check_inputs(net, inputs)
    input_caches, features = [], []
    for layer, x in zip(net.input_layers, xs):
        y, cache = conv_forward(x[None, :], layer)
        features.append(y)
        input_caches.append(cache)
    h = _merge(features)

    block_tapes = []
    for block in net.blocks:
        a, cache_a = conv_forward(h, block.conv_a)
        b, cache_b = conv_forward(a, block.conv_b)
        if block.shortcut is not None:
            s, cache_s = conv_forward(h, block.shortcut)
        else:
            s, cache_s = h, None
        h = b + s
        block_tapes.append(_BlockTape(cache_a, cache_b, cache_s))

    out, out_cache = conv_forward(h, net.output_layer)
    y = out[0]
    if net.global_skip:
        y = y + _merge([x[None, :] for x in xs])[0]
    net._tape = _Tape(xs, input_caches, block_tapes, out_cache) if keep_cache else None
    return y


def backward(net: Net, inputs: Sequence[np.ndarray], loss_grad) -> Dict[str, np.ndarray]:
    """Gradient of a scalar loss w.r.t. every parameter, given dLoss/dOutput.

    Needs the cache left by ``forward`` on the same inputs.
    """
    tape = net._tape
    if tape is None:
        raise StateError("backward called before forward")
    xs = _check_inputs(net, inputs)
    if any(not np.array_equal(x, cached) for x, cached in zip(xs, tape.inputs)):
        raise StateError("cached forward pass belongs to different inputs")
    g = np.asarray(loss_grad, dtype=np.float64)
    if g.shape != (net.n_inputs * xs[0].shape[0],):
        raise ShapeError(f"loss gradient has shape {g.shape}, output is {net.n_inputs * xs[0].shape[0]}")

    grads: Dict[str, np.ndarray] = {}
    dh, grads["output.weight"], grads["output.bias"] = conv_backward(
        g[None, :], net.output_layer, tape.output
    )
    for i in reversed(range(len(net.blocks))):
        block, bt = net.blocks[i], tape.blocks[i]
        da, grads[f"block.{i}.conv_b.weight"], grads[f"block.{i}.conv_b.bias"] = conv_backward(
            dh, block.conv_b, bt.b
        )
        dx_a, grads[f"block.{i}.conv_a.weight"], grads[f"block.{i}.conv_a.bias"] = conv_backward(
            da, block.conv_a, bt.a
        )
        if block.shortcut is not None:
            dx_s, grads[f"block.{i}.shortcut.weight"], grads[f"block.{i}.shortcut.bias"] = conv_backward(
                dh, block.shortcut, bt.shortcut
            )
        else:
            dx_s = dh
        dh = dx_a + dx_s

    per_input = [dh] if net.n_inputs == 1 else deinterleave_arrays(dh, net.n_inputs)
    for m, (layer, cache) in enumerate(zip(net.input_layers, tape.input_caches)):
        _, grads[f"input.{m}.weight"], grads[f"input.{m}.bias"] = conv_backward(
            np.ascontiguousarray(per_input[m]), layer, cache, need_input_grad=False
        )
    return {name: grads[name] for name in net.parameters()}
