"""1-D SAME convolutions and the interleave node, with their reverse-mode rules."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError


class Activation(str, Enum):
    NONE = "none"
    RELU = "relu"


ACTIVATION_CODES = {Activation.NONE: 0, Activation.RELU: 1}


@dataclass
class FeatureMap:
    data: np.ndarray  # [channels, length]

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ShapeError(f"feature map must be [channels x length], got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ShapeError("feature map holds non-finite values")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def length(self) -> int:
        return self.data.shape[1]


@dataclass
class ConvLayer:
    weights: np.ndarray  # [out_ch, in_ch, kernel_width]
    bias: np.ndarray  # [out_ch]
    activation: Activation = Activation.NONE

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 3 or self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"weights {self.weights.shape} and bias {self.bias.shape} do not describe a conv layer"
            )
        if self.kernel_width % 2 != 1:
            raise ShapeError(f"kernel width must be odd, got {self.kernel_width}")

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel_width(self) -> int:
        return self.weights.shape[2]

    @classmethod
    def he_uniform(
        cls,
        in_channels: int,
        out_channels: int,
        kernel_width: int,
        rng: np.random.Generator,
        activation: Activation = Activation.NONE,
    ) -> "ConvLayer":
        bound = np.sqrt(6.0 / (in_channels * kernel_width))
        weights = rng.uniform(-bound, bound, size=(out_channels, in_channels, kernel_width))
        return cls(weights, np.zeros(out_channels), activation)

    @classmethod
    def zeros(
        cls,
        in_channels: int,
        out_channels: int,
        kernel_width: int,
        activation: Activation = Activation.NONE,
    ) -> "ConvLayer":
        weights = np.zeros((out_channels, in_channels, kernel_width))
        return cls(weights, np.zeros(out_channels), activation)

    def copy(self) -> "ConvLayer":
        return ConvLayer(self.weights.copy(), self.bias.copy(), self.activation)


@dataclass
class ConvCache:
    columns: np.ndarray  # [in_ch * k, length]
    pre_activation: np.ndarray
    length: int


def _columns(x: np.ndarray, kernel_width: int) -> np.ndarray:
    if kernel_width == 1:
        return x
    radius = kernel_width // 2
    padded = np.pad(x, ((0, 0), (radius, radius)))
    windows = sliding_window_view(padded, kernel_width, axis=1)  # [in, length, k]
    return windows.transpose(0, 2, 1).reshape(x.shape[0] * kernel_width, x.shape[1])


def conv_forward(x: np.ndarray, layer: ConvLayer) -> Tuple[np.ndarray, ConvCache]:
    if x.shape[0] != layer.in_channels:
        raise ShapeError(f"layer expects {layer.in_channels} channels, got {x.shape[0]}")
    columns = _columns(x, layer.kernel_width)
    pre = layer.weights.reshape(layer.out_channels, -1) @ columns + layer.bias[:, None]
    out = np.maximum(pre, 0.0) if layer.activation is Activation.RELU else pre
    return out, ConvCache(columns, pre, x.shape[1])


def conv_backward(
    grad_out: np.ndarray, layer: ConvLayer, cache: ConvCache, need_input_grad: bool = True
) -> Tuple[Optional[np.ndarray], np.ndarray, np.ndarray]:
    """Gradients w.r.t. the layer input, weights and bias."""
    grad_pre = grad_out
    if layer.activation is Activation.RELU:
        grad_pre = grad_out * (cache.pre_activation > 0)
    grad_w = (grad_pre @ cache.columns.T).reshape(layer.weights.shape)
    grad_b = grad_pre.sum(axis=1)
    if not need_input_grad:
        return None, grad_w, grad_b
    grad_cols = layer.weights.reshape(layer.out_channels, -1).T @ grad_pre
    k = layer.kernel_width
    if k == 1:
        return grad_cols, grad_w, grad_b
    radius = k // 2
    grad_cols = grad_cols.reshape(layer.in_channels, k, cache.length)
    grad_padded = np.zeros((layer.in_channels, cache.length + 2 * radius))
    for tap in range(k):
        grad_padded[:, tap : tap + cache.length] += grad_cols[:, tap, :]
    return grad_padded[:, radius : radius + cache.length], grad_w, grad_b


def conv1d_same(x: FeatureMap, layer: ConvLayer) -> FeatureMap:
    out, _ = conv_forward(x.data, layer)
    return FeatureMap(out)


def interleave_arrays(arrays: Sequence[np.ndarray]) -> np.ndarray:
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise ShapeError(f"cannot interleave maps of shapes {sorted(shapes)}")
    n = len(arrays)
    channels, length = arrays[0].shape
    out = np.empty((channels, n * length), dtype=np.float64)
    for m, a in enumerate(arrays):
        out[:, m::n] = a
    return out


def deinterleave_arrays(x: np.ndarray, n: int) -> List[np.ndarray]:
    if x.shape[1] % n:
        raise ShapeError(f"length {x.shape[1]} does not split into {n} maps")
    return [x[:, m::n] for m in range(n)]


def interleave(maps: Sequence[FeatureMap]) -> FeatureMap:
    """ITL: output sample t of every feature channel comes from map t mod N."""
    return FeatureMap(interleave_arrays([m.data for m in maps]))


def deinterleave(x: FeatureMap, n: int) -> List[FeatureMap]:
    return [FeatureMap(np.array(a)) for a in deinterleave_arrays(x.data, n)]
