"""Minimal numpy autodiff engine for 1-D residual conv nets."""
from .checkpoint import decode_net, encode_net, load_net, save_net
from .graph import Net, NetKind, ResidualBlock, backward, forward
from .layers import (
    Activation,
    ConvLayer,
    FeatureMap,
    conv1d_same,
    deinterleave,
    interleave,
)
from .optim import OptimizerKind, OptimizerState, opt_step

__all__ = [
    "Activation",
    "ConvLayer",
    "FeatureMap",
    "Net",
    "NetKind",
    "OptimizerKind",
    "OptimizerState",
    "ResidualBlock",
    "backward",
    "conv1d_same",
    "decode_net",
    "deinterleave",
    "encode_net",
    "forward",
    "interleave",
    "load_net",
    "opt_step",
    "save_net",
]
