from __future__ import annotations

import os

import numpy as np
import pytest

from padc.engine import NetKind
from padc.nets import NetSpec, build_net


def pytest_collection_modifyitems(config, items):
    if os.getenv("PADC_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="set PADC_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def small_net():
    """Factory for a tiny net with a live (non-zero) output layer."""

    def make(kind=NetKind.LINEARIZATION, n_inputs=1, global_skip=True, seed=1):
        net = build_net(
            NetSpec(
                kind=kind,
                n_inputs=n_inputs,
                base_channels=3,
                pyramid=[3, 4],
                kernel_width=3,
                rng_seed=seed,
                global_skip=global_skip,
            )
        )
        rng = np.random.default_rng(seed + 100)
        net.output_layer.weights[...] = rng.uniform(-0.5, 0.5, net.output_layer.weights.shape)
        net.output_layer.bias[...] = 0.1
        return net

    return make
