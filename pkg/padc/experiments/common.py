"""Helpers shared by the studies and the sweep."""
from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from ..config import RunConfig
from ..dataset import Corpus, CorpusConfig, gen_linearization_corpus, gen_matching_corpus
from ..engine import Net, NetKind
from ..errors import AmbiguityError
from ..frontend import FrontEndConfig, interleave_samples
from ..metrics import sinad
from ..nets import build_linearization_net, build_matching_net
from ..schema import with_updates


def snap(frequency: float, sample_rate: float, n: int) -> float:
    """Nearest DFT bin centre for an ``n``-sample record."""
    step = sample_rate / n
    return round(frequency / step) * step


def safe_metric(metric: Callable[[], float]) -> float:
    try:
        return metric()
    except AmbiguityError:
        return float("nan")


def study_frontend(cfg: RunConfig, noise_free: Optional[bool] = None) -> FrontEndConfig:
    noise_free = cfg.study.noise_free if noise_free is None else noise_free
    frontend = with_updates(cfg.frontend, rng_seed=cfg.seed)
    if noise_free:
        frontend = with_updates(frontend, noise_sigma=0.0, jitter_sigma=0.0, quant_bits=None)
    return frontend


def build_corpus(
    cfg: RunConfig,
    kind: NetKind,
    frontend: Optional[FrontEndConfig] = None,
    settings: Optional[CorpusConfig] = None,
    linearize: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> Corpus:
    frontend = frontend or with_updates(cfg.frontend, rng_seed=cfg.seed)
    settings = settings or cfg.dataset
    if kind is NetKind.LINEARIZATION:
        return gen_linearization_corpus(frontend, rng_seed=cfg.seed, settings=settings)
    return gen_matching_corpus(frontend, rng_seed=cfg.seed, settings=settings, linearizer=linearize)


def build_net_for(cfg: RunConfig, kind: NetKind, n_channels: int) -> Net:
    if kind is NetKind.LINEARIZATION:
        return build_linearization_net(with_updates(cfg.net, kind=kind, n_inputs=1))
    return build_matching_net(with_updates(cfg.net, kind=kind, n_inputs=n_channels))


def mean_input_sinad(corpus: Corpus) -> float:
    """Mean SINAD of the unrecovered originals over the validation split (train if empty)."""
    values = []
    for i in corpus.valid or corpus.train:
        pair = corpus.pairs[i]
        x = pair.original[0] if pair.n_inputs == 1 else interleave_samples(pair.original)
        values.append(safe_metric(lambda: sinad(x, pair.sample_rate)))
    finite = [v for v in values if np.isfinite(v)]
    return float(np.mean(finite)) if finite else float("nan")
