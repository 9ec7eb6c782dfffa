"""Seed-paired A/B runs on the synthetic corpus.

Each arm trains a fresh encoder from the same initial seed, so the pair
differs only in the switch under test (augmentation on/off, menu, loss).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dataio import generate_synthetic_corpus
from .encoder import EncoderModel, Featurizer
from .losses import LossConfig
from .trainer import CorpusFeatures, TrainConfig, train


@dataclass(frozen=True)
class Protocol:
    pairs: int = 2000
    noise: float = 0.3
    corpus_seed: int = 7
    epochs: int = 30
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    hash_dim: int = 1024
    hidden: tuple[int, ...] = (256, 128)

    def corpus(self) -> CorpusFeatures:
        records = generate_synthetic_corpus(self.pairs, self.noise, seed=self.corpus_seed)
        return CorpusFeatures.from_records(records, Featurizer(self.hash_dim))


@dataclass
class ArmResult:
    seed: int
    best_test_mrr: float
    final_test_mrr: float
    norm_std: float
    epoch_seconds: float


def run_arm(data: CorpusFeatures, protocol: Protocol, seed: int, *, aug_enabled: bool = True,
            menu: tuple[str, ...] | None = None, copies: int = 5, loss: LossConfig = LossConfig(),
            normalize: bool = False) -> ArmResult:
    cfg = TrainConfig(epochs=protocol.epochs, seed=seed, aug_enabled=aug_enabled, aug_copies=copies)
    if menu is not None:
        cfg = replace(cfg, aug_menu=menu)
    model = EncoderModel((data.dim, *protocol.hidden), normalize_output=normalize, seed=seed)
    res = train(model, data, cfg, loss)
    return ArmResult(seed, res.best_test_mrr, res.final_test_mrr, res.metrics[-1]["normStd"],
                     float(np.mean(res.epoch_seconds)))


def run_arms(data, protocol: Protocol, **kwargs) -> list[ArmResult]:
    return [run_arm(data, protocol, s, **kwargs) for s in protocol.seeds]


def median(values) -> float:
    return float(np.median(list(values)))


def paired_gain(treated: list[ArmResult], control: list[ArmResult], attr: str = "best_test_mrr") -> list[float]:
    if [a.seed for a in treated] != [b.seed for b in control]:
        raise ValueError("arms are not seed-paired")
    return [getattr(a, attr) - getattr(b, attr) for a, b in zip(treated, control)]
