"""Desk-scale experiments shared by the scripts and the acceptance suite."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import procedural
from .alignment.losses import LossConfig
from .alignment.prompts import random_bank
from .alignment.training import HistoryRow, ImageLadders, OptimizerConfig, train
from .evaluation import SweepResult, intensity_sweep
from .sampling import LadderConfig
from .scoring import score_image

TRAIN_SEED, TEST_SEED = 11, 12


@dataclass(frozen=True)
class SweepExperiment:
    """Train on procedural images, then sweep held-out ones.

    Image and patch sizes are scaled down from the 224 px default so the
    whole run fits a laptop CPU budget; the encoder pools globally, so it
    scores the full held-out images regardless of the training patch size.
    """

    n_train: int = 200
    n_test: int = 50
    image_size: int = 128
    patch_size: int = 96
    epochs: int = 10
    lr: float = 1e-2
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    levels: int = 5
    n_distortions: int = 1


@dataclass
class ExperimentResult:
    sweep: SweepResult
    history: list[HistoryRow]
    train_seconds: float
    sweep_seconds: float


def train_procedural(exp: SweepExperiment, bank=None):
    bank = random_bank(7, 32, exp.seed) if bank is None else bank
    images = procedural.make_images(TRAIN_SEED + 1000 * exp.seed, exp.n_train, exp.image_size)
    ladder_cfg = LadderConfig(exp.patch_size, exp.levels, exp.n_distortions, seed=exp.seed)
    data = ImageLadders(images, [f"train{i}" for i in range(exp.n_train)], ladder_cfg)
    opt = OptimizerConfig(lr=exp.lr, epochs=exp.epochs, seed=exp.seed)
    return train(data, exp.loss, bank, opt), bank


def run_sweep_experiment(exp: SweepExperiment = SweepExperiment(), kinds=None) -> ExperimentResult:
    t0 = time.perf_counter()
    res, bank = train_procedural(exp)
    t1 = time.perf_counter()
    held_out = procedural.make_images(TEST_SEED + 1000 * exp.seed, exp.n_test, exp.image_size)
    tau = exp.loss.tau
    sweep = intensity_sweep(lambda img: score_image(res.params, img, bank, tau).q, held_out, kinds, seed=exp.seed)
    return ExperimentResult(sweep, res.history, t1 - t0, time.perf_counter() - t1)


ABLATIONS = {
    "default": {},
    "two-distortions": {"n_distortions": 2},
    "three-levels": {"levels": 3},
    "quality-ranking": {"loss": LossConfig(variant="quality")},
}


def ablation_histories(base: SweepExperiment, names=tuple(ABLATIONS)) -> dict[str, list[HistoryRow]]:
    """Loss histories of the ablation variants, trained from the same seed."""
    return {name: train_procedural(replace(base, **ABLATIONS[name]))[0].history for name in names}


def epoch_means(history: list[HistoryRow]) -> np.ndarray:
    epochs = sorted({h.epoch for h in history})
    return np.array([np.mean([h.total for h in history if h.epoch == e]) for e in epochs])
