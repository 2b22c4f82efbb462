"""Ladder loss through the encoder, AdamW training loop and gradient check."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..rng import derive_rng
from ..sampling import DegradationLadder, LadderConfig, make_ladder
from . import encoder
from .encoder import ToyEncoderParams
from .losses import LossBreakdown, LossConfig, SimilarityGrid, evaluate_losses, hinge_arguments
from .prompts import PromptBank

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 10
    batch_size: int = 16
    seed: int = 0
    patience: int | None = None  # early-stopping patience in epochs


@dataclass
class HistoryRow:
    epoch: int
    batch: int
    cons: float
    pos: float
    neg: float
    total: float


@dataclass
class TrainResult:
    params: ToyEncoderParams
    history: list[HistoryRow] = field(default_factory=list)
    validation: list[float] = field(default_factory=list)
    best_epoch: int | None = None


class ImageLadders:
    """Ladders regenerated every epoch from a fixed set of pristine images."""

    def __init__(self, images: Sequence[np.ndarray], ids: Sequence[str], cfg: LadderConfig):
        if len(images) != len(ids):
            raise ValueError("images and ids differ in length")
        self.images, self.ids, self.cfg = list(images), list(ids), cfg

    def __len__(self):
        return len(self.images)

    def ladders(self, epoch: int, order: Sequence[int]) -> list[DegradationLadder]:
        return [make_ladder(self.images[i], self.cfg, self.ids[i], "epoch", epoch) for i in order]


def _ladder_stack(ladder: DegradationLadder) -> np.ndarray:
    return np.stack([crop for pair in ladder.pairs for crop in pair])


def similarity_grid(emb: np.ndarray, bank: PromptBank) -> SimilarityGrid:
    """``emb`` rows ordered (level 1 crop a, level 1 crop b, level 2 crop a, ...)."""
    tp, tn = bank.mean_vectors()
    return SimilarityGrid((emb @ tp).reshape(-1, 2), (emb @ tn).reshape(-1, 2))


def ladder_loss(params: ToyEncoderParams, ladder: DegradationLadder, cfg: LossConfig, bank: PromptBank, with_grad=True):
    """Loss breakdown for one ladder and, optionally, parameter gradients."""
    emb, cache = encoder.forward(params, _ladder_stack(ladder))
    grid = similarity_grid(emb, bank)
    b = evaluate_losses(grid, cfg)
    if not with_grad:
        return b, None, grid
    tp, tn = bank.mean_vectors()
    d_emb = b.grad.sp.reshape(-1, 1) * tp + b.grad.sn.reshape(-1, 1) * tn
    return b, encoder.backward(params, cache, d_emb), grid


class AdamW:
    """Adam with decoupled weight decay applied to every parameter."""

    def __init__(self, size: int, cfg: OptimizerConfig):
        self.cfg = cfg
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        c = self.cfg
        self.t += 1
        self.m = c.beta1 * self.m + (1 - c.beta1) * grad
        self.v = c.beta2 * self.v + (1 - c.beta2) * grad**2
        mhat = self.m / (1 - c.beta1**self.t)
        vhat = self.v / (1 - c.beta2**self.t)
        theta = theta * (1 - c.lr * c.weight_decay)
        return theta - c.lr * mhat / (np.sqrt(vhat) + c.eps)


def train(
    data,
    loss_cfg: LossConfig,
    bank: PromptBank,
    opt: OptimizerConfig = OptimizerConfig(),
    params: ToyEncoderParams | None = None,
    validate: Callable[[ToyEncoderParams], float] | None = None,
    progress: Callable[[int, int, float], None] | None = None,
) -> TrainResult:
    """Mini-batch AdamW over ladders.

    ``data`` is either a fixed list of :class:`DegradationLadder` or an
    :class:`ImageLadders`, which draws fresh crops and distortions per epoch.
    Batch loss is the mean of per-ladder losses; gradients are summed in
    ladder order so results do not depend on anything but the seed.
    ``validate`` (higher is better) enables early stopping with
    ``opt.patience`` and returns the best parameters seen.
    """
    n = len(data)
    if n == 0:
        raise ValueError("training data is empty")
    params = (encoder.init_params(bank.dim, opt.seed) if params is None else params).copy()
    if params.dim != bank.dim:
        raise ValueError(f"encoder dim {params.dim} does not match prompt dim {bank.dim}")
    theta = params.flat()
    adam = AdamW(theta.size, opt)
    result = TrainResult(params)
    best, best_score, stale = params.copy(), -np.inf, 0

    for epoch in range(opt.epochs):
        order = derive_rng(opt.seed, "shuffle", epoch).permutation(n)
        if isinstance(data, ImageLadders):
            ladders = data.ladders(epoch, order)
        else:
            ladders = [data[i] for i in order]
        for bi, start in enumerate(range(0, n, opt.batch_size)):
            batch = ladders[start : start + opt.batch_size]
            grad = np.zeros_like(theta)
            sums = np.zeros(4)
            current = params.with_flat(theta)
            for ladder in batch:
                b, g, _ = ladder_loss(current, ladder, loss_cfg, bank)
                if not np.isfinite(b.total) or not np.all(np.isfinite(g.flat())):
                    raise FloatingPointError(f"non-finite loss on ladder {ladder.source_id!r} (epoch {epoch}, batch {bi})")
                grad += g.flat()
                sums += (b.cons, b.pos, b.neg, b.total)
            k = len(batch)
            theta = adam.step(theta, grad / k)
            means = sums / k
            result.history.append(HistoryRow(epoch, bi, *map(float, means)))
            if progress is not None:
                progress(epoch, bi, float(means[3]))
        params = params.with_flat(theta)
        if validate is not None:
            score = float(validate(params))
            result.validation.append(score)
            log.info("epoch %d validation %.4f", epoch, score)
            if score > best_score:
                best, best_score, stale, result.best_epoch = params.copy(), score, 0, epoch
            else:
                stale += 1
                if opt.patience is not None and stale >= opt.patience:
                    log.info("early stop after epoch %d", epoch)
                    break
    result.params = best if validate is not None else params.with_flat(theta)
    return result


@dataclass
class GradCheckResult:
    max_rel_error: float
    checked: int
    excluded: int


def grad_check(
    params: ToyEncoderParams,
    ladder: DegradationLadder,
    cfg: LossConfig,
    bank: PromptBank,
    epsilon: float = 1e-4,
    n_params: int = 200,
    seed: int = 0,
) -> GradCheckResult:
    """Compare backprop with central differences on a random parameter subset.

    A parameter is excluded when some hinge argument lies within ``10 * epsilon``
    of its kink measured along that parameter, or flips state across the probe.
    """
    if not 1e-6 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon must be in [1e-6, 1e-3], got {epsilon}")
    if n_params <= 0:
        warnings.warn("grad_check: no parameters requested, reporting error 0")
        return GradCheckResult(0.0, 0, 0)
    _, g, grid = ladder_loss(params, ladder, cfg, bank)
    analytic = g.flat()
    base_args = hinge_arguments(grid, cfg)
    theta = params.flat()
    idx = derive_rng(seed, "gradcheck").choice(theta.size, size=min(n_params, theta.size), replace=False)

    def probe(vec):
        b, _, gr = ladder_loss(params.with_flat(vec), ladder, cfg, bank, with_grad=False)
        return b.total, hinge_arguments(gr, cfg)

    worst, checked, excluded = 0.0, 0, 0
    for i in idx:
        t = theta.copy()
        t[i] += epsilon
        fp, ap = probe(t)
        t[i] -= 2 * epsilon
        fm, am = probe(t)
        # distance to each kink in units of this parameter: |arg| / |d arg / d theta_i|
        rate = np.abs(ap - am) / (2 * epsilon)
        near = np.any(np.abs(base_args) < 10 * epsilon * rate)
        flipped = np.any((ap > 0) != (am > 0))
        if near or flipped:
            excluded += 1
            continue
        num = (fp - fm) / (2 * epsilon)
        a = analytic[i]
        worst = max(worst, abs(a - num) / max(abs(a), abs(num), 1e-8))
        checked += 1
    return GradCheckResult(worst, checked, excluded)
