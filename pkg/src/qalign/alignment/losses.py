"""Margin ranking losses over a ladder's prompt similarities.

A :class:`SimilarityGrid` holds ``sp[i, k]`` and ``sn[i, k]``: the similarity of
crop ``k`` (0 or 1) at level ``i`` (0 = mildest) to the averaged positive and
negative prompts. Every loss returns ``(value, grad)`` with ``grad`` a grid of
the same shape. Hinge subgradients at kinks are 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VARIANTS = ("similarity", "quality")


@dataclass(frozen=True)
class LossConfig:
    m_cons: float = 2.5e-3
    m_rank: float = 6.75e-2
    lambda_cons: float = 1.0
    lambda_pos: float = 1.0
    lambda_neg: float = 1.0
    tau: float = 2.0
    variant: str = "similarity"

    def __post_init__(self):
        if self.m_cons < 0 or self.m_rank < 0:
            raise ValueError("margins must be non-negative")
        if min(self.lambda_cons, self.lambda_pos, self.lambda_neg) < 0:
            raise ValueError("loss weights must be non-negative")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")


@dataclass
class SimilarityGrid:
    sp: np.ndarray  # (L, 2)
    sn: np.ndarray  # (L, 2)

    def __post_init__(self):
        self.sp = np.asarray(self.sp, dtype=np.float64)
        self.sn = np.asarray(self.sn, dtype=np.float64)
        if self.sp.ndim != 2 or self.sp.shape[1] != 2 or self.sp.shape != self.sn.shape:
            raise ValueError(f"grid arrays must both be (L, 2), got {self.sp.shape} and {self.sn.shape}")

    @property
    def levels(self) -> int:
        return self.sp.shape[0]

    @classmethod
    def zeros(cls, levels: int) -> "SimilarityGrid":
        return cls(np.zeros((levels, 2)), np.zeros((levels, 2)))

    def __add__(self, other):
        return SimilarityGrid(self.sp + other.sp, self.sn + other.sn)

    def __mul__(self, c):
        return SimilarityGrid(self.sp * c, self.sn * c)

    __rmul__ = __mul__

    def swapped(self) -> "SimilarityGrid":
        return SimilarityGrid(self.sp[:, ::-1], self.sn[:, ::-1])


def _pair_mask(levels):
    i, j = np.triu_indices(levels, k=1)
    return i, j


def _consistency(s, margin):
    gap = s[:, 0] - s[:, 1]
    arg = np.abs(gap) - margin
    active = arg > 0
    value = arg[active].sum()
    g = np.zeros_like(s)
    g[:, 0] = np.sign(gap) * active
    g[:, 1] = -g[:, 0]
    return value, g, np.concatenate([arg, gap])


def _ranking(s, margin, sign):
    """Sum over i<j, k, l of max(0, sign*(s[j,k] - s[i,l]) + margin)."""
    i, j = _pair_mask(s.shape[0])
    # arg[p, l, k] for pair p=(i, j)
    arg = sign * (s[j][:, None, :] - s[i][:, :, None]) + margin
    active = (arg > 0).astype(np.float64)
    value = (arg * active).sum()
    g = np.zeros_like(s)
    np.add.at(g, j, sign * active.sum(axis=1))
    np.add.at(g, i, -sign * active.sum(axis=2))
    return value, g, arg.ravel()


def loss_consistency(grid: SimilarityGrid, m_cons: float):
    vp, gp, _ = _consistency(grid.sp, m_cons)
    vn, gn, _ = _consistency(grid.sn, m_cons)
    return float(vp + vn), SimilarityGrid(gp, gn)


def loss_positive(grid: SimilarityGrid, m_rank: float):
    v, g, _ = _ranking(grid.sp, m_rank, 1.0)
    return float(v), SimilarityGrid(g, np.zeros_like(grid.sn))


def loss_negative(grid: SimilarityGrid, m_rank: float):
    v, g, _ = _ranking(grid.sn, m_rank, -1.0)
    return float(v), SimilarityGrid(np.zeros_like(grid.sp), g)


def ranking_term_count(levels: int) -> int:
    return 4 * levels * (levels - 1) // 2


@dataclass
class LossBreakdown:
    cons: float
    pos: float
    neg: float
    total: float
    grad: SimilarityGrid


def _weighted(grid, cfg):
    c, gc = loss_consistency(grid, cfg.m_cons)
    p, gp = loss_positive(grid, cfg.m_rank)
    n, gn = loss_negative(grid, cfg.m_rank)
    total = cfg.lambda_cons * c + cfg.lambda_pos * p + cfg.lambda_neg * n
    grad = cfg.lambda_cons * gc + cfg.lambda_pos * gp + cfg.lambda_neg * gn
    return LossBreakdown(c, p, n, total, grad)


def quality_grid(grid: SimilarityGrid, tau: float):
    """Per-crop quality ``q`` and the grid ``(q, 1 - q)`` it induces."""
    q = 1.0 / (1.0 + np.exp(-(grid.sp - grid.sn) / tau))
    return q, SimilarityGrid(q, 1.0 - q)


def loss_quality_ranking_variant(grid: SimilarityGrid, cfg: LossConfig) -> LossBreakdown:
    """Same hinges applied to predicted quality instead of raw similarities.

    The positive-prompt slots carry ``q`` and the negative-prompt slots carry
    ``1 - q`` (the softmax weight of the negative prompt).
    """
    q, qgrid = quality_grid(grid, cfg.tau)
    inner = _weighted(qgrid, cfg)
    dq = (inner.grad.sp - inner.grad.sn) * q * (1 - q) / cfg.tau
    return LossBreakdown(inner.cons, inner.pos, inner.neg, inner.total, SimilarityGrid(dq, -dq))


def evaluate_losses(grid: SimilarityGrid, cfg: LossConfig) -> LossBreakdown:
    if cfg.variant == "quality":
        return loss_quality_ranking_variant(grid, cfg)
    return _weighted(grid, cfg)


def total_loss(grid: SimilarityGrid, cfg: LossConfig):
    b = evaluate_losses(grid, cfg)
    return b.total, b.grad


def hinge_arguments(grid: SimilarityGrid, cfg: LossConfig) -> np.ndarray:
    """Every quantity whose sign flip is a kink of the loss (hinges and |gap|)."""
    g = quality_grid(grid, cfg.tau)[1] if cfg.variant == "quality" else grid
    parts = []
    if cfg.lambda_cons:
        parts += [_consistency(g.sp, cfg.m_cons)[2], _consistency(g.sn, cfg.m_cons)[2]]
    if cfg.lambda_pos:
        parts.append(_ranking(g.sp, cfg.m_rank, 1.0)[2])
    if cfg.lambda_neg:
        parts.append(_ranking(g.sn, cfg.m_rank, -1.0)[2])
    return np.concatenate(parts) if parts else np.zeros(0)
