"""Prompt banks: fixed unit vectors for antonym prompt pairs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..rng import derive_rng

DEFAULT_LABELS = (
    ("Good photo", "Bad photo"),
    ("Good picture", "Bad picture"),
    ("High-resolution image", "Low-resolution image"),
    ("High-quality image", "Low-quality image"),
    ("Sharp image", "Blurry image"),
    ("Sharp edges", "Blurry edges"),
    ("Noise-free image", "Noisy image"),
)


@dataclass
class PromptBank:
    positives: np.ndarray  # (P, d)
    negatives: np.ndarray  # (P, d)
    labels: list[tuple[str, str]]

    def __post_init__(self):
        self.positives = np.atleast_2d(np.asarray(self.positives, dtype=np.float64))
        self.negatives = np.atleast_2d(np.asarray(self.negatives, dtype=np.float64))
        if self.positives.shape != self.negatives.shape:
            raise ValueError("positive and negative prompt arrays differ in shape")
        if len(self.labels) != self.positives.shape[0]:
            raise ValueError("one label pair per prompt pair required")

    def __len__(self):
        return self.positives.shape[0]

    @property
    def dim(self) -> int:
        return self.positives.shape[1]

    def mean_vectors(self) -> tuple[np.ndarray, np.ndarray]:
        """Averaged prompt vectors; mean similarity = dot with these."""
        if len(self) == 0:
            raise ValueError("prompt bank is empty")
        return self.positives.mean(axis=0), self.negatives.mean(axis=0)


def random_bank(pairs: int = 7, dim: int = 32, seed: int = 0) -> PromptBank:
    """Seeded random unit vectors standing in for text-encoder features."""
    if pairs < 1:
        raise ValueError("need at least one prompt pair")
    rng = derive_rng(seed, "prompts")
    v = rng.standard_normal((2 * pairs, dim))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    labels = [DEFAULT_LABELS[i] if i < len(DEFAULT_LABELS) else (f"positive {i}", f"negative {i}") for i in range(pairs)]
    return PromptBank(v[0::2], v[1::2], labels)


def cosine_similarity(a, b, tol: float = 1e-6) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("cosine_similarity: non-finite input")
    for v, name in ((a, "a"), (b, "b")):
        if abs(np.linalg.norm(v) - 1.0) > tol:
            raise ValueError(f"cosine_similarity: {name} is not unit-norm")
    return float(np.clip(a @ b, -1.0, 1.0))


def prompt_similarities(x, bank: PromptBank) -> tuple[float, float]:
    """Mean cosine similarity of embedding ``x`` to the positive and negative prompts."""
    if len(bank) == 0:
        raise ValueError("prompt bank is empty")
    x = np.asarray(x, dtype=np.float64)
    return float(np.mean(bank.positives @ x)), float(np.mean(bank.negatives @ x))
