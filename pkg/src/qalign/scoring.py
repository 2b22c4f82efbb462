"""Quality scores from embeddings and an antonym prompt bank."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.special import expit

from .alignment.encoder import ToyEncoderParams, encode
from .alignment.prompts import PromptBank, prompt_similarities

DEFAULT_TAU = 2.0


@dataclass(frozen=True)
class QualityScore:
    q: float
    s_p: float
    s_n: float
    image_id: str = ""


def quality_score(s_p: float, s_n: float, tau: float = DEFAULT_TAU) -> float:
    """Softmax weight of the positive prompt, written as sigmoid((s_p - s_n)/tau)."""
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    return float(expit((s_p - s_n) / tau))


def score_embedding(x, bank: PromptBank, tau: float = DEFAULT_TAU, image_id: str = "") -> QualityScore:
    s_p, s_n = prompt_similarities(x, bank)
    return QualityScore(quality_score(s_p, s_n, tau), s_p, s_n, image_id)


def score_image(source, item, bank: PromptBank, tau: float = DEFAULT_TAU, image_id: str | None = None) -> QualityScore:
    """Score one image.

    ``source`` is either encoder parameters (``item`` is then an image, encoded
    whole) or an embedding lookup with a ``get(id)`` method or mapping
    interface (``item`` is then an id; unknown ids raise ``KeyError``).
    """
    if len(bank) == 0:
        raise ValueError("prompt bank is empty")
    if isinstance(source, ToyEncoderParams):
        return score_embedding(encode(source, item), bank, tau, image_id or "")
    getter = source.get if hasattr(source, "ids") else source.__getitem__
    x = getter(item)
    if x is None:
        raise KeyError(f"no embedding with id {item!r}")
    return score_embedding(np.asarray(x, dtype=np.float64), bank, tau, item if image_id is None else image_id)


def score_images(params: ToyEncoderParams, images, bank: PromptBank, tau: float = DEFAULT_TAU, ids=None) -> list[QualityScore]:
    ids = [str(i) for i in range(len(images))] if ids is None else list(ids)
    return [score_image(params, img, bank, tau, i) for img, i in zip(images, ids)]


def write_scores(path, scores: Iterable[QualityScore]) -> int:
    path = Path(path)
    n = 0
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "s_p", "s_n", "q"])
            for s in scores:
                w.writerow([s.image_id, repr(float(s.s_p)), repr(float(s.s_n)), repr(float(s.q))])
                n += 1
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc
    return n


def read_scores(path) -> list[QualityScore]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"id", "q"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: scores CSV needs at least id,q columns")
        return [
            QualityScore(float(r["q"]), float(r.get("s_p") or "nan"), float(r.get("s_n") or "nan"), r["id"])
            for r in reader
        ]


def score_corpus(source, bank: PromptBank, tau: float, out_path, params: ToyEncoderParams | None = None) -> int:
    """Write ``id,s_p,s_n,q`` for every row of an embedding store or manifest.

    ``source`` is an :class:`~qalign.store.EmbeddingStore` or a list of
    manifest rows; the latter needs ``params`` to encode the images.
    """
    from . import imaging
    from .store import EmbeddingStore

    if isinstance(source, EmbeddingStore):
        scores = (score_embedding(source.vectors[i].astype(np.float64), bank, tau, sid) for i, sid in enumerate(source.ids))
    else:
        if params is None:
            raise ValueError("scoring a manifest requires encoder parameters")
        scores = (score_image(params, imaging.load_image(r.path), bank, tau, r.id) for r in source)
    return write_scores(out_path, scores)
