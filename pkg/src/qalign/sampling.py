"""Training samples: overlapping crop pairs degraded in lockstep.

A ladder holds ``L`` pairs of crops; pair ``i`` is both crops pushed through
the same distortion chain at level ``i``. On disk a ladder is a directory
``<id>/level<i>_<a|b>.png`` plus ``ladder.json`` recording the chain, seeds
and crop rectangles, which is enough to replay it from the source image.
"""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import degradations, imaging
from .rng import derive_rng

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LadderConfig:
    patch_size: int = 224
    levels: int = 5
    n_distortions: int = 1
    min_overlap: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if not 2 <= self.levels <= degradations.N_LEVELS:
            raise ValueError(f"levels must be in 2..{degradations.N_LEVELS}, got {self.levels}")
        if self.n_distortions < 1:
            raise ValueError(f"n_distortions must be >= 1, got {self.n_distortions}")
        if self.n_distortions > len(degradations.GROUPS):
            raise ValueError(
                f"n_distortions must be <= {len(degradations.GROUPS)} (one kind per group), got {self.n_distortions}"
            )
        if not 0 <= self.min_overlap < 1:
            raise ValueError(f"min_overlap must be in [0, 1), got {self.min_overlap}")
        if self.patch_size < 8:
            raise ValueError(f"patch_size must be >= 8, got {self.patch_size}")


@dataclass
class CropPair:
    crop_a: np.ndarray
    crop_b: np.ndarray
    overlap: float
    source_id: str = ""
    rect_a: tuple[int, int] = (0, 0)  # top-left (y, x)
    rect_b: tuple[int, int] = (0, 0)
    upscaled_from: tuple[int, int] | None = None  # original (h, w) if upscaled


@dataclass
class DegradationLadder:
    pairs: list[tuple[np.ndarray, np.ndarray]]
    applied: list[tuple[str, int]]  # (kind, seed), applied in order
    source_id: str = ""
    pristine: CropPair | None = None

    @property
    def levels(self) -> int:
        return len(self.pairs)


@dataclass
class ManifestRow:
    path: Path
    id: str
    mos: float | None = None


@dataclass
class CorpusSummary:
    processed: int = 0
    failed: int = 0
    failures: list[str] = field(default_factory=list)


def crop_iou(pos_a, pos_b, size: int) -> float:
    dy, dx = abs(pos_a[0] - pos_b[0]), abs(pos_a[1] - pos_b[1])
    if dy >= size or dx >= size:
        return 0.0
    inter = (size - dy) * (size - dx)
    return inter / (2 * size * size - inter)


def prepare_source(img, patch_size: int):
    """Bicubic-upscale ``img`` if either side is below ``patch_size``."""
    arr = imaging.as_image(img)
    h, w = arr.shape[:2]
    if min(h, w) >= patch_size:
        return arr, None
    scale = patch_size / min(h, w)
    nh, nw = max(patch_size, int(np.ceil(h * scale))), max(patch_size, int(np.ceil(w * scale)))
    return imaging.resample(arr, nw, nh, "bicubic"), (h, w)


def _sample_positions(rng, h, w, size, min_overlap):
    """Rejection sampler, uniform over position pairs with IoU >= min_overlap.

    Proposal: ``a`` uniform, ``b`` uniform over the clipped window where it can
    still overlap ``a``; the extra acceptance step ``|window| / max|window|``
    cancels the proposal's bias near the borders.
    """
    ny, nx = h - size + 1, w - size + 1
    full = min(2 * size - 1, ny) * min(2 * size - 1, nx)
    while True:
        a = (int(rng.integers(ny)), int(rng.integers(nx)))
        y0, y1 = max(0, a[0] - size + 1), min(ny, a[0] + size)
        x0, x1 = max(0, a[1] - size + 1), min(nx, a[1] + size)
        b = (int(rng.integers(y0, y1)), int(rng.integers(x0, x1)))
        if rng.random() * full >= (y1 - y0) * (x1 - x0):
            continue
        iou = crop_iou(a, b, size)
        if iou >= min_overlap and (iou > 0 or min_overlap == 0):
            return a, b, iou


def extract_overlapping_crops(img, cfg: LadderConfig, rng: np.random.Generator, source_id: str = "") -> CropPair:
    """Two ``patch_size`` squares whose IoU is at least ``cfg.min_overlap``.

    Crops are snapped to the 8-bit grid so a stored ladder can be replayed
    bit-exactly from the source file.
    """
    src, upscaled = prepare_source(img, cfg.patch_size)
    h, w = src.shape[:2]
    s = cfg.patch_size
    a, b, iou = _sample_positions(rng, h, w, s, cfg.min_overlap)
    crop_a = imaging.quantize8(src[a[0] : a[0] + s, a[1] : a[1] + s])
    crop_b = imaging.quantize8(src[b[0] : b[0] + s, b[1] : b[1] + s])
    return CropPair(crop_a, crop_b, iou, source_id, a, b, upscaled)


def sample_chain(cfg: LadderConfig, rng: np.random.Generator) -> list[tuple[str, int]]:
    """``D`` distinct groups, one kind each, each with its own seed."""
    groups = rng.choice(len(degradations.GROUPS), size=cfg.n_distortions, replace=False)
    chain = []
    for g in groups:
        kinds = degradations.kinds_in_group(degradations.GROUPS[g])
        kind = kinds[int(rng.integers(len(kinds)))]
        chain.append((kind, int(rng.integers(2**63))))
    return chain


def apply_chain(img, chain, level: int) -> np.ndarray:
    out = img
    for kind, seed in chain:
        out = degradations.apply_distortion(out, kind, level, seed)
    return out


def build_ladder(pair: CropPair, cfg: LadderConfig, rng: np.random.Generator, chain=None) -> DegradationLadder:
    if cfg.n_distortions > len(degradations.GROUPS):
        raise ValueError(f"n_distortions must be <= {len(degradations.GROUPS)}")
    chain = sample_chain(cfg, rng) if chain is None else list(chain)
    pairs = [(apply_chain(pair.crop_a, chain, i), apply_chain(pair.crop_b, chain, i)) for i in range(1, cfg.levels + 1)]
    return DegradationLadder(pairs, chain, pair.source_id, pair)


def make_ladder(img, cfg: LadderConfig, source_id: str, *keys) -> DegradationLadder:
    """Crop and degrade ``img`` with a stream derived from ``(cfg.seed, source_id, *keys)``."""
    rng = derive_rng(cfg.seed, "ladder", source_id, *keys)
    pair = extract_overlapping_crops(img, cfg, rng, source_id)
    return build_ladder(pair, cfg, rng)


# ---------------------------------------------------------------- manifests


def read_manifest(path) -> list[ManifestRow]:
    """Read a ``path,id[,mos]`` CSV; relative paths resolve against its directory."""
    path = Path(path)
    base = path.parent
    rows, seen = [], set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"path", "id"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: manifest header must contain path,id[,mos]")
        for rec in reader:
            rid = rec["id"].strip()
            if rid in seen:
                raise ValueError(f"{path}: duplicate id {rid!r}")
            seen.add(rid)
            p = Path(rec["path"].strip())
            mos = rec.get("mos")
            rows.append(ManifestRow(p if p.is_absolute() else base / p, rid, float(mos) if mos not in (None, "") else None))
    return rows


def write_manifest(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        has_mos = any(r.mos is not None for r in rows)
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "id", "mos"] if has_mos else ["path", "id"])
        for r in rows:
            rec = [str(r.path), r.id]
            if has_mos:
                rec.append("" if r.mos is None else repr(float(r.mos)))
            writer.writerow(rec)


# ---------------------------------------------------------------- corpus


def ladder_record(ladder: DegradationLadder, cfg: LadderConfig, source_path=None) -> dict:
    p = ladder.pristine
    return {
        "id": ladder.source_id,
        "source": None if source_path is None else str(source_path),
        "patch_size": cfg.patch_size,
        "levels": list(range(1, ladder.levels + 1)),
        "distortions": [
            {"kind": k, "group": degradations.KINDS[k].group, "seed": s} for k, s in ladder.applied
        ],
        "crops": [{"y": p.rect_a[0], "x": p.rect_a[1]}, {"y": p.rect_b[0], "x": p.rect_b[1]}],
        "overlap": p.overlap,
        "upscaled_from": None if p.upscaled_from is None else list(p.upscaled_from),
    }


def _generate_row(args):
    row, cfg, out_dir = args
    try:
        img = imaging.load_image(row.path)
        ladder = make_ladder(img, cfg, row.id)
        target = Path(out_dir) / row.id
        target.mkdir(parents=True, exist_ok=True)
        for i, (a, b) in enumerate(ladder.pairs, start=1):
            imaging.save_image(target / f"level{i}_a.png", a)
            imaging.save_image(target / f"level{i}_b.png", b)
        with open(target / "ladder.json", "w", encoding="utf-8") as fh:
            json.dump(ladder_record(ladder, cfg, row.path), fh, indent=2, sort_keys=True)
        return None
    except (OSError, ValueError) as exc:
        return f"{row.id}: {exc}"


def generate_corpus(manifest, cfg: LadderConfig, out_dir, jobs: int = 1) -> CorpusSummary:
    """Write one ladder directory per manifest row.

    Each row's randomness comes from ``(cfg.seed, row.id)``, so the output is
    identical for any ``jobs``. Unreadable images are logged and counted.
    """
    rows = read_manifest(manifest) if isinstance(manifest, (str, Path)) else list(manifest)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    work = [(row, cfg, out_dir) for row in rows]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_generate_row, work))
    else:
        results = [_generate_row(w) for w in work]
    summary = CorpusSummary()
    for err in results:
        if err is None:
            summary.processed += 1
        else:
            log.warning("skipping %s", err)
            summary.failed += 1
            summary.failures.append(err)
    return summary


def load_ladder(directory) -> DegradationLadder:
    directory = Path(directory)
    with open(directory / "ladder.json", encoding="utf-8") as fh:
        rec = json.load(fh)
    pairs = [
        (imaging.load_image(directory / f"level{i}_a.png"), imaging.load_image(directory / f"level{i}_b.png"))
        for i in rec["levels"]
    ]
    chain = [(d["kind"], int(d["seed"])) for d in rec["distortions"]]
    return DegradationLadder(pairs, chain, rec["id"])


def load_corpus(directory) -> list[DegradationLadder]:
    directory = Path(directory)
    return [load_ladder(p.parent) for p in sorted(directory.glob("*/ladder.json"))]


def replay_ladder(directory) -> list[tuple[np.ndarray, np.ndarray]]:
    """Recompute a stored ladder from its source image and sidecar record."""
    directory = Path(directory)
    with open(directory / "ladder.json", encoding="utf-8") as fh:
        rec = json.load(fh)
    src, _ = prepare_source(imaging.load_image(rec["source"]), rec["patch_size"])
    s = rec["patch_size"]
    crops = [imaging.quantize8(src[c["y"] : c["y"] + s, c["x"] : c["x"] + s]) for c in rec["crops"]]
    chain = [(d["kind"], int(d["seed"])) for d in rec["distortions"]]
    return [(apply_chain(crops[0], chain, i), apply_chain(crops[1], chain, i)) for i in rec["levels"]]
