"""Correlation metrics, logistic-mapped PLCC, intensity sweeps and gMAD."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import rankdata

from . import degradations, imaging
from .rng import derive_seed

log = logging.getLogger(__name__)


class DegenerateCorrelation(ValueError):
    """Raised when a correlation is undefined (zero variance)."""


def _check_pair(pred, mos, min_n=3):
    x = np.asarray(pred, dtype=np.float64).ravel()
    y = np.asarray(mos, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} predictions vs {y.size} targets")
    if x.size < min_n:
        raise ValueError(f"need at least {min_n} items, got {x.size}")
    return x, y


def pearson(x, y) -> float:
    x, y = _check_pair(x, y)
    dx, dy = x - x.mean(), y - y.mean()
    den = np.sqrt(np.sum(dx * dx) * np.sum(dy * dy))
    if den == 0:
        raise DegenerateCorrelation("zero variance")
    return float(np.clip(np.sum(dx * dy) / den, -1.0, 1.0))


def srcc(pred, mos) -> float:
    """Spearman correlation: Pearson on average ranks."""
    x, y = _check_pair(pred, mos)
    return pearson(rankdata(x), rankdata(y))


# ---------------------------------------------------------------- logistic fit


@dataclass
class LogisticParams:
    beta1: float
    beta2: float
    beta3: float
    beta4: float

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        z = -(x - self.beta3) / abs(self.beta4)
        return self.beta2 + (self.beta1 - self.beta2) * _expit(-z)

    def as_tuple(self):
        return (self.beta1, self.beta2, self.beta3, self.beta4)


def _expit(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class LogisticFit:
    params: LogisticParams
    iterations: int
    converged: bool
    degenerate: bool = False  # True: identity mapping used instead

    def predict(self, x):
        return np.asarray(x, dtype=np.float64) if self.degenerate else self.params(x)


def _jacobian(b, x):
    b1, b2, b3, b4 = b
    a = abs(b4)
    s = _expit((x - b3) / a)
    ds = s * (1 - s)
    return np.stack(
        [s, 1 - s, -(b1 - b2) * ds / a, -(b1 - b2) * ds * (x - b3) / a**2 * np.sign(b4)],
        axis=1,
    )


def fit_logistic(pred, mos, max_iter: int = 500, rtol: float = 1e-10) -> LogisticFit:
    """Levenberg-Marquardt least squares for the four-parameter logistic.

    Starts from (max mos, min mos, mean pred, std pred / 4); stops once an
    accepted step changes the loss by less than ``rtol`` relative, or after
    ``max_iter`` iterations.
    """
    x, y = _check_pair(pred, mos, min_n=5)
    if np.ptp(x) == 0:
        raise ValueError("predictions are constant")
    b = np.array([y.max(), y.min(), x.mean(), x.std() / 4])
    if np.ptp(y) == 0:
        log.warning("constant targets; logistic fit is degenerate")
        return LogisticFit(LogisticParams(*b), 0, False, degenerate=True)

    def loss(beta):
        r = y - LogisticParams(*beta)(x)
        return float(r @ r), r

    cur, r = loss(b)
    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        J = _jacobian(b, x)
        A = J.T @ J
        g = J.T @ r
        step = None
        while lam < 1e16:
            M = A + lam * np.diag(np.maximum(np.diag(A), 1e-12))
            try:
                step = np.linalg.solve(M, g)
            except np.linalg.LinAlgError:
                step = None
                break
            cand = b + step
            if cand[3] == 0 or not np.all(np.isfinite(cand)):
                lam *= 10
                continue
            new, r_new = loss(cand)
            if new < cur:
                lam = max(lam / 10, 1e-12)
                break
            lam *= 10
        else:
            converged = True  # no further descent direction
            break
        if step is None:
            log.warning("singular normal equations; falling back to identity mapping")
            return LogisticFit(LogisticParams(*b), it, False, degenerate=True)
        rel = (cur - new) / max(cur, 1e-300)
        b, cur, r = cand, new, r_new
        if rel < rtol or cur == 0.0:
            converged = True
            break
    return LogisticFit(LogisticParams(*map(float, b)), it, converged)


def plcc(pred, mos, fit: LogisticFit | None = None) -> float:
    """Pearson correlation between logistic-mapped predictions and targets."""
    x, y = _check_pair(pred, mos, min_n=5)
    fit = fit_logistic(x, y) if fit is None else fit
    if fit.degenerate and np.ptp(y) == 0:
        raise DegenerateCorrelation("targets are constant")
    return pearson(fit.predict(x), y)


@dataclass
class EvalReport:
    n: int
    srcc: float
    plcc: float
    logistic: dict
    fit_converged: bool
    fit_degenerate: bool
    residuals: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(pred, mos) -> EvalReport:
    x, y = _check_pair(pred, mos)
    fit = fit_logistic(x, y)
    return EvalReport(
        n=int(x.size),
        srcc=srcc(x, y),
        plcc=plcc(x, y, fit),
        logistic=asdict(fit.params),
        fit_converged=fit.converged,
        fit_degenerate=fit.degenerate,
        residuals=[float(v) for v in y - fit.predict(x)],
    )


# ---------------------------------------------------------------- intensity sweep


@dataclass
class SweepResult:
    rows: list[tuple[str, int, float]]  # (kind, level, mean score)
    srcc: dict[str, float]
    degenerate: list[str]

    def mean_srcc(self) -> float:
        return float(np.mean(list(self.srcc.values())))


def intensity_sweep(
    scorer: Callable,
    images: Sequence[np.ndarray],
    kinds: Sequence[str] | None = None,
    levels: Sequence[int] = (1, 2, 3, 4, 5),
    seed: int = 0,
    full_reference: bool = False,
) -> SweepResult:
    """Mean score per (kind, level) and per-kind Spearman(level, mean score).

    ``scorer(img)`` returns a quality score; with ``full_reference`` it is
    called as ``scorer(img, pristine)``. Image ``k`` is degraded with a seed
    derived from ``(seed, k)`` so every kind sees the same random stream per
    image. A kind whose mean scores are constant gets SRCC 0 and is listed in
    ``degenerate``.
    """
    if not images:
        raise ValueError("need at least one image")
    kinds = list(degradations.KIND_NAMES if kinds is None else kinds)
    if not kinds:
        raise ValueError("need at least one kind")
    seeds = [derive_seed(seed, "sweep", k) for k in range(len(images))]
    rows, per_kind, degenerate = [], {}, []
    for kind in kinds:
        means = []
        for level in levels:
            vals = []
            for img, s in zip(images, seeds):
                out = degradations.apply_distortion(img, kind, level, s)
                vals.append(float(scorer(out, img) if full_reference else scorer(out)))
            means.append(float(np.mean(vals)))
            rows.append((kind, int(level), means[-1]))
        try:
            per_kind[kind] = srcc(list(levels), means)
        except DegenerateCorrelation:
            per_kind[kind] = 0.0
            degenerate.append(kind)
    return SweepResult(rows, per_kind, degenerate)


def psnr_oracle(img, pristine) -> float:
    """Full-reference stand-in for a perfect quality model."""
    return imaging.psnr(pristine, img)


# ---------------------------------------------------------------- gMAD


@dataclass
class GmadEntry:
    anchor: float
    image_id_low: str | None
    image_id_high: str | None
    attacker_gap: float
    defender_band: tuple[float, float]
    band_size: int

    @property
    def empty(self) -> bool:
        return self.image_id_low is None


@dataclass
class GmadSelection:
    entries: list[GmadEntry]

    def to_dict(self) -> dict:
        return {"entries": [asdict(e) for e in self.entries]}


def _as_score_map(scores):
    if isinstance(scores, dict):
        return {str(k): float(v) for k, v in scores.items()}
    out = {}
    for sid, q in scores:
        out[str(sid)] = float(q)
    return out


def gmad_select(defender_scores, attacker_scores, levels: int = 2, band_width: float = 0.05, anchors=None) -> GmadSelection:
    """Per defender quality level, the in-band pair the attacker separates most.

    Level ``k`` of ``levels`` is anchored at defender quantile
    ``(k + 0.5) / levels`` (0.25 and 0.75 for two levels). Its band holds the
    items whose defender score lies between the quantiles ``anchor -+
    band_width / 2``; the selected pair is the band's attacker minimum and
    maximum.
    """
    d = _as_score_map(defender_scores)
    a = _as_score_map(attacker_scores)
    if set(d) != set(a):
        raise ValueError("defender and attacker scores must cover the same ids")
    ids = list(d)
    dv = np.array([d[i] for i in ids])
    av = np.array([a[i] for i in ids])
    anchors = [(k + 0.5) / levels for k in range(levels)] if anchors is None else list(anchors)
    entries = []
    for anchor in anchors:
        lo_q, hi_q = max(0.0, anchor - band_width / 2), min(1.0, anchor + band_width / 2)
        lo, hi = (float(v) for v in np.quantile(dv, [lo_q, hi_q]))
        members = np.flatnonzero((dv >= lo) & (dv <= hi))
        if members.size < 2:
            entries.append(GmadEntry(anchor, None, None, 0.0, (lo, hi), int(members.size)))
            continue
        i_lo = members[np.argmin(av[members])]
        i_hi = members[np.argmax(av[members])]
        entries.append(GmadEntry(anchor, ids[i_lo], ids[i_hi], float(av[i_hi] - av[i_lo]), (lo, hi), int(members.size)))
    return GmadSelection(entries)
