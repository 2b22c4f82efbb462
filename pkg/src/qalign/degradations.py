"""Synthetic distortions: 24 kinds in 7 groups, 5 intensity levels each.

``apply_distortion(img, kind, level, seed)`` is a pure function. Stochastic
kinds draw their random field from a stream keyed on ``(seed, kind)`` only, so
the five levels of one ladder share the same noise pattern / block layout and
differ purely in strength.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft, ndimage

from . import imaging
from .imaging import _lab_to_rgb, _rgb_to_hsv, _hsv_to_rgb, _rgb_to_lab, _rgb_to_ycc, _ycc_to_rgb
from .rng import derive_rng

N_LEVELS = 5

GROUPS = (
    "BrightnessChange",
    "Blur",
    "Spatial",
    "Noise",
    "Color",
    "Compression",
    "SharpnessContrast",
)


@dataclass(frozen=True)
class DistortionKind:
    group: str
    kind: str
    description: str
    stochastic: bool = False
    min_size: int = 8


_CATALOGUE = (
    DistortionKind("BrightnessChange", "Brighten", "gamma-curve lift on LAB lightness blended with an RGB curve"),
    DistortionKind("BrightnessChange", "Darken", "inverse gamma-curve drop on LAB lightness blended with an RGB curve"),
    DistortionKind("BrightnessChange", "MeanShift", "constant offset added to every channel, then clamped"),
    DistortionKind("Blur", "GaussianBlur", "separable Gaussian filter"),
    DistortionKind("Blur", "LensBlur", "uniform disk filter"),
    DistortionKind("Blur", "MotionBlur", "linear streak filter at a seeded angle", stochastic=True),
    DistortionKind("Spatial", "Jitter", "per-pixel random displacement, nearest lookup", stochastic=True),
    DistortionKind("Spatial", "NonEccentricityPatch", "16 px patches copied to nearby positions", stochastic=True, min_size=16),
    DistortionKind("Spatial", "Pixelate", "nearest down- then up-scaling"),
    DistortionKind("Spatial", "Quantization", "multi-Otsu luma bands mapped to band means"),
    DistortionKind("Spatial", "ColorBlock", "uniformly coloured 32 px squares pasted at random", stochastic=True, min_size=32),
    DistortionKind("Noise", "WhiteNoise", "additive Gaussian noise in RGB", stochastic=True),
    DistortionKind("Noise", "WhiteNoiseColorComponent", "additive Gaussian noise in YCbCr", stochastic=True),
    DistortionKind("Noise", "ImpulseNoise", "salt-and-pepper pixels", stochastic=True),
    DistortionKind("Noise", "MultiplicativeNoise", "speckle noise x*(1+n)", stochastic=True),
    DistortionKind("Color", "ColorDiffusion", "Gaussian blur of the LAB chroma channels"),
    DistortionKind("Color", "ColorShift", "green channel smeared along a seeded direction, blended through an edge mask", stochastic=True),
    DistortionKind("Color", "ColorSaturation1", "HSV saturation scaled down"),
    DistortionKind("Color", "ColorSaturation2", "LAB chroma scaled up"),
    DistortionKind("Compression", "JPEG2000", "3-level Haar wavelet with detail coefficients hard-thresholded"),
    DistortionKind("Compression", "JPEG", "8x8 DCT quantisation with scaled JPEG tables"),
    DistortionKind("SharpnessContrast", "HighSharpen", "unsharp mask on LAB lightness"),
    DistortionKind("SharpnessContrast", "NonlinearContrastChange", "repeated smoothstep tone curve per RGB channel"),
    DistortionKind("SharpnessContrast", "LinearContrastChange", "linear tone map about mid-grey per RGB channel"),
)

KINDS = {k.kind: k for k in _CATALOGUE}
KIND_NAMES = tuple(k.kind for k in _CATALOGUE)

# Intensity ladders, index 0 = level 1.
LADDERS = {
    "Brighten": (0.85, 0.7, 0.55, 0.4, 0.3),
    "Darken": tuple(1 / g for g in (0.85, 0.7, 0.55, 0.4, 0.3)),
    "MeanShift": (0.08, 0.15, 0.22, 0.30, 0.38),
    "GaussianBlur": (0.8, 1.6, 2.6, 4.0, 6.0),
    "LensBlur": (1, 2, 4, 6, 9),
    "MotionBlur": (4, 7, 11, 16, 23),
    "Jitter": (1, 2, 3, 4, 5),
    "NonEccentricityPatch": (10, 20, 40, 70, 110),
    "Pixelate": (0.6, 0.45, 0.3, 0.2, 0.12),
    "Quantization": (10, 7, 5, 4, 2),
    "ColorBlock": (2, 4, 6, 8, 10),
    "WhiteNoise": (0.02, 0.04, 0.07, 0.11, 0.16),
    "WhiteNoiseColorComponent": (0.02, 0.04, 0.07, 0.11, 0.16),
    "ImpulseNoise": (0.01, 0.03, 0.06, 0.10, 0.16),
    "MultiplicativeNoise": (0.05, 0.10, 0.17, 0.25, 0.35),
    "ColorDiffusion": (1, 2, 4, 6, 9),
    "ColorShift": (2, 4, 7, 10, 14),
    "ColorSaturation1": (0.7, 0.55, 0.4, 0.25, 0.1),
    "ColorSaturation2": (1.6, 2.0, 2.6, 3.3, 4.2),
    "JPEG2000": (0.25, 0.15, 0.08, 0.04, 0.02),
    "JPEG": (43, 36, 24, 12, 7),
    "HighSharpen": (1, 2, 3, 5, 8),
    "NonlinearContrastChange": (1, 2, 3, 4, 6),
    "LinearContrastChange": (0.8, 0.65, 0.5, 0.38, 0.28),
}

PATCH_SIZE = 16  # non-eccentricity patch side
BLOCK_SIZE = 32  # colour block side


def list_kinds() -> list[tuple[str, str, str]]:
    """All 24 kinds as ``(group, kind, description)``, in catalogue order."""
    return [(k.group, k.kind, k.description) for k in _CATALOGUE]


def kinds_in_group(group: str) -> list[str]:
    return [k.kind for k in _CATALOGUE if k.group == group]


def apply_distortion(img, kind: str, level: int, seed: int) -> np.ndarray:
    if kind not in KINDS:
        raise ValueError(f"unknown distortion kind {kind!r}; valid kinds: {', '.join(KIND_NAMES)}")
    if isinstance(level, bool) or not isinstance(level, (int, np.integer)) or not 1 <= level <= N_LEVELS:
        raise ValueError(f"level must be an integer in 1..{N_LEVELS}, got {level!r}")
    arr = imaging.as_image(img)
    spec = KINDS[kind]
    h, w = arr.shape[:2]
    if min(h, w) < spec.min_size:
        raise ValueError(f"{kind} needs an image of at least {spec.min_size}x{spec.min_size}, got {h}x{w}")
    param = LADDERS[kind][level - 1]
    rng = derive_rng(seed, "distortion", kind) if spec.stochastic else None
    out = _IMPLS[kind](arr, param, rng)
    return imaging.clamp(out)


# ---------------------------------------------------------------- brightness


def _gamma_blend(img, gamma):
    lab = _rgb_to_lab(img)
    lab[..., 0] = np.clip(lab[..., 0], 0, 1) ** gamma
    via_lab = np.clip(_lab_to_rgb(lab), 0, 1)
    return 0.5 * via_lab + 0.5 * img**gamma


def _brighten(img, gamma, rng):
    return _gamma_blend(img, gamma)


def _darken(img, gamma, rng):
    return _gamma_blend(img, gamma)


def _mean_shift(img, offset, rng):
    return img + offset


# ---------------------------------------------------------------- blur


def _gaussian(img, sigma, rng):
    return imaging.gaussian_blur(img, sigma)


def _disk_kernel(radius):
    y, x = np.mgrid[-radius : radius + 1, -radius : radius + 1]
    k = (x**2 + y**2 <= radius**2 + 0.5).astype(np.float64)
    return k / k.sum()


def _lens(img, radius, rng):
    return ndimage.correlate(img, _disk_kernel(radius)[:, :, None], mode="reflect")


def motion_kernel(length: int, angle: float) -> np.ndarray:
    size = length if length % 2 else length + 1
    c = size // 2
    k = np.zeros((size, size))
    ts = np.linspace(-(length - 1) / 2, (length - 1) / 2, 4 * length)
    ys = c + ts * np.sin(angle)
    xs = c + ts * np.cos(angle)
    y0, x0 = np.floor(ys).astype(int), np.floor(xs).astype(int)
    fy, fx = ys - y0, xs - x0
    for dy, wy in ((0, 1 - fy), (1, fy)):
        for dx, wx in ((0, 1 - fx), (1, fx)):
            yy = np.clip(y0 + dy, 0, size - 1)
            xx = np.clip(x0 + dx, 0, size - 1)
            np.add.at(k, (yy, xx), wy * wx)
    return k / k.sum()


def _motion(img, length, rng):
    angle = rng.uniform(0, np.pi)
    return ndimage.correlate(img, motion_kernel(length, angle)[:, :, None], mode="reflect")


# ---------------------------------------------------------------- spatial


def _jitter(img, radius, rng):
    h, w = img.shape[:2]
    u = rng.uniform(-1, 1, size=(2, h, w))
    dy = np.rint(u[0] * radius).astype(int)
    dx = np.rint(u[1] * radius).astype(int)
    yy = np.clip(np.arange(h)[:, None] + dy, 0, h - 1)
    xx = np.clip(np.arange(w)[None, :] + dx, 0, w - 1)
    return img[yy, xx]


def _patch_moves(rng, h, w, count, size):
    src_y = rng.integers(0, h - size + 1, count)
    src_x = rng.integers(0, w - size + 1, count)
    off = rng.integers(4, size + 1, size=(2, count)) * rng.choice([-1, 1], size=(2, count))
    dst_y = np.clip(src_y + off[0], 0, h - size)
    dst_x = np.clip(src_x + off[1], 0, w - size)
    return src_y, src_x, dst_y, dst_x


def _non_eccentricity(img, count, rng):
    h, w = img.shape[:2]
    moves = _patch_moves(rng, h, w, LADDERS["NonEccentricityPatch"][-1], PATCH_SIZE)
    out = img.copy()
    s = PATCH_SIZE
    # paint the first `count` moves with earlier ones on top, so a higher level
    # only ever adds displaced pixels to those of the level below
    for sy, sx, dy, dx in reversed(list(zip(*moves))[:count]):
        out[dy : dy + s, dx : dx + s] = img[sy : sy + s, sx : sx + s]
    return out


def _pixelate(img, factor, rng):
    h, w = img.shape[:2]
    sw, sh = max(1, round(w * factor)), max(1, round(h * factor))
    small = imaging.resample(img, sw, sh, "nearest")
    return imaging.resample(small, w, h, "nearest")


def _class_scores(hist):
    p = hist / hist.sum()
    centers = (np.arange(hist.size) + 0.5) / hist.size
    P = np.concatenate([[0.0], np.cumsum(p)])
    S = np.concatenate([[0.0], np.cumsum(p * centers)])
    dP = P[None, :] - P[:, None]
    dS = S[None, :] - S[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        score = np.where(dP > 0, dS**2 / dP, 0.0)
    # score[i, j]: contribution of a class covering bins i..j-1 (i < j).
    score[np.tril_indices(hist.size + 1)] = -np.inf
    return score


def multi_otsu_bins(hist, n_classes: int) -> list[int]:
    """Class boundaries (bin indices) maximising between-class variance.

    Dynamic programme over contiguous partitions of the histogram; returns
    ``n_classes - 1`` increasing boundaries, class k covering bins
    ``[b_{k-1}, b_k)``.
    """
    hist = np.asarray(hist, dtype=np.float64)
    nb = hist.size
    if n_classes < 2 or n_classes > nb:
        raise ValueError(f"n_classes must be in 2..{nb}")
    score = _class_scores(hist)
    best = score[0].copy()  # best[j]: one class covering bins 0..j-1
    back = []
    for _ in range(n_classes - 1):
        total = best[:, None] + score
        arg = np.argmax(total, axis=0)
        back.append(arg)
        best = total[arg, np.arange(nb + 1)]
    bounds = []
    j = nb
    for arg in reversed(back):
        j = int(arg[j])
        bounds.append(j)
    return bounds[::-1]


def otsu_thresholds(values, n_classes: int, bins: int = 256) -> np.ndarray:
    hist, _ = np.histogram(values, bins=bins, range=(0.0, 1.0))
    return np.asarray(multi_otsu_bins(hist, n_classes), dtype=np.float64) / bins


def _quantization(img, n_levels, rng):
    y = np.clip(imaging.luma(img), 0, 1)
    bands = np.digitize(y, otsu_thresholds(y, n_levels))
    out = np.empty_like(img)
    for b in np.unique(bands):
        m = bands == b
        out[m] = img[m].mean(axis=0)
    return out


def _color_block(img, count, rng):
    h, w = img.shape[:2]
    n = LADDERS["ColorBlock"][-1]
    ys = rng.integers(0, h - BLOCK_SIZE + 1, n)
    xs = rng.integers(0, w - BLOCK_SIZE + 1, n)
    colors = rng.uniform(0, 1, size=(n, 3))
    out = img.copy()
    for y, x, c in reversed(list(zip(ys, xs, colors))[:count]):  # earlier blocks on top
        out[y : y + BLOCK_SIZE, x : x + BLOCK_SIZE] = c
    return out


# ---------------------------------------------------------------- noise


def _white_noise(img, sigma, rng):
    return img + sigma * rng.standard_normal(img.shape)


def _white_noise_cc(img, sigma, rng):
    ycc = _rgb_to_ycc(img) + sigma * rng.standard_normal(img.shape)
    return _ycc_to_rgb(ycc)


def _impulse(img, fraction, rng):
    h, w = img.shape[:2]
    u = rng.random((h, w))
    salt = rng.random((h, w)) < 0.5
    out = img.copy()
    hit = u < fraction
    out[hit & salt] = 1.0
    out[hit & ~salt] = 0.0
    return out


def _multiplicative(img, sigma, rng):
    return img * (1 + sigma * rng.standard_normal(img.shape))


# ---------------------------------------------------------------- colour


def _color_diffusion(img, sigma, rng):
    lab = _rgb_to_lab(img)
    lab[..., 1:] = imaging.gaussian_blur(lab[..., 1:], sigma)
    return _lab_to_rgb(lab)


def _color_shift(img, amount, rng):
    angle = rng.uniform(0, 2 * np.pi)
    step = np.array([np.sin(angle), np.cos(angle)])
    g = img[..., 1]
    # average of translations along the path 1..amount px; a single translation
    # loses severity on periodic texture once the shift hits the period
    moved = np.mean(
        [ndimage.shift(g, t * step, order=1, mode="nearest") for t in range(1, amount + 1)],
        axis=0,
    )
    y = imaging.luma(img)
    mag = np.hypot(ndimage.sobel(y, 0, mode="reflect"), ndimage.sobel(y, 1, mode="reflect"))
    mag = imaging.gaussian_blur(mag, amount / 2)
    peak = mag.max()
    mask = mag / peak if peak > 0 else mag
    out = img.copy()
    out[..., 1] = g + mask * (moved - g)
    return out


def _saturation_hsv(img, factor, rng):
    hsv = _rgb_to_hsv(img)
    hsv[..., 1] *= factor
    return _hsv_to_rgb(hsv)


def _saturation_lab(img, factor, rng):
    lab = _rgb_to_lab(img)
    zero = 128 / 255
    lab[..., 1:] = zero + factor * (lab[..., 1:] - zero)
    return _lab_to_rgb(lab)


# ---------------------------------------------------------------- compression

_JPEG_LUMA = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)
_JPEG_CHROMA = np.full((8, 8), 99.0)
_JPEG_CHROMA[:4, :4] = [[17, 18, 24, 47], [18, 21, 26, 66], [24, 26, 56, 99], [47, 66, 99, 99]]


def jpeg_table(base: np.ndarray, quality: int) -> np.ndarray:
    scale = 5000 / quality if quality < 50 else 200 - 2 * quality
    return np.clip(np.floor((base * scale + 50) / 100), 1, 255)


def _pad_to(img, multiple):
    h, w = img.shape[:2]
    ph, pw = -h % multiple, -w % multiple
    return np.pad(img, ((0, ph), (0, pw), (0, 0)), mode="symmetric")


def _blocks(chan):
    h, w = chan.shape
    return chan.reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3)


def _unblocks(blocks):
    nh, nw = blocks.shape[:2]
    return blocks.transpose(0, 2, 1, 3).reshape(nh * 8, nw * 8)


def _jpeg(img, quality, rng):
    h, w = img.shape[:2]
    ycc = _pad_to(_rgb_to_ycc(img), 8) * 255 - 128
    out = np.empty_like(ycc)
    for c, base in enumerate((_JPEG_LUMA, _JPEG_CHROMA, _JPEG_CHROMA)):
        q = jpeg_table(base, quality)
        coef = fft.dctn(_blocks(ycc[..., c]), type=2, axes=(2, 3), norm="ortho")
        coef = np.round(coef / q) * q
        out[..., c] = _unblocks(fft.idctn(coef, type=2, axes=(2, 3), norm="ortho"))
    return _ycc_to_rgb((out[:h, :w] + 128) / 255)


def _haar2(x):
    a = (x[0::2] + x[1::2]) / np.sqrt(2)
    d = (x[0::2] - x[1::2]) / np.sqrt(2)
    ll = (a[:, 0::2] + a[:, 1::2]) / np.sqrt(2)
    lh = (a[:, 0::2] - a[:, 1::2]) / np.sqrt(2)
    hl = (d[:, 0::2] + d[:, 1::2]) / np.sqrt(2)
    hh = (d[:, 0::2] - d[:, 1::2]) / np.sqrt(2)
    return ll, (lh, hl, hh)


def _ihaar2(ll, details):
    lh, hl, hh = details
    a = np.empty((ll.shape[0], ll.shape[1] * 2) + ll.shape[2:])
    d = np.empty_like(a)
    a[:, 0::2], a[:, 1::2] = (ll + lh) / np.sqrt(2), (ll - lh) / np.sqrt(2)
    d[:, 0::2], d[:, 1::2] = (hl + hh) / np.sqrt(2), (hl - hh) / np.sqrt(2)
    x = np.empty((a.shape[0] * 2,) + a.shape[1:])
    x[0::2], x[1::2] = (a + d) / np.sqrt(2), (a - d) / np.sqrt(2)
    return x


def _keep_largest(bands, fraction):
    flat = np.concatenate([b.ravel() for b in bands])
    keep = int(np.ceil(fraction * flat.size))
    order = np.argsort(-np.abs(flat), kind="stable")
    mask = np.zeros(flat.size, dtype=bool)
    mask[order[:keep]] = True
    out, start = [], 0
    for b in bands:
        out.append(np.where(mask[start : start + b.size].reshape(b.shape), b, 0.0))
        start += b.size
    return tuple(out)


def _jpeg2000(img, fraction, rng):
    h, w = img.shape[:2]
    ll = _pad_to(img, 8)
    levels = []
    for _ in range(3):
        ll, det = _haar2(ll)
        levels.append(det)
    for det in reversed(levels):
        ll = _ihaar2(ll, _keep_largest(det, fraction))
    return ll[:h, :w]


# ---------------------------------------------------------------- sharpness/contrast


def _high_sharpen(img, amount, rng):
    lab = _rgb_to_lab(img)
    L = lab[..., 0]
    lab[..., 0] = np.clip(L + amount * (L - imaging.gaussian_blur(L, 3.0)), 0, 1)
    return _lab_to_rgb(lab)


def _nonlinear_contrast(img, repeats, rng):
    out = img
    for _ in range(repeats):
        out = out * out * (3 - 2 * out)
    return out


def _linear_contrast(img, slope, rng):
    return slope * (img - 0.5) + 0.5


_IMPLS = {
    "Brighten": _brighten,
    "Darken": _darken,
    "MeanShift": _mean_shift,
    "GaussianBlur": _gaussian,
    "LensBlur": _lens,
    "MotionBlur": _motion,
    "Jitter": _jitter,
    "NonEccentricityPatch": _non_eccentricity,
    "Pixelate": _pixelate,
    "Quantization": _quantization,
    "ColorBlock": _color_block,
    "WhiteNoise": _white_noise,
    "WhiteNoiseColorComponent": _white_noise_cc,
    "ImpulseNoise": _impulse,
    "MultiplicativeNoise": _multiplicative,
    "ColorDiffusion": _color_diffusion,
    "ColorShift": _color_shift,
    "ColorSaturation1": _saturation_hsv,
    "ColorSaturation2": _saturation_lab,
    "JPEG2000": _jpeg2000,
    "JPEG": _jpeg,
    "HighSharpen": _high_sharpen,
    "NonlinearContrastChange": _nonlinear_contrast,
    "LinearContrastChange": _linear_contrast,
}
