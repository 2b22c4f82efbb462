"""Image buffers, colour conversions, filtering, resampling and PSNR.

Images are ``(H, W, 3)`` float64 arrays with values in ``[0, 1]``. Every public
function returns a fresh, clamped array and never mutates its input.
"""
from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
from scipy import ndimage

COLORSPACES = ("RGB", "LAB", "HSV", "YCbCr")

# Returned by psnr() for identical images.
PSNR_INF = sys.float_info.max

# D65 reference white, sRGB primaries.
_WHITE_D65 = np.array([0.95047, 1.0, 1.08883])
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_XYZ_TO_RGB = np.linalg.inv(_RGB_TO_XYZ)

# Full-range BT.601.
_RGB_TO_YCC = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ]
)
_YCC_TO_RGB = np.linalg.inv(_RGB_TO_YCC)

_LAB_EPS = 216 / 24389
_LAB_KAPPA = 24389 / 27


def as_image(img, name: str = "img") -> np.ndarray:
    """Validate ``img`` as an image buffer and return it as float64."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be at least 1x1, got {arr.shape[:2]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def clamp(img: np.ndarray) -> np.ndarray:
    return np.clip(img, 0.0, 1.0)


def quantize8(img: np.ndarray) -> np.ndarray:
    """Snap values onto the 8-bit grid used by files (round(v*255)/255)."""
    return np.round(clamp(img) * 255.0) / 255.0


def luma(img: np.ndarray) -> np.ndarray:
    return img @ _RGB_TO_YCC[0]


# ---------------------------------------------------------------- colour


def _srgb_decode(c):
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _srgb_encode(c):
    c = np.clip(c, 0.0, None)
    return np.where(c <= 0.0031308, 12.92 * c, 1.055 * c ** (1 / 2.4) - 0.055)


def _rgb_to_lab(rgb):
    xyz = _srgb_decode(rgb) @ _RGB_TO_XYZ.T / _WHITE_D65
    f = np.where(xyz > _LAB_EPS, np.cbrt(xyz), (_LAB_KAPPA * xyz + 16) / 116)
    L = 116 * f[..., 1] - 16
    a = 500 * (f[..., 0] - f[..., 1])
    b = 200 * (f[..., 1] - f[..., 2])
    return np.stack([L / 100, (a + 128) / 255, (b + 128) / 255], axis=-1)


def _lab_to_rgb(lab):
    L = lab[..., 0] * 100
    a = lab[..., 1] * 255 - 128
    b = lab[..., 2] * 255 - 128
    fy = (L + 16) / 116
    f = np.stack([fy + a / 500, fy, fy - b / 200], axis=-1)
    f3 = f**3
    xyz = np.where(f3 > _LAB_EPS, f3, (116 * f - 16) / _LAB_KAPPA)
    # Y uses the L-based branch to stay continuous at the threshold.
    xyz[..., 1] = np.where(L > _LAB_KAPPA * _LAB_EPS, fy**3, L / _LAB_KAPPA)
    return _srgb_encode((xyz * _WHITE_D65) @ _XYZ_TO_RGB.T)


def _rgb_to_hsv(rgb):
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    c = v - rgb.min(axis=-1)
    s = np.divide(c, v, out=np.zeros_like(v), where=v > 0)
    safe = np.where(c > 0, c, 1.0)
    h = np.where(
        v == r,
        ((g - b) / safe) % 6,
        np.where(v == g, (b - r) / safe + 2, (r - g) / safe + 4),
    )
    h = np.where(c > 0, h / 6, 0.0)
    return np.stack([h, s, v], axis=-1)


def _hsv_to_rgb(hsv):
    h, s, v = hsv[..., 0] % 1.0, hsv[..., 1], hsv[..., 2]
    # Standard piecewise form: k = (n + 6h) mod 6.
    out = []
    for n in (5, 3, 1):
        k = (n + 6 * h) % 6
        out.append(v - v * s * np.clip(np.minimum(k, 4 - k), 0, 1))
    return np.stack(out, axis=-1)


def _rgb_to_ycc(rgb):
    ycc = rgb @ _RGB_TO_YCC.T
    ycc[..., 1:] += 0.5
    return ycc


def _ycc_to_rgb(ycc):
    ycc = ycc.copy()
    ycc[..., 1:] -= 0.5
    return ycc @ _YCC_TO_RGB.T


_TO_RGB = {"LAB": _lab_to_rgb, "HSV": _hsv_to_rgb, "YCbCr": _ycc_to_rgb}
_FROM_RGB = {"LAB": _rgb_to_lab, "HSV": _rgb_to_hsv, "YCbCr": _rgb_to_ycc}


def convert_colorspace(img, target: str, source: str = "RGB") -> np.ndarray:
    """Convert between RGB and one of LAB, HSV, YCbCr.

    LAB channels are stored rescaled into [0, 1] as (L/100, (a+128)/255,
    (b+128)/255) with a D65 white point. YCbCr is full-range BT.601 with
    chroma offset by 0.5. Conversions between two non-RGB spaces go through RGB.
    """
    if source not in COLORSPACES or target not in COLORSPACES:
        raise ValueError(f"unsupported conversion {source} -> {target}")
    arr = as_image(img)
    if source == target:
        return clamp(arr.copy())
    rgb = arr if source == "RGB" else clamp(_TO_RGB[source](arr))
    if target == "RGB":
        return clamp(rgb)
    return clamp(_FROM_RGB[target](rgb))


# ---------------------------------------------------------------- filtering


def convolve2d(img, kernel, border: str = "reflect") -> np.ndarray:
    """Per-channel 2-D correlation with symmetric (edge-repeating) reflection.

    ``kernel`` may be rectangular but both sides must be odd and no larger
    than the image. The result is clamped to [0, 1].
    """
    return clamp(correlate(img, kernel, border))


def correlate(img, kernel, border: str = "reflect") -> np.ndarray:
    """Unclamped version of :func:`convolve2d`."""
    if border != "reflect":
        raise ValueError(f"unsupported border mode {border!r}")
    arr = as_image(img)
    k = np.atleast_2d(np.asarray(kernel, dtype=np.float64))
    if k.ndim != 2:
        raise ValueError("kernel must be 2-D")
    kh, kw = k.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"kernel sides must be odd, got {k.shape}")
    if kh > arr.shape[0] or kw > arr.shape[1]:
        raise ValueError(f"kernel {k.shape} larger than image {arr.shape[:2]}")
    return ndimage.correlate(arr, k[:, :, None], mode="reflect")


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    radius = int(np.ceil(3 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(channels: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur over the first two axes (kernel 2*ceil(3s)+1)."""
    k = gaussian_kernel1d(sigma)
    out = ndimage.correlate1d(channels, k, axis=0, mode="reflect")
    return ndimage.correlate1d(out, k, axis=1, mode="reflect")


# ---------------------------------------------------------------- resampling


def _cubic(t, a=-0.5):
    t = np.abs(t)
    return np.where(
        t <= 1,
        (a + 2) * t**3 - (a + 3) * t**2 + 1,
        np.where(t < 2, a * t**3 - 5 * a * t**2 + 8 * a * t - 4 * a, 0.0),
    )


def _resample_matrix(n_in: int, n_out: int, method: str) -> np.ndarray:
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    w = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    if method == "nearest":
        idx = np.clip(np.floor(src + 0.5).astype(int), 0, n_in - 1)
        w[rows, idx] = 1.0
    elif method == "bilinear":
        src = np.clip(src, 0, n_in - 1)
        lo = np.floor(src).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = src - lo
        np.add.at(w, (rows, lo), 1 - frac)
        np.add.at(w, (rows, hi), frac)
    elif method == "bicubic":
        base = np.floor(src).astype(int)
        for off in (-1, 0, 1, 2):
            idx = base + off
            np.add.at(w, (rows, np.clip(idx, 0, n_in - 1)), _cubic(src - idx))
    else:
        raise ValueError(f"unknown resampling method {method!r}")
    return w


def resample(img, out_w: int, out_h: int, method: str = "bilinear") -> np.ndarray:
    """Resize with pixel-centre alignment: src = (dst + 0.5) * scale - 0.5."""
    if out_w < 1 or out_h < 1:
        raise ValueError(f"output size must be positive, got {out_w}x{out_h}")
    arr = as_image(img)
    wy = _resample_matrix(arr.shape[0], out_h, method)
    wx = _resample_matrix(arr.shape[1], out_w, method)
    return clamp(np.einsum("ah,hwc,bw->abc", wy, arr, wx, optimize=True))


# ---------------------------------------------------------------- metrics


def psnr(a, b) -> float:
    """PSNR in dB for peak 1.0; identical inputs give :data:`PSNR_INF`."""
    x, y = as_image(a, "a"), as_image(b, "b")
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return PSNR_INF
    return 10.0 * np.log10(1.0 / mse)


# ---------------------------------------------------------------- file I/O

_FORMATS = {".png": "PNG", ".jpg": "JPEG", ".jpeg": "JPEG"}


def load_image(path) -> np.ndarray:
    from PIL import Image

    path = Path(path)
    if path.suffix.lower() not in _FORMATS:
        raise ValueError(f"{path}: unsupported image format (PNG or JPEG only)")
    with Image.open(path) as im:
        if im.format not in ("PNG", "JPEG"):
            raise ValueError(f"{path}: unsupported image format {im.format}")
        rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
    return rgb / 255.0


def save_image(path, img) -> None:
    from PIL import Image

    path = Path(path)
    fmt = _FORMATS.get(path.suffix.lower())
    if fmt is None:
        raise ValueError(f"{path}: unsupported image format (PNG or JPEG only)")
    data = np.round(clamp(as_image(img)) * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path, format=fmt)
