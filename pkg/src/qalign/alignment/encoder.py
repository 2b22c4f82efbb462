"""Small differentiable image encoder with hand-written backprop.

    conv 3x3/2 (3->8) -> phi -> conv 3x3/2 (8->16) -> phi
    -> global average pool -> affine 16->d -> L2 normalise

with ``phi(z) = cosh(z) - 1``. Pooling a convex, faster-than-linear response
measures local energy, which drops under blur and rises under noise; a
softplus grows linearly and its pooled output barely reacts to blur.

Convolutions use zero padding 1 and weights laid out ``(out, ky, kx, in)``.
Inputs are centred (``x - 0.5``) before the first layer.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from ..rng import derive_rng

C1, C2 = 8, 16
DEGENERATE_EPS = 1e-8
FIRST_LAYER_GAIN = 2.0  # pushes first-layer responses past the quadratic regime of phi


@dataclass
class ToyEncoderParams:
    w1: np.ndarray  # (8, 3, 3, 3)
    b1: np.ndarray  # (8,)
    w2: np.ndarray  # (16, 3, 3, 8)
    b2: np.ndarray  # (16,)
    w3: np.ndarray  # (d, 16)
    b3: np.ndarray  # (d,)

    @property
    def dim(self) -> int:
        return self.w3.shape[0]

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, f.name) for f in fields(self)]

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    @property
    def size(self) -> int:
        return sum(a.size for a in self.arrays())

    def with_flat(self, vec) -> "ToyEncoderParams":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.size:
            raise ValueError(f"expected {self.size} values, got {vec.size}")
        out, pos = {}, 0
        for f in fields(self):
            a = getattr(self, f.name)
            out[f.name] = vec[pos : pos + a.size].reshape(a.shape).copy()
            pos += a.size
        return ToyEncoderParams(**out)

    def copy(self) -> "ToyEncoderParams":
        return self.with_flat(self.flat())

    @classmethod
    def zeros_like(cls, other: "ToyEncoderParams") -> "ToyEncoderParams":
        return cls(*(np.zeros_like(a) for a in other.arrays()))

    @classmethod
    def shapes(cls, dim: int) -> dict[str, tuple[int, ...]]:
        return {
            "w1": (C1, 3, 3, 3),
            "b1": (C1,),
            "w2": (C2, 3, 3, C1),
            "b2": (C2,),
            "w3": (dim, C2),
            "b3": (dim,),
        }

    @classmethod
    def from_flat(cls, vec, dim: int) -> "ToyEncoderParams":
        template = cls(*(np.zeros(s) for s in cls.shapes(dim).values()))
        return template.with_flat(vec)


def init_params(dim: int = 32, seed: int = 0) -> ToyEncoderParams:
    rng = derive_rng(seed, "encoder-init")
    shapes = ToyEncoderParams.shapes(dim)

    def he(shape, fan_in):
        return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)

    return ToyEncoderParams(
        w1=FIRST_LAYER_GAIN * he(shapes["w1"], 27),
        b1=np.zeros(C1),
        w2=he(shapes["w2"], 9 * C1),
        b2=np.zeros(C2),
        w3=rng.standard_normal(shapes["w3"]) / np.sqrt(C2),
        b3=rng.standard_normal(dim) * 0.1,
    )


def _phi(z):
    return np.cosh(z) - 1.0


def _dphi(z):
    return np.sinh(z)


def _im2col(x):
    """(N, H, W, C) -> (N, Ho, Wo, 9*C) patches for a 3x3 stride-2 pad-1 conv."""
    n, h, w, c = x.shape
    ho, wo = (h - 1) // 2 + 1, (w - 1) // 2 + 1
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = np.empty((n, ho, wo, 3, 3, c))
    for ky in range(3):
        for kx in range(3):
            cols[:, :, :, ky, kx, :] = xp[:, ky : ky + 2 * ho : 2, kx : kx + 2 * wo : 2, :]
    return cols.reshape(n, ho, wo, 9 * c)


def _col2im(dcols, shape):
    n, h, w, c = shape
    ho, wo = dcols.shape[1:3]
    d = dcols.reshape(n, ho, wo, 3, 3, c)
    dxp = np.zeros((n, h + 2, w + 2, c))
    for ky in range(3):
        for kx in range(3):
            dxp[:, ky : ky + 2 * ho : 2, kx : kx + 2 * wo : 2, :] += d[:, :, :, ky, kx, :]
    return dxp[:, 1:-1, 1:-1, :]


def _check_input(images):
    x = np.asarray(images, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[3] != 3:
        raise ValueError(f"expected (N, H, W, 3) images, got {x.shape}")
    if min(x.shape[1:3]) < 8:
        raise ValueError(f"encoder input must be at least 8x8, got {x.shape[1:3]}")
    return x


def forward(params: ToyEncoderParams, images):
    """Embeddings ``(N, d)`` plus the cache needed by :func:`backward`."""
    x = _check_input(images) - 0.5
    n = x.shape[0]
    cols1 = _im2col(x)
    z1 = cols1 @ params.w1.reshape(C1, -1).T + params.b1
    a1 = _phi(z1)
    cols2 = _im2col(a1)
    z2 = cols2 @ params.w2.reshape(C2, -1).T + params.b2
    a2 = _phi(z2)
    pooled = a2.reshape(n, -1, C2).mean(axis=1)
    z = pooled @ params.w3.T + params.b3
    norm = np.linalg.norm(z, axis=1, keepdims=True)
    degenerate = norm[:, 0] == 0
    if degenerate.any():
        z[degenerate, 0] += DEGENERATE_EPS
        norm = np.linalg.norm(z, axis=1, keepdims=True)
    e = z / norm
    cache = (cols1, z1, a1.shape, cols2, z2, pooled, e, norm)
    return e, cache


def backward(params: ToyEncoderParams, cache, d_emb) -> ToyEncoderParams:
    """Parameter gradients given ``d loss / d embedding`` of shape ``(N, d)``."""
    cols1, z1, a1_shape, cols2, z2, pooled, e, norm = cache
    d_emb = np.asarray(d_emb, dtype=np.float64)
    n = e.shape[0]
    dz = (d_emb - e * np.sum(e * d_emb, axis=1, keepdims=True)) / norm
    gw3 = dz.T @ pooled
    gb3 = dz.sum(axis=0)
    dpooled = dz @ params.w3
    ho2, wo2 = z2.shape[1:3]
    da2 = np.broadcast_to(dpooled[:, None, None, :] / (ho2 * wo2), z2.shape)
    dz2 = da2 * _dphi(z2)
    dz2f = dz2.reshape(-1, C2)
    gw2 = (dz2f.T @ cols2.reshape(dz2f.shape[0], -1)).reshape(params.w2.shape)
    gb2 = dz2f.sum(axis=0)
    dcols2 = (dz2f @ params.w2.reshape(C2, -1)).reshape(n, ho2, wo2, -1)
    da1 = _col2im(dcols2, a1_shape)
    dz1 = (da1 * _dphi(z1)).reshape(-1, C1)
    gw1 = (dz1.T @ cols1.reshape(dz1.shape[0], -1)).reshape(params.w1.shape)
    gb1 = dz1.sum(axis=0)
    return ToyEncoderParams(gw1, gb1, gw2, gb2, gw3, gb3)


def encode(params: ToyEncoderParams, patch) -> np.ndarray:
    """Unit-norm embedding of a single image (any size >= 8x8)."""
    return forward(params, patch)[0][0]


def encode_batch(params: ToyEncoderParams, images) -> np.ndarray:
    return forward(params, images)[0]
