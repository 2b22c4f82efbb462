"""Binary embedding store.

Layout (little-endian)::

    b"QEMB" | version u16 | count u32 | dim u32 | count*dim float32 (row-major)
    | count UTF-8 ids, each terminated by "\\n"

Prompt banks and precomputed image features use it directly. Encoder
parameters reuse the same container as a single unnormalised row.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"QEMB"
VERSION = 1
_HEADER = struct.Struct("<4sHII")
UNIT_TOL = 1e-4


class StoreFormatError(ValueError):
    pass


@dataclass
class EmbeddingStore:
    ids: list[str]
    vectors: np.ndarray  # (count, dim) float32

    def __len__(self):
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def get(self, image_id: str) -> np.ndarray:
        try:
            i = self.ids.index(image_id)
        except ValueError:
            raise KeyError(f"no embedding with id {image_id!r}") from None
        return self.vectors[i].astype(np.float64)


def encode_store(ids, vectors, check_unit: bool = True) -> bytes:
    ids = [str(i) for i in ids]
    vec = np.asarray(vectors, dtype=np.float64)
    if vec.size == 0:
        vec = vec.reshape(len(ids), vec.shape[-1] if vec.ndim == 2 else 0)
    if vec.ndim != 2 or vec.shape[0] != len(ids):
        raise ValueError(f"need one vector per id: {len(ids)} ids, vectors {vec.shape}")
    if len(set(ids)) != len(ids):
        raise ValueError("ids must be unique")
    if any("\n" in i or "\r" in i for i in ids):
        raise ValueError("ids must not contain newlines")
    if check_unit and len(ids):
        norms = np.linalg.norm(vec, axis=1)
        if np.any(np.abs(norms - 1) > UNIT_TOL):
            raise ValueError("every stored vector must be unit-norm")
    head = _HEADER.pack(MAGIC, VERSION, len(ids), vec.shape[1])
    body = vec.astype("<f4").tobytes()
    tail = "".join(i + "\n" for i in ids).encode("utf-8")
    return head + body + tail


def decode_store(data: bytes, check_unit: bool = True, source: str = "<bytes>") -> EmbeddingStore:
    if len(data) < _HEADER.size:
        raise StoreFormatError(f"{source}: truncated header ({len(data)} bytes)")
    magic, version, count, dim = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise StoreFormatError(f"{source}: bad magic, expected {MAGIC!r}, found {magic!r}")
    if version != VERSION:
        raise StoreFormatError(f"{source}: unsupported version, expected {VERSION}, found {version}")
    nbytes = count * dim * 4
    end = _HEADER.size + nbytes
    if len(data) < end:
        raise StoreFormatError(f"{source}: payload truncated, expected {nbytes} float bytes, found {len(data) - _HEADER.size}")
    vectors = np.frombuffer(data, dtype="<f4", count=count * dim, offset=_HEADER.size).reshape(count, dim)
    try:
        text = data[end:].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise StoreFormatError(f"{source}: id block is not UTF-8") from exc
    if not text.endswith("\n") and count:
        raise StoreFormatError(f"{source}: id block truncated")
    ids = text.split("\n")[:-1] if text else []
    if len(ids) != count:
        raise StoreFormatError(f"{source}: expected {count} ids, found {len(ids)}")
    if check_unit and count:
        norms = np.linalg.norm(vectors.astype(np.float64), axis=1)
        if np.any(np.abs(norms - 1) > UNIT_TOL):
            raise StoreFormatError(f"{source}: stored vectors are not unit-norm")
    return EmbeddingStore(ids, vectors.copy())


def store_write(path, ids, vectors, check_unit: bool = True) -> None:
    data = encode_store(ids, vectors, check_unit)
    Path(path).write_bytes(data)


def store_read(path, check_unit: bool = True) -> EmbeddingStore:
    path = Path(path)
    return decode_store(path.read_bytes(), check_unit, str(path))


# ---------------------------------------------------------------- typed helpers


def save_bank(path, bank) -> None:
    ids, rows = [], []
    for (pos_label, neg_label), p, n in zip(bank.labels, bank.positives, bank.negatives):
        ids += [f"p:{pos_label}", f"n:{neg_label}"]
        rows += [p, n]
    store_write(path, _dedupe(ids), np.array(rows).reshape(len(rows), bank.dim))


def _dedupe(ids):
    seen, out = {}, []
    for i in ids:
        k = seen.get(i, 0)
        seen[i] = k + 1
        out.append(i if k == 0 else f"{i}#{k}")
    return out


def load_bank(path):
    from .alignment.prompts import PromptBank

    st = store_read(path)
    if len(st) % 2 or not len(st):
        raise StoreFormatError(f"{path}: prompt bank needs a non-zero even number of rows")
    pos, neg, labels = [], [], []
    for k in range(0, len(st), 2):
        a, b = st.ids[k], st.ids[k + 1]
        if not (a.startswith("p:") and b.startswith("n:")):
            raise StoreFormatError(f"{path}: rows must alternate p:<label>, n:<label>")
        pos.append(st.vectors[k])
        neg.append(st.vectors[k + 1])
        labels.append((a[2:], b[2:]))
    return PromptBank(np.array(pos, dtype=np.float64), np.array(neg, dtype=np.float64), labels)


def save_params(path, params) -> None:
    store_write(path, [f"toy-encoder d={params.dim}"], params.flat()[None, :], check_unit=False)


def load_params(path):
    from .alignment.encoder import ToyEncoderParams

    st = store_read(path, check_unit=False)
    if len(st) != 1 or not st.ids[0].startswith("toy-encoder d="):
        raise StoreFormatError(f"{path}: not an encoder parameter file")
    dim = int(st.ids[0].split("=", 1)[1])
    return ToyEncoderParams.from_flat(st.vectors[0].astype(np.float64), dim)
