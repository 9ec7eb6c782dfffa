"""Hashed bag-of-tokens featurizer and a small siamese projection network."""

from __future__ import annotations

import hashlib
import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .dataio import atomic_write_bytes

_CHUNK = re.compile(r"[^\W_]+")
_CAMEL = re.compile(r"(?<=[a-z0-9])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])")

MODEL_MAGIC = b"RAMD"
MODEL_VERSION = 1
NORM_EPS = 1e-8


def tokenize(text: str) -> list[str]:
    """Lowercased tokens; splits on non-alphanumerics, camelCase and snake_case.

    >>> tokenize("fooBar foo_bar")
    ['foo', 'bar', 'foo', 'bar']
    """
    out = []
    for chunk in _CHUNK.findall(text):
        out.extend(p.lower() for p in _CAMEL.sub(" ", chunk).split())
    return out


def _hash64(token: str, person: bytes) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, person=person).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class Featurizer:
    hash_dim: int = 1024

    def index_sign(self, token: str) -> tuple[int, float]:
        idx = _hash64(token, b"repaug-index") % self.hash_dim
        sign = 1.0 if _hash64(token, b"repaug-sign") & 1 else -1.0
        return idx, sign

    def featurize(self, text: str) -> np.ndarray:
        v = np.zeros(self.hash_dim)
        for tok in tokenize(text):
            idx, sign = self.index_sign(tok)
            v[idx] += sign
        n = np.linalg.norm(v)
        return v / n if n > 0 else v

    def featurize_many(self, texts) -> np.ndarray:
        texts = list(texts)
        out = np.zeros((len(texts), self.hash_dim))
        for i, t in enumerate(texts):
            out[i] = self.featurize(t)
        return out


class EncoderModel:
    """MLP towers ``sizes[0] -> ... -> sizes[-1]`` with tanh between layers.

    With ``shared=True`` (default) queries and items go through the same
    parameters; otherwise each side has its own tower.
    """

    def __init__(self, sizes=(1024, 256, 128), normalize_output: bool = False,
                 shared: bool = True, seed: int = 0):
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"need at least two positive layer sizes, got {sizes}")
        self.sizes = sizes
        self.normalize_output = normalize_output
        self.shared = shared
        rng = np.random.default_rng(seed)
        self.towers = [self._init_tower(rng) for _ in range(1 if shared else 2)]

    def _init_tower(self, rng):
        layers = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            w = Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=True)
            b = Tensor(np.zeros(fan_out), requires_grad=True)
            layers.append((w, b))
        return layers

    @property
    def dim(self) -> int:
        return self.sizes[-1]

    def parameters(self) -> list[Tensor]:
        return [p for tower in self.towers for layer in tower for p in layer]

    def tower(self, side: str):
        if side not in ("query", "item"):
            raise ValueError(f"side must be 'query' or 'item', got {side!r}")
        return self.towers[0 if self.shared or side == "query" else 1]

    def encode(self, features, side: str = "query") -> Tensor:
        """Forward pass for a ``B x sizes[0]`` feature matrix."""
        x = features if isinstance(features, Tensor) else Tensor(features)
        if x.ndim != 2 or x.shape[1] != self.sizes[0]:
            raise ad.ShapeError(f"encoder expects (B, {self.sizes[0]}) features, got {x.shape}")
        layers = self.tower(side)
        for k, (w, b) in enumerate(layers):
            x = x @ w + ad.expand(b, 0, x.shape[0])
            if k < len(layers) - 1:
                x = ad.tanh(x)
        if self.normalize_output:
            x = l2_normalize(x)
        return x

    def embed(self, features, side: str = "query") -> np.ndarray:
        """Inference-only encode returning a plain array."""
        x = np.asarray(features, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.sizes[0]:
            raise ad.ShapeError(f"encoder expects (B, {self.sizes[0]}) features, got {x.shape}")
        layers = self.tower(side)
        for k, (w, b) in enumerate(layers):
            x = x @ w.data + b.data
            if k < len(layers) - 1:
                x = np.tanh(x)
        if self.normalize_output:
            n = np.linalg.norm(x, axis=1, keepdims=True)
            if np.any(n == 0):
                raise ValueError("cannot normalize an all-zero representation")
            x = x / np.maximum(n, NORM_EPS)
        return x

    # ------------------------------------------------------------ persistence

    def state(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.parameters()]

    def load_state(self, arrays):
        params = self.parameters()
        if len(arrays) != len(params):
            raise ValueError(f"expected {len(params)} arrays, got {len(arrays)}")
        for p, a in zip(params, arrays):
            if np.shape(a) != p.shape:
                raise ValueError(f"parameter shape {np.shape(a)} != {p.shape}")
            p.data = np.array(a, dtype=np.float64)

    def to_bytes(self) -> bytes:
        flags = (1 if self.normalize_output else 0) | (0 if self.shared else 2)
        head = struct.pack("<4sHHI", MODEL_MAGIC, MODEL_VERSION, flags, len(self.sizes))
        head += struct.pack(f"<{len(self.sizes)}I", *self.sizes)
        body = b"".join(np.ascontiguousarray(p.data, dtype="<f8").tobytes() for p in self.parameters())
        return head + body

    @classmethod
    def from_bytes(cls, raw: bytes) -> "EncoderModel":
        if len(raw) < 12:
            raise ValueError("model file too short")
        magic, version, flags, n = struct.unpack_from("<4sHHI", raw)
        if magic != MODEL_MAGIC:
            raise ValueError(f"bad model magic {magic!r}")
        if version != MODEL_VERSION:
            raise ValueError(f"unsupported model version {version}")
        sizes = struct.unpack_from(f"<{n}I", raw, 12)
        model = cls(sizes, normalize_output=bool(flags & 1), shared=not flags & 2)
        offset = 12 + 4 * n
        arrays = []
        for p in model.parameters():
            nbytes = p.data.size * 8
            chunk = raw[offset:offset + nbytes]
            if len(chunk) != nbytes:
                raise ValueError("model file truncated")
            arrays.append(np.frombuffer(chunk, dtype="<f8").reshape(p.shape))
            offset += nbytes
        if offset != len(raw):
            raise ValueError("trailing bytes after model parameters")
        model.load_state(arrays)
        return model

    def save(self, path):
        atomic_write_bytes(path, self.to_bytes())

    @classmethod
    def load(cls, path) -> "EncoderModel":
        return cls.from_bytes(Path(path).read_bytes())


def l2_normalize(x: Tensor) -> Tensor:
    """Row-wise x / max(||x||, 1e-8); an exactly-zero row is rejected."""
    norms = ad.sqrt(ad.tensor_sum(ad.square(x), axis=1))
    if np.any(norms.data == 0):
        raise ValueError("cannot normalize an all-zero representation")
    denom = ad.maximum_scalar(norms, NORM_EPS)
    return x * ad.expand(ad.reciprocal(denom), 1, x.shape[1])
