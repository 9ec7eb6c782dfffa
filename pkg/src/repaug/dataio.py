"""Corpora, embedding caches and atomic artifact writes."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import struct
import tempfile
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")

CACHE_MAGIC = b"RAEC"
CACHE_VERSION = 1
_CACHE_HEADER = struct.Struct("<4sHII")


class CorpusError(ValueError):
    pass


class CacheFormatError(ValueError):
    pass


def atomic_write_bytes(path, data: bytes):
    """Write to a temp file beside ``path`` and rename over it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


@dataclass
class CorpusRecord:
    id: str
    split: str
    query: str | None = None
    code: str | None = None
    qvec: np.ndarray | None = None
    cvec: np.ndarray | None = None

    @property
    def is_vector(self) -> bool:
        return self.qvec is not None

    def to_json(self) -> dict:
        d: dict = {"id": self.id, "split": self.split}
        if self.is_vector:
            d["qvec"] = [float(x) for x in self.qvec]
            d["cvec"] = [float(x) for x in self.cvec]
        else:
            d["query"] = self.query
            d["code"] = self.code
        return d


def default_split(record_id: str) -> str:
    """80/10/10 split keyed on a stable hash of the id."""
    h = int.from_bytes(hashlib.blake2b(record_id.encode("utf-8"), digest_size=8).digest(), "little")
    bucket = h % 10
    return "train" if bucket < 8 else ("valid" if bucket == 8 else "test")


def _parse_record(obj, lineno: int) -> CorpusRecord:
    if not isinstance(obj, dict):
        raise CorpusError(f"line {lineno}: expected a JSON object")
    has_text = "query" in obj or "code" in obj
    has_vec = "qvec" in obj or "cvec" in obj
    if has_text and has_vec:
        raise CorpusError(f"line {lineno}: record mixes text and vector fields")
    if has_text:
        if not isinstance(obj.get("query"), str) or not isinstance(obj.get("code"), str):
            raise CorpusError(f"line {lineno}: text records need string 'query' and 'code'")
    elif has_vec:
        if "qvec" not in obj or "cvec" not in obj:
            raise CorpusError(f"line {lineno}: vector records need both 'qvec' and 'cvec'")
    else:
        raise CorpusError(f"line {lineno}: record has neither query/code nor qvec/cvec")
    rid = obj.get("id")
    rec = CorpusRecord(id=str(rid) if rid is not None else "", split=obj.get("split") or "")
    if has_text:
        rec.query, rec.code = obj["query"], obj["code"]
    else:
        try:
            rec.qvec = np.asarray(obj["qvec"], dtype=np.float64)
            rec.cvec = np.asarray(obj["cvec"], dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise CorpusError(f"line {lineno}: bad vector: {exc}") from None
        if rec.qvec.ndim != 1 or rec.qvec.shape != rec.cvec.shape:
            raise CorpusError(f"line {lineno}: qvec/cvec must be 1-d with equal length")
    if rec.split and rec.split not in SPLITS:
        raise CorpusError(f"line {lineno}: unknown split {rec.split!r}")
    return rec


def load_corpus(path) -> list[CorpusRecord]:
    """Read a JSON-lines corpus; ids and splits are filled in when absent."""
    records: list[CorpusRecord] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: malformed JSON ({exc.msg})") from None
            records.append(_parse_record(obj, lineno))
    if records and len({r.is_vector for r in records}) > 1:
        raise CorpusError("corpus mixes text records and vector records")
    if records and records[0].is_vector and len({r.qvec.shape for r in records}) > 1:
        raise CorpusError("vector records have inconsistent dimensions")
    seen: set[str] = set()
    for k, rec in enumerate(records):
        if not rec.id:
            rec.id = f"r{k}"
        if rec.id in seen:
            raise CorpusError(f"duplicate record id {rec.id!r}")
        seen.add(rec.id)
        if not rec.split:
            rec.split = default_split(rec.id)
    if records:
        log.info("loaded %s: %s", path, format_split_stats(records))
    return records


def save_corpus(path, records: list[CorpusRecord]):
    lines = [json.dumps(r.to_json(), ensure_ascii=False, sort_keys=True) for r in records]
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def split_stats(records: list[CorpusRecord]) -> dict[str, int]:
    counts = Counter(r.split for r in records)
    return {s: counts.get(s, 0) for s in SPLITS}


def format_split_stats(records: list[CorpusRecord]) -> str:
    st = split_stats(records)
    return "  ".join(f"{s}={st[s]:,}" for s in SPLITS) + f"  total={len(records):,}"


def by_split(records: list[CorpusRecord], split: str) -> list[CorpusRecord]:
    return [r for r in records if r.split == split]


# ---------------------------------------------------------------- synthetic corpus

_SYLLABLES = ("ka", "lo", "mi", "ra", "te", "su", "no", "vi", "da", "pe", "zu", "gor",
              "bel", "tan", "fix", "qu", "wen", "hal", "dor", "ix")


def _vocab(n: int) -> list[str]:
    # pronounceable lowercase words, distinct by construction (base-20 digits)
    words = []
    for k in range(n):
        digits, x = [], k
        for _ in range(3):
            digits.append(_SYLLABLES[x % len(_SYLLABLES)])
            x //= len(_SYLLABLES)
        words.append("".join(reversed(digits)) + (str(x) if x else ""))
    return words


def _camel(tokens: list[str]) -> str:
    return tokens[0] + "".join(t[:1].upper() + t[1:] for t in tokens[1:])


def generate_synthetic_corpus(pairs: int, noise: float = 0.3, seed: int = 0, *,
                              vocab_size: int = 2000, topic_size: int = 8, query_len: int = 5,
                              code_extra: int = 4, zipf: float = 1.1) -> list[CorpusRecord]:
    """Paired query/code texts that share a latent topic.

    Each pair draws ``topic_size`` topic tokens from a Zipf-weighted vocabulary.
    The item ("code") renders every topic token, the query a random subset of
    ``query_len`` of them; each rendered token is independently replaced by a
    random vocabulary token with probability ``noise``. With noise 0 the query
    tokens are a subset of the item tokens; with noise 1 query and item are
    independent. Items also carry ``code_extra`` shared boilerplate tokens so
    that raw lexical overlap is not the whole story.
    """
    if pairs < 1:
        raise ValueError(f"pairs must be >= 1, got {pairs}")
    if not 0.0 <= noise <= 1.0:
        raise ValueError(f"noise must be in [0, 1], got {noise}")
    if query_len > topic_size:
        raise ValueError("query_len cannot exceed topic_size")
    rng = np.random.default_rng(seed)
    vocab = _vocab(vocab_size)
    boiler = ["self", "return", "value", "result", "data", "item", "get", "set"]
    weights = 1.0 / np.arange(1, vocab_size + 1) ** zipf
    weights /= weights.sum()

    def noisy(tokens):
        flip = rng.random(len(tokens)) < noise
        repl = rng.choice(vocab_size, size=len(tokens), p=weights)
        return [vocab[r] if f else t for t, f, r in zip(tokens, flip, repl)]

    records = []
    width = len(str(pairs - 1))
    for k in range(pairs):
        topic = [vocab[t] for t in rng.choice(vocab_size, size=topic_size, p=weights)]
        q_tokens = noisy([topic[i] for i in rng.choice(topic_size, size=query_len, replace=False)])
        c_tokens = noisy(topic)
        extras = [boiler[i] for i in rng.choice(len(boiler), size=code_extra)]
        name = _camel(c_tokens[:3])
        body = " ".join(f"{a}_{b}" for a, b in zip(c_tokens[3::2], c_tokens[4::2]))
        if len(c_tokens[3:]) % 2:
            body += " " + c_tokens[-1]
        code = f"def {name}({extras[0]}):\n    {' '.join(extras[1:])} {body}\n"
        query = " ".join(q_tokens)
        rid = f"syn{k:0{width}d}"
        records.append(CorpusRecord(id=rid, split=default_split(rid), query=query, code=code))
    return records


# ---------------------------------------------------------------- embedding cache

def write_embedding_cache(path, matrix: np.ndarray):
    m = np.asarray(matrix)
    if m.ndim != 2:
        raise ValueError(f"embedding cache holds a matrix, got shape {m.shape}")
    count, dim = m.shape
    if count >= 2**32 or dim >= 2**32:
        raise CacheFormatError("count/dim overflow the u32 header fields")
    payload = np.ascontiguousarray(m, dtype="<f4").tobytes()
    atomic_write_bytes(path, _CACHE_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, count, dim) + payload)


def read_embedding_cache(path, expected_dim: int | None = None) -> np.ndarray:
    """Load a cache as float64 (values are exact f32 widenings)."""
    raw = Path(path).read_bytes()
    if len(raw) < _CACHE_HEADER.size:
        raise CacheFormatError("file shorter than the cache header")
    magic, version, count, dim = _CACHE_HEADER.unpack_from(raw)
    if magic != CACHE_MAGIC:
        raise CacheFormatError(f"bad magic {magic!r}, expected {CACHE_MAGIC!r}")
    if version != CACHE_VERSION:
        raise CacheFormatError(f"unsupported cache version {version}")
    need = count * dim * 4
    payload = raw[_CACHE_HEADER.size:]
    if len(payload) != need:
        raise CacheFormatError(f"payload has {len(payload)} bytes, header implies {need}")
    if expected_dim is not None and dim != expected_dim:
        raise CacheFormatError(f"cache dim {dim} != expected {expected_dim}")
    return np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(count, dim)
