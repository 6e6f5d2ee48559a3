"""Event text and timestamp features.

The built-in text embedder hashes character n-grams into signed buckets, so it
needs no model download. A precomputed table (e.g. sentence-encoder vectors
keyed by SHA-256 of the text) can replace it.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, MissingEmbedding

_HASH_KEY = b"gldb-ngram-v1"


class EmbedderKind(str, enum.Enum):
    HASHED_NGRAM = "hash"
    PRECOMPUTED = "precomputed"


@dataclass(frozen=True)
class TextEmbedderSpec:
    kind: EmbedderKind = EmbedderKind.HASHED_NGRAM
    dim: int = 384
    ngram_range: tuple[int, int] = (3, 5)
    normalize: bool = True
    table_path: str | None = None

    def __post_init__(self):
        if self.dim < 8:
            raise ValueError("embedding dim must be >= 8")
        lo, hi = self.ngram_range
        if not 1 <= lo <= hi:
            raise ValueError(f"bad ngram_range {self.ngram_range}")
        if self.kind is EmbedderKind.PRECOMPUTED and not self.table_path:
            raise ValueError("precomputed embedder needs a table_path")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "dim": self.dim,
            "ngram_range": list(self.ngram_range),
            "normalize": self.normalize,
            "table_path": self.table_path,
        }

    @classmethod
    def from_dict(cls, d: dict) -> TextEmbedderSpec:
        return cls(
            kind=EmbedderKind(d["kind"]),
            dim=int(d["dim"]),
            ngram_range=tuple(d["ngram_range"]),
            normalize=bool(d["normalize"]),
            table_path=d.get("table_path"),
        )


@dataclass(frozen=True)
class TimeEncodingSpec:
    dim: int = 16
    base_period: float = 10_000.0
    t_ref: int = 0
    scale: float = 86_400.0
    # "coming": while entry n is processed every event is stamped with t_n;
    # "event": each event keeps its own timestamp
    anchor: str = "coming"

    def __post_init__(self):
        if self.dim <= 0 or self.dim % 2:
            raise ValueError("time encoding dim must be a positive even number")
        if self.base_period <= 0 or self.scale <= 0:
            raise ValueError("base_period and scale must be positive")
        if self.anchor not in ("coming", "event"):
            raise ValueError("anchor must be 'coming' or 'event'")

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "base_period": self.base_period,
            "t_ref": self.t_ref,
            "scale": self.scale,
            "anchor": self.anchor,
        }

    @classmethod
    def from_dict(cls, d: dict) -> TimeEncodingSpec:
        return cls(int(d["dim"]), float(d["base_period"]), int(d["t_ref"]), float(d["scale"]), d.get("anchor", "coming"))


def parse_embedder_arg(arg: str, dim: int = 384) -> TextEmbedderSpec:
    """``hash`` or ``precomputed:<path>``."""
    if arg == "hash":
        return TextEmbedderSpec(dim=dim)
    if arg.startswith("precomputed:"):
        return TextEmbedderSpec(kind=EmbedderKind.PRECOMPUTED, dim=dim, table_path=arg.split(":", 1)[1])
    raise ValueError(f"unknown embedder {arg!r}; use hash or precomputed:<path>")


def _ngram_hash(gram: str) -> int:
    return int.from_bytes(hashlib.blake2b(gram.encode("utf-8"), digest_size=8, key=_HASH_KEY).digest(), "little")


def hash_embed(text: str, spec: TextEmbedderSpec) -> np.ndarray:
    """Signed feature hashing of per-word character n-grams.

    Each whitespace-separated word is padded as ``<word>`` and n-grams never
    cross word boundaries, so the vector only depends on the bag of words.
    """
    v = np.zeros(spec.dim)
    lo, hi = spec.ngram_range
    buckets, signs = [], []
    for word in text.split():
        padded = f"<{word}>"
        for n in range(lo, hi + 1):
            for i in range(len(padded) - n + 1):
                h = _ngram_hash(padded[i : i + n])
                buckets.append(h % spec.dim)
                signs.append(-1.0 if h >> 63 else 1.0)
    if buckets:
        np.add.at(v, buckets, signs)
    if spec.normalize:
        norm = np.linalg.norm(v)
        if norm > 0:
            v /= norm
    return v


def text_key(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def load_table(path) -> dict[str, np.ndarray]:
    table = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                table[rec["key"]] = np.asarray(rec["vec"], dtype=np.float64)
    return table


def lookup_embed(key: str, spec: TextEmbedderSpec, table: dict[str, np.ndarray]) -> np.ndarray:
    try:
        vec = table[key]
    except KeyError:
        raise MissingEmbedding(key) from None
    if vec.shape != (spec.dim,):
        raise DimensionMismatch(f"stored vector for {key} has shape {vec.shape}, expected ({spec.dim},)")
    return vec


def time_encode(t: int, spec: TimeEncodingSpec) -> np.ndarray:
    u = (t - spec.t_ref) / spec.scale
    half = spec.dim // 2
    freqs = spec.base_period ** (-2.0 * np.arange(half) / spec.dim)
    out = np.empty(spec.dim)
    out[0::2] = np.sin(u * freqs)
    out[1::2] = np.cos(u * freqs)
    return out


def event_feature(text: str, t: int, tspec: TimeEncodingSpec, espec: TextEmbedderSpec, table=None) -> np.ndarray:
    if espec.kind is EmbedderKind.HASHED_NGRAM:
        txt = hash_embed(text, espec)
    else:
        txt = lookup_embed(text_key(text), espec, table if table is not None else load_table(espec.table_path))
    return np.concatenate([txt, time_encode(t, tspec)])


@dataclass
class EventFeaturizer:
    """Memoising wrapper around :func:`event_feature`."""

    espec: TextEmbedderSpec = field(default_factory=TextEmbedderSpec)
    tspec: TimeEncodingSpec = field(default_factory=TimeEncodingSpec)

    def __post_init__(self):
        self._table = None
        if self.espec.kind is EmbedderKind.PRECOMPUTED:
            self._table = load_table(self.espec.table_path)
        self._text = lru_cache(maxsize=65536)(self._embed_text)

    @property
    def dim(self) -> int:
        return self.espec.dim + self.tspec.dim

    def _embed_text(self, text: str) -> np.ndarray:
        if self._table is None:
            v = hash_embed(text, self.espec)
        else:
            v = lookup_embed(text_key(text), self.espec, self._table)
        v.setflags(write=False)
        return v

    def __call__(self, text: str, t: int) -> np.ndarray:
        return np.concatenate([self._text(text), time_encode(t, self.tspec)])

    def many(self, items) -> np.ndarray:
        rows = [self(text, t) for text, t in items]
        return np.vstack(rows) if rows else np.zeros((0, self.dim))

    def at(self, now: int):
        """Featurizer for the step that processes an entry stamped ``now``."""
        if self.tspec.anchor == "event":
            return self
        tail = time_encode(now, self.tspec)
        return lambda text, t: np.concatenate([self._text(text), tail])

    def with_t_ref(self, t_ref: int) -> EventFeaturizer:
        return EventFeaturizer(self.espec, replace(self.tspec, t_ref=t_ref))
