"""Community-structured synthetic tabular logs.

Objects are partitioned into communities. Every entry picks a community,
draws its objects mostly from it, and writes an event text made of one
signature word per object plus a few generic words of the community. Both the
co-occurrence structure and the text/object agreement are therefore learnable,
which is what a swapped object or event breaks.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..logmodel import AnomalyLabel, AttributeRole, Column, LogEntry, LogSchema

_ALPHABET = np.array(list("abcdefghijklmnopqrstuvwxyz"))


@dataclass(frozen=True)
class SyntheticLogConfig:
    n_entries: int = 2000
    n_objects: int = 200
    n_communities: int = 4
    intra_community_prob: float = 0.9
    objects_per_entry: tuple[int, int] = (2, 4)  # inclusive
    vocab_per_community: int = 30
    generic_words: int = 2
    mean_gap: float = 60.0  # seconds between entries
    start_time: int = 1_700_000_000
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.objects_per_entry
        if not 0.5 < self.intra_community_prob <= 1.0:
            raise ValueError("intra_community_prob must lie in (0.5, 1]")
        if self.n_communities < 1 or self.n_objects < self.n_communities:
            raise ValueError("need at least one object per community")
        if not 1 <= lo <= hi or hi > self.n_objects // self.n_communities:
            raise ValueError(f"bad objects_per_entry {self.objects_per_entry}")
        if self.n_entries < 1:
            raise ValueError("n_entries must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["objects_per_entry"] = list(self.objects_per_entry)
        return d


def synthetic_schema() -> LogSchema:
    return LogSchema(
        columns=(
            Column("ts", AttributeRole.FEATURE),
            Column("message", AttributeRole.EVENT),
            Column("objects", AttributeRole.OBJECT),
        ),
        timestamp_column="ts",
    )


def _words(rng: np.random.Generator, n: int, taken: set[str]) -> list[str]:
    out = []
    while len(out) < n:
        w = "".join(rng.choice(_ALPHABET, size=int(rng.integers(5, 9))))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def community_of(cfg: SyntheticLogConfig, obj_id: int) -> int:
    size = cfg.n_objects // cfg.n_communities
    return min(obj_id // size, cfg.n_communities - 1)


@dataclass(frozen=True)
class SyntheticWorld:
    keys: list[str]  # object id -> key
    signature: list[str]  # object id -> signature word
    vocab: list[list[str]]  # community -> generic words


def make_world(cfg: SyntheticLogConfig, rng: np.random.Generator) -> SyntheticWorld:
    taken: set[str] = set()
    vocab = [_words(rng, cfg.vocab_per_community, taken) for _ in range(cfg.n_communities)]
    signature = _words(rng, cfg.n_objects, taken)
    keys = [f"obj-{i:04d}" for i in rng.permutation(cfg.n_objects)]
    return SyntheticWorld(keys, signature, vocab)


def generate_synthetic(cfg: SyntheticLogConfig | None = None) -> list[LogEntry]:
    """Deterministic under ``cfg.seed``; every entry is labelled normal."""
    cfg = cfg or SyntheticLogConfig()
    rng = np.random.default_rng(cfg.seed)
    world = make_world(cfg, rng)
    size = cfg.n_objects // cfg.n_communities
    members = [
        np.arange(c * size, cfg.n_objects if c == cfg.n_communities - 1 else (c + 1) * size)
        for c in range(cfg.n_communities)
    ]
    lo, hi = cfg.objects_per_entry
    t = cfg.start_time
    log = []
    for n in range(cfg.n_entries):
        c = int(rng.integers(cfg.n_communities))
        k = int(rng.integers(lo, hi + 1))
        chosen: list[int] = []
        while len(chosen) < k:
            if cfg.n_communities == 1 or rng.random() < cfg.intra_community_prob:
                pool = members[c]
            else:
                other = int(rng.integers(cfg.n_communities - 1))
                pool = members[other + (other >= c)]
            o = int(rng.choice(pool))
            if o not in chosen:
                chosen.append(o)
        words = [world.signature[o] for o in chosen]
        words += rng.choice(world.vocab[c], size=cfg.generic_words, replace=False).tolist()
        text = " ".join(rng.permutation(words).tolist())
        keys = tuple(world.keys[o] for o in chosen)
        log.append(
            LogEntry(
                index=n,
                timestamp=t,
                event_text=text,
                objects=keys,
                object_fields={"objects": keys},
                label=AnomalyLabel(0, {k_: 0 for k_ in keys}),
            )
        )
        t += 1 + int(rng.exponential(cfg.mean_gap))
    return log
