"""Anomaly injection by swapping in objects or event texts from the history."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ..errors import InjectionShortfall, NoHistory
from ..logmodel import AnomalyLabel, LogEntry


class InjectionKind(str, enum.Enum):
    OBJECT_SWAP = "object-swap"
    EVENT_SWAP = "event-swap"


@dataclass(frozen=True)
class InjectionConfig:
    rate: float = 0.05
    kind: InjectionKind = InjectionKind.OBJECT_SWAP
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.rate <= 1:
            raise ValueError("rate must lie in [0, 1]")
        object.__setattr__(self, "kind", InjectionKind(self.kind))

    def to_dict(self) -> dict:
        return {"rate": self.rate, "kind": self.kind.value, "seed": self.seed}


def normal_label(entry: LogEntry) -> AnomalyLabel:
    return AnomalyLabel(0, {o: 0 for o in entry.objects})


def _swap_object(entry: LogEntry, seen: Sequence[str], rng) -> LogEntry:
    present = set(entry.objects)
    pool = [o for o in seen if o not in present]
    if not entry.objects or not pool:
        raise NoHistory(f"entry {entry.index}: no earlier object to swap in")
    pos = int(rng.integers(len(entry.objects)))
    old, new = entry.objects[pos], pool[int(rng.integers(len(pool)))]
    objects = entry.objects[:pos] + (new,) + entry.objects[pos + 1 :]
    fields = {c: tuple(new if o == old else o for o in vals) for c, vals in entry.object_fields.items()}
    label = AnomalyLabel(0, {o: int(o == new) for o in objects})
    return replace(entry, objects=objects, object_fields=fields, label=label)


def _swap_event(entry: LogEntry, texts: Sequence[str], rng) -> LogEntry:
    pool = [t for t in texts if t != entry.event_text]
    if not pool:
        raise NoHistory(f"entry {entry.index}: no earlier event text to swap in")
    new = pool[int(rng.integers(len(pool)))]
    label = AnomalyLabel(1, {o: 0 for o in entry.objects})
    return replace(entry, event_text=new, label=label)


def inject(log: Sequence[LogEntry], cfg: InjectionConfig, start: int = 0) -> list[LogEntry]:
    """Perturb ``ceil(rate * N)`` of the entries ``log[start:]``.

    Entries before ``start`` (the training split) are history only: they can
    donate objects or texts but are never perturbed and keep their labels.
    Every entry from ``start`` on is labelled; untouched ones are all-zero.
    Candidates without history are skipped in favour of the next draw.
    """
    rng = np.random.default_rng(cfg.seed)
    n_test = len(log) - start
    quota = math.ceil(cfg.rate * n_test - 1e-9)
    # distinct history in first-appearance order, per position
    seen_objs: list[str] = []
    seen_set: set[str] = set()
    texts: list[str] = []
    text_set: set[str] = set()
    obj_prefix, text_prefix = [], []
    for e in log:
        obj_prefix.append(len(seen_objs))
        text_prefix.append(len(texts))
        for o in e.objects:
            if o not in seen_set:
                seen_set.add(o)
                seen_objs.append(o)
        if e.event_text not in text_set:
            text_set.add(e.event_text)
            texts.append(e.event_text)

    out = list(log[:start]) + [replace(e, label=normal_label(e)) for e in log[start:]]
    done = 0
    for i in (start + rng.permutation(n_test)).tolist():
        if done == quota:
            break
        e = log[i]
        try:
            if cfg.kind is InjectionKind.OBJECT_SWAP:
                out[i] = _swap_object(e, seen_objs[: obj_prefix[i]], rng)
            else:
                out[i] = _swap_event(e, texts[: text_prefix[i]], rng)
        except NoHistory:
            continue
        done += 1
    if done < quota:
        raise InjectionShortfall(f"injected {done} of {quota} anomalies")
    return out


def truth_vector(entries: Sequence[LogEntry], kind: InjectionKind) -> list[int]:
    """Entry-level ground truth: any swapped object, or a swapped event."""
    kind = InjectionKind(kind)
    out = []
    for e in entries:
        lab = e.label or AnomalyLabel()
        if kind is InjectionKind.OBJECT_SWAP:
            out.append(int(any((lab.object_labels or {}).values())))
        else:
            out.append(int(lab.event_label == 1))
    return out
